"""Fast invariant suites across all modules, run by ``qcrv verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .analytic import (
    ProfileSpec,
    bubble_constant,
    make_profile,
    make_test_function,
    radial_bubble_mass,
    sphere_volume,
    standard_bubble,
    verify_bubble_pde,
)
from .bubble import RescaledProfile, fit_standard_bubble, select_radius
from .constraints import check_admissible, constraint_report, project_to_Mstar, scaling_root
from .minimizer import minimize


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def spectral_suite(rng):
    out = []
    for n, N in ((2, 8), (2, 16), (4, 8)):
        g = sp.TorusGrid(n, N)
        errs = [_rel(sp.apply_gjms(u, g), sp.apply_gjms_dense(u, g))
                for u in rng.standard_normal((5,) + g.shape)]
        out.append(CheckResult("spectral_core", f"oracle n={n} N={N}", max(errs) <= 1e-10, f"{max(errs):.2e}"))
    g = sp.TorusGrid(2, 16)
    u, v = rng.standard_normal((2,) + g.shape)
    Pu, Pv = sp.apply_gjms(u, g), sp.apply_gjms(v, g)
    gap = abs(sp.inner(g, Pu, v) - sp.inner(g, u, Pv))
    bound = 1e-10 * math.sqrt(sp.inner(g, u, u) * sp.inner(g, v, v)) * g.max_symbol
    out.append(CheckResult("spectral_core", "self-adjoint", gap <= bound, f"{gap:.2e}"))
    E = sp.energy(u, g)
    out.append(CheckResult("spectral_core", "positivity", E > 0 and abs(sp.energy(g.constant(3.0), g)) <= 1e-12))
    out.append(CheckResult("spectral_core", "shift invariance", abs(sp.energy(u + 7.0, g) - E) <= 1e-10 * E))
    out.append(CheckResult("spectral_core", "homogeneity", abs(sp.energy(2.5 * u, g) - 6.25 * E) <= 1e-12 * 6.25 * E))
    return out


def constraint_suite(rng):
    g = sp.TorusGrid(2, 32)
    prof = make_profile(ProfileSpec(), g)
    f = prof.values + 0.5
    phi = make_test_function((0.0, 0.0), 30.0, 0.1, g)
    v = phi - phi.mean()
    t = scaling_root(v, f, g)
    t_scaled = scaling_root(v, 3.0 * f, g)
    u1 = project_to_Mstar(phi, f, g)
    u2 = project_to_Mstar(u1, f, g)
    e_ratio = sp.energy(u1, g) / (t * t * sp.energy(phi, g))
    return [
        CheckResult("constraints", "admissible profile", check_admissible(prof.values, g).admissible),
        CheckResult("constraints", "scale invariance of root", abs(t - t_scaled) <= 1e-12, f"{abs(t - t_scaled):.1e}"),
        CheckResult("constraints", "projection lands in M*", constraint_report(u1, f, g).passed),
        CheckResult("constraints", "projection idempotent", float(np.max(np.abs(u1 - u2))) <= 1e-9),
        CheckResult("constraints", "energy after projection", abs(e_ratio - 1.0) <= 1e-10, f"{e_ratio - 1:.1e}"),
    ]


def analytic_suite(rng):
    out = []
    for n, C in ((2, 4 * math.pi), (4, 16 * math.pi**2)):
        bc = bubble_constant(n)
        out.append(CheckResult("analytic_refs", f"C_{n}", bool(abs(bc.C - C) <= 1e-12 * C
                               and abs(bc.sphere_volume - sphere_volume(n)) <= 1e-12 * bc.sphere_volume)))
        mass = radial_bubble_mass(1.0, n)
        out.append(CheckResult("analytic_refs", f"bubble mass n={n}", bool(abs(mass - 1.0) <= 1e-8), f"{mass - 1:.1e}"))
    res = verify_bubble_pde(1.0)
    out.append(CheckResult("analytic_refs", "bubble PDE residual", res <= 1e-6, f"{res:.1e}"))
    g = sp.TorusGrid(2, 64)
    phi = make_test_function((0.3, 0.6), 10.0, 0.1, g)
    d = g.periodic_distance((0.3, 0.6)).ravel()
    order = np.argsort(d, kind="stable")
    mono = bool(np.all(np.diff(phi.ravel()[order]) <= 1e-12))
    out.append(CheckResult("analytic_refs", "test function monotone", mono))
    return out


def minimizer_suite(rng):
    g = sp.TorusGrid(2, 32)
    prof = make_profile(ProfileSpec(), g)
    res = minimize(prof.values, 0.5 * prof.lambda_max, g)
    return [
        CheckResult("minimizer", "converges", res.converged, f"residual {res.el_residual:.1e}"),
        CheckResult("minimizer", "alpha, beta positive", res.alpha >= 1e-8 and res.beta >= 1e-10),
        CheckResult("minimizer", "constraints", res.constraints.passed),
        CheckResult("minimizer", "tangency", res.max_tangency_defect <= 1e-10, f"{res.max_tangency_defect:.1e}"),
    ]


def bubble_suite(rng):
    out = []
    R, m = 6.0, 48
    ticks = -R + (np.arange(m) + 0.5) * (2 * R / m)
    z = np.stack(np.meshgrid(ticks, ticks, indexing="ij"), axis=-1)
    s, z0 = 0.1 + 9.9 * rng.random(), rng.uniform(-2, 2, 2)
    prof = RescaledProfile(z, standard_bubble(s, z0, z), R, m, 2, 0.0, 0.0)
    fit = fit_standard_bubble(prof)
    err = max(abs(fit.s - s), float(np.max(np.abs(fit.z0 - z0))))
    out.append(CheckResult("bubble_lens", "exact bubble recovery", err <= 1e-6, f"{err:.1e}"))
    g = sp.TorusGrid(2, 64)
    u = g.constant(0.0)
    sel = select_radius(u, g)
    target = math.sqrt(1.0 / (8.0 * math.pi))
    out.append(CheckResult("bubble_lens", "uniform radius", abs(sel.radius - target) <= 1e-3, f"{sel.radius:.6f}"))
    return out


SUITES = (spectral_suite, constraint_suite, analytic_suite, minimizer_suite, bubble_suite)


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for suite in SUITES:
        results.extend(suite(rng))
    return results
