"""Constrained minimization of E over M*(lambda) by projected, preconditioned gradient descent."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .analytic import make_test_function
from .constraints import (
    ConstraintReport,
    ProjectionError,
    check_admissible,
    constraint_report,
    normalize_volume,
    project_to_Mstar,
    scaling_root,
)
from .spectral import TorusGrid

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    max_iters: int = 20000
    el_residual_tol: float = 1e-6
    initial_step: float = 1e-2
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    min_step: float = 1e-12
    # "sobolev": steepest descent in the (P + sigma)-metric; "l2": plain L^2 gradient
    metric: str = "sobolev"
    # retraction may scale the mean-zero part by up to this factor
    retraction_t_max: float = 64.0
    max_step: float = 1e6

    def __post_init__(self):
        for name in ("max_iters", "el_residual_tol", "initial_step", "armijo_c", "min_step",
                     "retraction_t_max", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver option {name} must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.metric not in ("sobolev", "l2"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class MinimizerResult:
    u: np.ndarray
    lam: float
    alpha: float
    beta: float
    el_residual: float
    iterations: int
    converged: bool
    constraints: ConstraintReport
    message: str = ""
    max_tangency_defect: float = 0.0
    max_energy_increase: float = 0.0
    history: list = field(default_factory=list, repr=False)


def f_lambda_of(f0: np.ndarray, lam: float) -> np.ndarray:
    return f0 + lam


def extract_alpha(u, f_lambda, grid: TorusGrid, Pf0: np.ndarray | None = None) -> float:
    """alpha = int u P f0 / int f_lambda^2 e^{nu} (P annihilates the constant lambda)."""
    u = grid.check(u)
    f = grid.check(f_lambda, "f_lambda")
    if Pf0 is None:
        Pf0 = sp.apply_gjms(f, grid)
    w, shift = sp.exp_moments(u, grid.n)
    den = float(np.sum(f * f * w)) * grid.cell_measure * math.exp(shift)
    if not den >= 1e-300:
        raise ValueError(f"vanishing denominator int f^2 e^(nu) = {den:.3e}")
    return sp.inner(grid, u, Pf0) / den


def el_residual(u, alpha: float, f_lambda, grid: TorusGrid, Pu: np.ndarray | None = None) -> float:
    """||P u - alpha f e^{nu}|| / max(||alpha f e^{nu}||, 1e-30), measure-weighted L^2."""
    u = grid.check(u)
    if Pu is None:
        Pu = sp.apply_gjms(u, grid)
    w, shift = sp.exp_moments(u, grid.n)
    rhs = alpha * f_lambda * w * math.exp(shift)
    num = math.sqrt(sp.inner(grid, Pu - rhs, Pu - rhs))
    den = math.sqrt(sp.inner(grid, rhs, rhs))
    return num / max(den, 1e-30)


def seed_field(f0, lam: float, grid: TorusGrid, delta: float = 0.1, s: float | None = None,
               t_max: float = 64.0) -> np.ndarray:
    """Projected test function centred at the first grid maximum of f0, s = lam^{-1/2}."""
    f0 = grid.check(f0, "f0")
    idx = np.unravel_index(int(np.argmax(f0)), grid.shape)
    x0 = np.array(idx, dtype=float) * grid.h
    s = max(lam ** -0.5, 1.0) if s is None else s
    phi = make_test_function(x0, s, delta, grid)
    return project_to_Mstar(phi, f_lambda_of(f0, lam), grid, t_max=t_max)


class _Problem:
    """Per-lambda solver state and the Fourier-space pieces reused across iterations."""

    def __init__(self, f0, lam, grid: TorusGrid, opts: SolverOptions):
        self.grid = grid
        self.n = grid.n
        self.f = f0 + lam
        self.opts = opts
        self.Pf0 = sp.apply_gjms(f0, grid)
        m = grid.symbol
        # rfftn keeps one bin per conjugate pair; weights turn sums into full-spectrum sums
        wts = np.full(m.shape[-1], 2.0)
        wts[0] = 1.0
        wts[-1] = 1.0
        self.wts = np.broadcast_to(wts, m.shape)
        self.norm = grid.cell_measure / grid.size  # <a, b> = norm * sum wts conj(ah) bh
        if opts.metric == "sobolev":
            sigma = (2.0 * np.pi) ** self.n
            self.K = 1.0 / (m + sigma)
        else:
            self.K = np.ones_like(m)
        self.Kinv = 1.0 / self.K

    def fourier_inner(self, ah, bh, mult=None) -> float:
        prod = (ah.conj() * bh).real * self.wts
        if mult is not None:
            prod = prod * mult
        return float(np.sum(prod)) * self.norm

    def energy_h(self, uh) -> float:
        return sp._parseval_energy(self.grid, uh)

    def state(self, u):
        g = self.grid
        uh = sp.forward(g, u)
        Pu = sp.inverse(g, uh * g.symbol)
        w = np.exp(self.n * u)
        return uh, Pu, w

    def alpha(self, u, w) -> float:
        den = float(np.sum(self.f * self.f * w)) * self.grid.cell_measure
        return sp.inner(self.grid, u, self.Pf0) / den

    def residual(self, Pu, w, alpha) -> float:
        rhs = alpha * self.f * w
        diff = Pu - rhs
        return math.sqrt(float(np.sum(diff * diff)) / max(float(np.sum(rhs * rhs)), 1e-60))

    def direction(self, uh, w):
        """Preconditioned gradient made tangent to both constraints."""
        g = self.grid
        m = g.symbol
        c1h = sp.forward(g, self.f * w)
        c2h = sp.forward(g, w)
        gEh = 2.0 * m * uh
        K = self.K
        G = np.array([
            [self.fourier_inner(c1h, c1h, K), self.fourier_inner(c1h, c2h, K)],
            [self.fourier_inner(c2h, c1h, K), self.fourier_inner(c2h, c2h, K)],
        ])
        rhs = np.array([self.fourier_inner(c1h, gEh, K), self.fourier_inner(c2h, gEh, K)])
        coef = np.linalg.solve(G, rhs)
        gradh = gEh - coef[0] * c1h - coef[1] * c2h  # L^2 projected gradient
        dh = K * gradh
        # one pass of iterative refinement; G is ill-conditioned once f ~ lambda on the bubble
        drift = np.array([self.fourier_inner(c1h, dh), self.fourier_inner(c2h, dh)])
        corr = np.linalg.solve(G, drift)
        gradh = gradh - corr[0] * c1h - corr[1] * c2h
        dh = K * gradh
        d = sp.inverse(g, dh)
        # tangency: <c_i, d> relative to ||c_i|| ||d||
        nd = math.sqrt(max(self.fourier_inner(dh, dh), 1e-300))
        defect = 0.0
        for ch in (c1h, c2h):
            nc = math.sqrt(max(self.fourier_inner(ch, ch), 1e-300))
            defect = max(defect, abs(self.fourier_inner(ch, dh)) / (nc * nd))
        slope = self.fourier_inner(gEh, dh)
        return d, dh, gradh, slope, defect


def minimize(f0, lam: float, grid: TorusGrid, u_init=None, opts: SolverOptions | None = None,
             record_history: bool = False) -> MinimizerResult:
    """Minimize E(u) = int u P u over M*(lambda) with f_lambda = f0 + lambda."""
    opts = opts or SolverOptions()
    f0 = grid.check(f0, "f0")
    adm = check_admissible(f0, grid)
    if not adm.admissible:
        raise ValueError(f"profile is not admissible: {adm}")
    if not 0 < lam < adm.lambda_max:
        raise ValueError(f"lambda={lam} outside (0, {adm.lambda_max:.6g})")
    prob = _Problem(f0, lam, grid, opts)
    if u_init is None:
        u = seed_field(f0, lam, grid, t_max=opts.retraction_t_max)
    else:
        u = project_to_Mstar(u_init, prob.f, grid, t_max=opts.retraction_t_max)

    uh, Pu, w = prob.state(u)
    E = prob.energy_h(uh)
    tau = opts.initial_step
    prev = None  # (u, projected gradient) for Barzilai-Borwein steps
    max_defect = 0.0
    max_increase = 0.0
    history = []
    message = "iteration limit reached"
    converged = False
    it = 0
    while True:
        alpha = prob.alpha(u, w)
        res = prob.residual(Pu, w, alpha)
        if record_history:
            history.append((it, E, alpha, res, tau))
        if res <= opts.el_residual_tol:
            converged = True
            message = "converged"
            break
        if it >= opts.max_iters:
            break
        d, dh, gradh, slope, defect = prob.direction(uh, w)
        max_defect = max(max_defect, defect)
        if slope <= 0:
            message = "non-descent direction"
            break
        if prev is not None:
            s_h = uh - prev[0]
            s_h[(0,) * grid.n] = 0.0
            y_h = gradh - prev[1]
            sy = prob.fourier_inner(s_h, y_h)
            if sy > 0:
                if it % 2:
                    tau = prob.fourier_inner(s_h, s_h, prob.Kinv) / sy
                else:
                    tau = sy / prob.fourier_inner(y_h, y_h, prob.K)
            tau = min(max(tau, opts.min_step), opts.max_step)
        Edd = prob.energy_h(dh)
        uP_d = 0.5 * slope  # <P u, d>
        vbase = u - u.mean()
        dbase = d - d.mean()
        accepted = False
        while tau >= opts.min_step:
            v = vbase - tau * dbase
            E_trial_lin = E - 2.0 * tau * uP_d + tau * tau * Edd
            try:
                t = scaling_root(v, prob.f, grid, t_max=opts.retraction_t_max)
            except ProjectionError:
                tau *= opts.step_shrink
                continue
            E_new = t * t * E_trial_lin
            if E_new <= E - opts.armijo_c * tau * slope:
                accepted = True
                break
            tau *= opts.step_shrink
        if not accepted:
            message = "restoration-dominated regime: step size fell below min_step"
            log.warning("lambda=%.6g: %s at iteration %d (residual %.3e)", lam, message, it, res)
            break
        prev = (uh, gradh)
        u = normalize_volume(t * v, grid)
        uh, Pu, w = prob.state(u)
        E_exact = prob.energy_h(uh)
        max_increase = max(max_increase, (E_exact - E) / max(E, 1e-300))
        E = E_exact
        it += 1

    report = constraint_report(u, prob.f, grid)
    beta = sp.energy(u, grid)
    if converged and not report.passed:
        log.warning("lambda=%.6g: converged iterate fails the constraint report %s", lam, report)
    return MinimizerResult(
        u=u, lam=lam, alpha=alpha, beta=beta, el_residual=res, iterations=it,
        converged=converged, constraints=report, message=message,
        max_tangency_defect=max_defect, max_energy_increase=max_increase, history=history,
    )
