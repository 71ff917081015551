"""Concentration diagnostics: mass-1/8 balls, rescaling to bubble coordinates, bubble fits."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import spectral as sp
from .analytic import bubble_offset, standard_bubble
from .continuation import CheckReport
from .spectral import TorusGrid

log = logging.getLogger(__name__)

MASS_TOL = 1e-6
CHART_RADIUS = 0.25


class NoConcentration(ValueError):
    """The mass target needs a ball that no longer fits in the torus chart."""


@dataclass
class ConcentrationSelection:
    center: np.ndarray
    radius: float
    achieved_mass: float
    center_index: tuple
    rounds: int = 1
    bisection_steps: int = 0
    second_cluster: bool = False


@dataclass
class RescaledProfile:
    z: np.ndarray  # lattice points, shape (m,)*n + (n,)
    values: np.ndarray  # u(x + r z) + log r
    R: float
    m: int
    n: int
    window_mass: float  # lattice estimate of the unit-ball mass
    ball_mass: float

    @property
    def cell(self) -> float:
        return (2.0 * self.R / self.m) ** self.n

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.n * self.values)

    @property
    def mass_consistent(self) -> bool:
        return abs(self.window_mass - self.ball_mass) <= 0.02 * self.ball_mass


@dataclass
class BubbleFit:
    s: float
    z0: np.ndarray
    linf_residual: float
    rms_residual: float
    R_fit: float
    iterations: int = 0
    converged: bool = True


def _ramp(dist, r, width):
    # fraction of a width-wide ramp inside radius r: continuous, non-decreasing in r
    return np.clip((r - dist) / width + 0.5, 0.0, 1.0)


class _Interpolant:
    """Periodic cubic B-spline interpolant of a grid field (prefiltered once)."""

    def __init__(self, u, grid: TorusGrid):
        self.grid = grid
        self.coef = ndimage.spline_filter(u, order=3, mode="grid-wrap")

    def __call__(self, points) -> np.ndarray:
        """Evaluate at torus points with coordinates on the last axis."""
        pts = np.asarray(points, dtype=float)
        coords = [pts[..., a] / self.grid.h for a in range(self.grid.n)]
        return ndimage.map_coordinates(self.coef, coords, order=3, mode="grid-wrap", prefilter=False)


def _unit_ball_lattice(n: int, q: int):
    ticks = -1.0 + (np.arange(q) + 0.5) * (2.0 / q)
    z = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
    w = _ramp(np.sqrt(np.sum(z * z, axis=1)), 1.0, 2.0 / q)
    keep = w > 0
    # rescale so the weights integrate the unit ball volume exactly
    vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    w = w[keep] * vol / (np.sum(w[keep]) * (2.0 / q) ** n)
    return z[keep], w * (2.0 / q) ** n


class BallMass:
    """M(r) = int_{|y| <= r} e^{n u(x + y)} dy by quadrature of the spline interpolant.

    The quadrature lattice is scaled with r, so M is continuous in r and
    agrees with the lattice mass of a rescaled profile.
    """

    def __init__(self, u, grid: TorusGrid, points_per_axis: int | None = None):
        self.grid = grid
        self.interp = _Interpolant(u, grid)
        self.q = points_per_axis or (96 if grid.n == 2 else 20)

    def __call__(self, center, r: float) -> float:
        n = self.grid.n
        # never sample coarser than the grid itself
        q = max(self.q, int(math.ceil(4.0 * r / self.grid.h)))
        z, w = _unit_ball_lattice(n, q)
        vals = self.interp(np.asarray(center) + r * z)
        return float(r**n * np.sum(w * np.exp(n * vals)))


def ball_mass(u, grid: TorusGrid, center, r: float) -> float:
    return BallMass(grid.check(u), grid)(center, r)


def _ball_mass_all_centers(density, grid: TorusGrid, r: float) -> np.ndarray:
    """Grid-sum ball mass around every grid point at once (periodic convolution)."""
    kernel = _ramp(grid.periodic_distance(np.zeros(grid.n)), r, grid.h)
    conv = sp.inverse(grid, sp.forward(grid, density) * sp.forward(grid, kernel))
    return conv * grid.cell_measure


def _solve_radius(mass_fn, center, mass, h):
    lo, hi = 0.0, CHART_RADIUS
    if mass_fn(center, hi) < mass:
        raise NoConcentration(
            f"mass {mass} needs a ball of radius >= {CHART_RADIUS}: no concentration at this lambda"
        )
    steps = 0
    while True:
        steps += 1
        r = 0.5 * (lo + hi)
        m = mass_fn(center, r)
        if abs(m - mass) <= MASS_TOL or hi - lo < 1e-15:
            break
        if m < mass:
            lo = r
        else:
            hi = r
    if r < 0.5 * h:
        log.warning("selected radius %.3g is below half a grid cell: concentration is not resolved", r)
    return r, m, steps


def select_radius(u, grid: TorusGrid, mass: float = 0.125, max_rounds: int = 5,
                  candidates: int = 5) -> ConcentrationSelection:
    """Centre at the grid argmax of u, then bisect for the ball radius carrying ``mass``.

    Verification pass: grid centres within 2r are ranked by their grid-sum
    ball mass and the best ``candidates`` are re-evaluated exactly; if one
    holds more mass at the same radius the search re-centres there (at most
    ``max_rounds`` rounds).
    """
    if not 0.0 < mass < 0.5:
        raise ValueError(f"target mass must lie in (0, 1/2), got {mass}")
    u = grid.check(u)
    density = np.exp(grid.n * u)
    vol = float(np.sum(density)) * grid.cell_measure
    if abs(vol - 1.0) > 1e-8:
        raise ValueError(f"u must have unit conformal volume, int e^(nu) = {vol:.12g}")
    mass_fn = BallMass(u, grid)
    idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(u)), grid.shape))
    total_steps = 0
    for rounds in range(1, max_rounds + 1):
        center = np.array(idx, dtype=float) * grid.h
        r, m, steps = _solve_radius(mass_fn, center, mass, grid.h)
        total_steps += steps
        masses = _ball_mass_all_centers(density, grid, max(r, grid.h))
        near = grid.periodic_distance(center) <= 2.0 * max(r, grid.h)
        cand = np.where(near, masses, -np.inf).ravel()
        order = np.argsort(cand)[::-1][:candidates]
        best_idx, best_mass = idx, m
        for flat in order:
            if not np.isfinite(cand[flat]):
                break
            j = tuple(int(i) for i in np.unravel_index(int(flat), grid.shape))
            if j == idx:
                continue
            mj = mass_fn(np.array(j, dtype=float) * grid.h, r)
            if mj > best_mass * (1.0 + 1e-9):
                best_idx, best_mass = j, mj
        if best_idx == idx:
            break
        idx = best_idx
    # a second well-separated cluster holding the target mass is reported, not adjudicated
    far = grid.periodic_distance(center) > 4.0 * max(r, grid.h)
    second = bool(np.any(np.where(far, masses, 0.0) >= mass))
    if second:
        log.warning("a second mass cluster >= %.3g found away from the selected centre", mass)
    return ConcentrationSelection(center=center, radius=r, achieved_mass=m, center_index=idx,
                                  rounds=rounds, bisection_steps=total_steps, second_cluster=second)


def rescale(u, grid: TorusGrid, sel: ConcentrationSelection, R: float, m: int) -> RescaledProfile:
    """Sample ``u(x + r z) + log r`` on a cell-centred m^n lattice over [-R, R]^n.

    Interpolation is a periodic cubic B-spline (error O(h^4) for smooth u).
    """
    r = sel.radius
    if r * R > CHART_RADIUS:
        raise ValueError(f"window r*R = {r * R:.4g} exceeds the torus chart radius {CHART_RADIUS}")
    u = grid.check(u)
    n = grid.n
    ticks = -R + (np.arange(m) + 0.5) * (2.0 * R / m)
    z = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1)
    vals = _Interpolant(u, grid)(sel.center + r * z) + math.log(r)
    cell = (2.0 * R / m) ** n
    inside = _ramp(np.sqrt(np.sum(z * z, axis=-1)), 1.0, 2.0 * R / m)
    window_mass = float(np.sum(np.exp(n * vals) * inside)) * cell
    prof = RescaledProfile(z=z, values=vals, R=R, m=m, n=n, window_mass=window_mass, ball_mass=sel.achieved_mass)
    if not prof.mass_consistent:
        log.warning("rescaled unit-ball mass %.4g differs from the ball mass %.4g by more than 2%%",
                    window_mass, sel.achieved_mass)
    return prof


def _initial_guess(z, vals, n, cell):
    dens = np.exp(n * (vals - vals.max()))
    wsum = dens.sum()
    z0 = np.tensordot(dens, z, axes=(tuple(range(n)), tuple(range(n)))) / wsum
    # half-maximum region of the density is a ball of radius s * sqrt(2^{1/n} - 1)
    half = float(np.count_nonzero(dens >= 0.5)) * cell
    unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    rho = (half / unit_ball) ** (1.0 / n)
    s = max(rho / math.sqrt(2.0 ** (1.0 / n) - 1.0), 1e-6)
    return s, z0


def fit_standard_bubble(profile: RescaledProfile, max_iters: int = 200, tol: float = 1e-14,
                        R_fit: float | None = None, s0: float | None = None, z00=None) -> BubbleFit:
    """Fit ``offset + log(2s/(s^2 + |z - z0|^2))`` to the profile by Levenberg-damped Gauss-Newton.

    The additive constant is pinned by unit volume; (log s, z0) are free.
    Residuals are reported on |z| <= R_fit (default R/2).
    """
    n = profile.n
    z = profile.z.reshape(-1, n)
    y = profile.values.ravel()
    R_fit = profile.R / 2.0 if R_fit is None else R_fit
    g_s, g_z0 = _initial_guess(profile.z, profile.values, n, profile.cell)
    s = g_s if s0 is None else s0
    z0 = g_z0 if z00 is None else np.asarray(z00, dtype=float)
    c = bubble_offset(n)
    p = np.concatenate([[math.log(s)], z0])

    def resid(p):
        s = math.exp(p[0])
        diff = z - p[1:]
        q = s * s + np.sum(diff * diff, axis=1)
        return y - (c + math.log(2.0 * s) - np.log(q)), diff, q, s

    r, diff, q, s_cur = resid(p)
    cost = float(r @ r)
    mu = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # d model / d log s = 1 - 2 s^2 / q ; d model / d z0 = 2 (z - z0) / q
        J = np.empty((len(y), n + 1))
        J[:, 0] = -(1.0 - 2.0 * s_cur * s_cur / q)
        J[:, 1:] = -2.0 * diff / q[:, None]
        A = J.T @ J
        g = J.T @ r
        improved = False
        while mu < 1e16:
            step = np.linalg.solve(A + mu * np.diag(np.diag(A) + 1e-300), -g)
            p_new = p + step
            r_new, diff_new, q_new, s_new = resid(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = True
                break
            mu *= 10.0
        if not improved:
            converged = True  # no damped step lowers the cost: stationary to round-off
            break
        small = np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(p))
        p, r, diff, q, s_cur, cost = p_new, r_new, diff_new, q_new, s_new, cost_new
        mu = max(mu / 10.0, 1e-15)
        if small or cost == 0.0:
            converged = True
            break
    if not converged or not np.all(np.isfinite(p)):
        return BubbleFit(s=float("nan"), z0=np.full(n, np.nan), linf_residual=math.inf,
                         rms_residual=math.inf, R_fit=R_fit, iterations=it, converged=False)
    s = math.exp(p[0])
    z0 = p[1:].copy()
    mask = np.sum(z * z, axis=1) <= R_fit * R_fit
    err = np.abs(y - standard_bubble(s, z0, z, n))[mask]
    return BubbleFit(s=s, z0=z0, linf_residual=float(err.max()), rms_residual=float(np.sqrt(np.mean(err**2))),
                     R_fit=R_fit, iterations=it, converged=True)


def flatness_diagnostics(lams, radii, centers, max_points, l: int, slack: float = 0.10) -> CheckReport:
    """Sequences r^l / lambda and dist(x, P)^l / lambda over records at decreasing lambda.

    Passes when both stay bounded and neither trends upward over the last three
    records (each value at most (1 + slack) times its predecessor).
    """
    lams = np.asarray(lams, dtype=float)
    if len(lams) < 3:
        return CheckReport("flatness", "inconclusive", "needs >= 3 records with selections")
    radii = np.asarray(radii, dtype=float)
    dists = []
    for x in centers:
        x = np.asarray(x, dtype=float)
        best = math.inf
        for P in max_points:
            d = np.abs(x - np.asarray(P)) % 1.0
            best = min(best, float(np.sqrt(np.sum(np.minimum(d, 1.0 - d) ** 2))))
        dists.append(best)
    dists = np.array(dists)
    r_ratio = radii**l / lams
    d_ratio = dists**l / lams

    def no_upward(seq):
        tail = seq[-3:]
        return bool(np.all(np.isfinite(tail))) and all(b <= a * (1.0 + slack) + 1e-300 for a, b in zip(tail[:-1], tail[1:]))

    ok = no_upward(r_ratio) and no_upward(d_ratio)
    detail = (f"r^l/lambda last three {np.array2string(r_ratio[-3:], precision=4)}, "
              f"dist^l/lambda last three {np.array2string(d_ratio[-3:], precision=4)}")
    return CheckReport("flatness", "pass" if ok else "fail", detail, {
        "r_ratio": r_ratio.tolist(), "dist_ratio": d_ratio.tolist(),
        "bound_r": float(np.max(r_ratio)), "bound_dist": float(np.max(d_ratio)),
    })
