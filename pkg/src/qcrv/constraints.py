"""Admissible profiles, the constraint sets M(lambda) / M*(lambda), and the scaling projection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .spectral import TorusGrid, exp_moments

G1_RTOL = 1e-10  # |int f e^{nu}| relative to ||f||_inf
G2_TOL = 1e-12  # |int e^{nu} - 1|
ROOT_RTOL = 1e-12
ROOT_XTOL = 1e-14


class ProjectionError(ValueError):
    """Raised when a field cannot be scaled onto the constraint set."""


@dataclass(frozen=True)
class ProfileAdmissibility:
    is_nonpositive: bool
    attains_zero: bool
    nonzero: bool
    mean_f0: float
    lambda_max: float

    @property
    def admissible(self) -> bool:
        return self.is_nonpositive and self.attains_zero and self.nonzero and self.lambda_max > 0


@dataclass(frozen=True)
class ConstraintReport:
    g1: float
    g2: float
    g1_tol: float
    g2_tol: float

    @property
    def passed(self) -> bool:
        return abs(self.g1) <= self.g1_tol and abs(self.g2 - 1.0) <= self.g2_tol


def check_admissible(f0, grid: TorusGrid, atol: float = 1e-14) -> ProfileAdmissibility:
    f0 = grid.check(f0, "f0")
    scale = max(float(np.max(np.abs(f0))), 1.0)
    mean = float(np.sum(f0) * grid.cell_measure)
    return ProfileAdmissibility(
        is_nonpositive=bool(np.all(f0 <= atol * scale)),
        attains_zero=bool(np.any(np.abs(f0) <= atol * scale)),
        nonzero=bool(np.any(np.abs(f0) > atol * scale)),
        mean_f0=mean,
        lambda_max=-mean,
    )


def constraint_report(u, f_lambda, grid: TorusGrid) -> ConstraintReport:
    w, shift = exp_moments(grid.check(u), grid.n)
    scale = math.exp(shift)
    g1 = float(np.sum(f_lambda * w)) * grid.cell_measure * scale
    g2 = float(np.sum(w)) * grid.cell_measure * scale
    return ConstraintReport(g1, g2, G1_RTOL * float(np.max(np.abs(f_lambda))), G2_TOL)


class _ScaledMoment:
    """phi(t) = int f e^{n t v}, reported normalized by int e^{n t v}.

    The normalized value is exactly g1 after volume normalization, so root
    tolerances apply to what the constraint report later sees.
    """

    def __init__(self, v: np.ndarray, f: np.ndarray, n: int):
        self.v = v
        self.f = f
        self.n = n
        self.vmax = float(v.max())

    def __call__(self, t: float) -> float:
        w = np.exp(self.n * t * (self.v - self.vmax))
        return float(np.sum(self.f * w) / np.sum(w))


def scaling_root(u, f_lambda, grid: TorusGrid, t_max: float = 1.0) -> float:
    """Find t with int f e^{n t u} = 0, bracketed between 0 and ``t_max``.

    Requires int f < 0.  With the default ``t_max = 1`` this is the continuity
    trick proper: int f e^{n u} >= 0 is required and t lies in (0, 1].  Larger
    ``t_max`` lets callers concentrate a field that has slipped to the
    negative side (the bracket is doubled up to ``t_max``).
    """
    u = grid.check(u)
    f = grid.check(f_lambda, "f_lambda")
    tol = ROOT_RTOL * float(np.max(np.abs(f)))
    phi = _ScaledMoment(u, f, grid.n)
    phi0 = float(np.mean(f))
    if phi0 >= 0:
        raise ProjectionError(f"int f_lambda = {phi0:.3e} must be negative for the scaling trick")
    phi1 = phi(1.0)
    if abs(phi1) <= tol:
        return 1.0
    hi = 1.0
    if phi1 < 0:
        if t_max <= 1.0:
            raise ProjectionError(
                f"int f_lambda e^(nu) = {phi1:.3e} < 0: no sign change on (0, 1]; "
                "concentrate u further before projecting"
            )
        while phi(hi) < 0:
            hi *= 2.0
            if hi > t_max:
                raise ProjectionError(f"no sign change of int f e^(ntu) for t <= {t_max}")
    t = brentq(phi, 0.0, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(t)


def normalize_volume(u, grid: TorusGrid) -> np.ndarray:
    """Shift u by a constant so that int e^{nu} = 1."""
    u = grid.check(u)
    w, shift = exp_moments(u, grid.n)
    log_vol = math.log(float(np.sum(w)) * grid.cell_measure) + shift
    return u - log_vol / grid.n


def project_to_Mstar(u, f_lambda, grid: TorusGrid, t_max: float = 1.0) -> np.ndarray:
    """Scale the mean-zero part onto M(lambda), then shift to unit volume."""
    v, t = _project_scale(u, f_lambda, grid, t_max)
    return normalize_volume(t * v, grid)


def _project_scale(u, f_lambda, grid, t_max):
    u = grid.check(u)
    v = u - u.mean()
    if float(np.max(np.abs(v))) == 0.0:
        raise ProjectionError("a constant field cannot be projected onto M(lambda)")
    return v, scaling_root(v, f_lambda, grid, t_max=t_max)
