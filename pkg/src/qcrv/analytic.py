"""Closed-form references: sphere volumes, standard bubbles, test functions, profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .spectral import SUPPORTED_DIMENSIONS, TorusGrid


@dataclass(frozen=True)
class BubbleConstant:
    n: int
    sphere_volume: float
    C: float  # (n-1)! |S^n|, the total curvature mass of one bubble


def sphere_volume(n: int) -> float:
    """Volume of the unit sphere S^n in R^{n+1}, via the Gamma function."""
    return 2.0 * math.pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


def bubble_constant(n: int) -> BubbleConstant:
    if n == 2:
        vol = 4.0 * math.pi
    elif n == 4:
        vol = 8.0 * math.pi**2 / 3.0
    else:
        raise ValueError(f"unsupported dimension n={n}; expected one of {SUPPORTED_DIMENSIONS}")
    return BubbleConstant(n=n, sphere_volume=vol, C=math.factorial(n - 1) * vol)


def bubble_offset(n: int) -> float:
    """Additive constant (1/n) log(1/|S^n|) fixing unit total volume."""
    return -math.log(bubble_constant(n).sphere_volume) / n


def standard_bubble(s, z0, z, n: int | None = None) -> np.ndarray:
    """Unit-volume spherical bubble ``(1/n)log(1/|S^n|) + log(2s/(s^2+|z-z0|^2))``.

    ``z`` has the point coordinates along its last axis; ``n`` defaults to
    that length.
    """
    if s <= 0:
        raise ValueError("bubble scale s must be positive")
    z = np.asarray(z, dtype=float)
    n = z.shape[-1] if n is None else n
    r2 = np.sum((z - np.asarray(z0, dtype=float)) ** 2, axis=-1)
    return bubble_offset(n) + np.log(2.0 * s / (s * s + r2))


def standard_bubble_density(s, z0, z, n: int | None = None) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = z.shape[-1] if n is None else n
    return np.exp(n * standard_bubble(s, z0, z, n))


def radial_bubble_mass(s: float, n: int, normalized: bool = True) -> float:
    """Integrate the bubble density over R^n in polar coordinates."""
    area = n * math.pi ** (n / 2) / gamma(n / 2 + 1)  # |S^{n-1}|
    scale = 1.0 / bubble_constant(n).sphere_volume if normalized else 1.0

    def integrand(t):
        return (2.0 * s / (s * s + t * t)) ** n * t ** (n - 1)

    # split at the scale s so the quadrature sees the peak
    total = 0.0
    for a, b in ((0.0, s), (s, 100.0 * s), (100.0 * s, np.inf)):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    return area * scale * total


def verify_bubble_pde(s: float, n: int = 2, half_width: float = 2.0, step: float = 1e-3) -> float:
    """Max residual of ``-Delta w = e^{2w}`` for ``w = log(2s/(s^2+|z|^2))``.

    Sixth-order central differences on the square patch ``[-half_width,
    half_width]^2``; only n = 2 is a direct Laplacian check.
    """
    if n != 2:
        raise NotImplementedError("direct Laplacian check is implemented for n = 2 only")
    return _laplace_residual(lambda x, y: np.log(2.0 * s / (s * s + x * x + y * y)), half_width, step)


def _laplace_residual(w, half_width: float, step: float) -> float:
    # 7-point stencil for the second derivative, O(step^6)
    coef = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
    offsets = np.arange(-3, 4) * step
    xs = np.linspace(-half_width, half_width, 161)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    lap = np.zeros_like(X)
    for c, o in zip(coef, offsets):
        lap += c * (w(X + o, Y) + w(X, Y + o))
    lap /= step * step
    return float(np.max(np.abs(-lap - np.exp(2.0 * w(X, Y)))))


def cutoff(t, delta: float) -> np.ndarray:
    """Non-decreasing C^2 cap: ``t`` on [0, delta], ``2 delta`` beyond ``2 delta``.

    On [delta, 2 delta], with tau = (t - delta)/delta, the blend is
    ``delta * (1 + tau + 4 tau^3 - 7 tau^4 + 3 tau^5)``.  Its derivative
    ``(1 - tau)^2 (1 + 2 tau + 15 tau^2)`` is non-negative, and value, slope
    and curvature match both neighbours.
    """
    t = np.asarray(t, dtype=float)
    tau = np.clip((t - delta) / delta, 0.0, 1.0)
    blend = delta * (1.0 + tau + 4 * tau**3 - 7 * tau**4 + 3 * tau**5)
    return np.where(t <= delta, t, blend)


def make_test_function(x0, s: float, delta: float, grid: TorusGrid) -> np.ndarray:
    """Sample ``log(2s / (1 + s^2 cutoff(d(x, x0))^2))`` on the torus grid."""
    if not 0 < delta <= 0.1:
        raise ValueError(f"delta must lie in (0, 0.1] so the cap fits the torus chart, got {delta}")
    if s < 1:
        raise ValueError(f"test-function scale s must be >= 1, got {s}")
    chi = cutoff(grid.periodic_distance(x0), delta)
    return np.log(2.0 * s / (1.0 + (s * chi) ** 2))


@dataclass(frozen=True)
class ProfileSpec:
    """Radial l-type profile ``-A (sum_i sin^2(pi (x_i - P_i)))^{l/2}``.

    An optional secondary well ``secondary`` (point, amplitude) multiplies in a
    second quadratic maximum: ``f = -A * g_P^{l/2} * g_Q / max(g_Q)``.
    """

    n: int = 2
    l: int = 2
    P: tuple = (0.0, 0.0)
    A: float = 1.0
    secondary: tuple | None = None

    def __post_init__(self):
        if self.n not in SUPPORTED_DIMENSIONS:
            raise ValueError(f"unsupported dimension n={self.n}")
        if self.l < 2 or self.l % 2:
            raise ValueError(f"flatness order l must be an even integer >= 2, got {self.l}")
        if len(self.P) != self.n:
            raise ValueError(f"max point P needs {self.n} coordinates, got {len(self.P)}")
        if self.A <= 0:
            raise ValueError("amplitude A must be positive")
        if self.secondary is not None and len(self.secondary) != self.n:
            raise ValueError(f"secondary max point needs {self.n} coordinates")


@dataclass
class Profile:
    values: np.ndarray
    spec: ProfileSpec
    max_points: list = field(default_factory=list)
    lambda_max: float = 0.0

    @property
    def l(self) -> int:
        return self.spec.l


def _sin_sq_sum(grid: TorusGrid, point) -> np.ndarray:
    total = np.zeros(grid.shape)
    for a, p in zip(grid.axes(), point):
        total = total + np.sin(np.pi * (a - p)) ** 2
    return total


def make_profile(spec: ProfileSpec, grid: TorusGrid) -> Profile:
    """Build f0 with an l-type maximum at P (f0(P) = 0, f0 < 0 elsewhere)."""
    if spec.n != grid.n:
        raise ValueError(f"profile dimension {spec.n} does not match grid dimension {grid.n}")
    g = _sin_sq_sum(grid, spec.P)
    f0 = -spec.A * g ** (spec.l // 2)
    points = [tuple(float(p) % 1.0 for p in spec.P)]
    if spec.secondary is not None:
        # product with a normalized quadratic well vanishing at the second point
        q = _sin_sq_sum(grid, spec.secondary)
        f0 = f0 * q / spec.n
        points.append(tuple(float(p) % 1.0 for p in spec.secondary))
    lam_max = -float(np.sum(f0) * grid.cell_measure)
    return Profile(values=f0, spec=spec, max_points=points, lambda_max=lam_max)
