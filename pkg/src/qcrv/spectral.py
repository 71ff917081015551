"""Flat unit torus, the GJMS operator as a Fourier multiplier, and energies.

On the flat torus [0, 1)^n the GJMS operator is exactly (-Delta)^{n/2}, whose
symbol on the integer frequency k is |2 pi k|^n.  Scalar fields are plain
float64 arrays of shape ``(N,) * n`` in row-major axis order; periodicity is
implicit in the FFT.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

SUPPORTED_DIMENSIONS = (2, 4)

# above this exponent the weighted exponential integral is evaluated shifted
EXP_SHIFT_THRESHOLD = 500.0


def fft_workers() -> int:
    """Data-parallel width for FFTs, read from ``QCRV_THREADS`` (0 = auto)."""
    raw = os.environ.get("QCRV_THREADS", "0").strip() or "0"
    try:
        count = int(raw)
    except ValueError as exc:
        raise ValueError(f"QCRV_THREADS must be an integer, got {raw!r}") from exc
    if count < 0:
        raise ValueError("QCRV_THREADS must be >= 0")
    return -1 if count == 0 else count


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the unit-volume flat torus of even dimension ``n``."""

    n: int
    N: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in SUPPORTED_DIMENSIONS:
            raise ValueError(f"unsupported dimension n={self.n}; expected one of {SUPPORTED_DIMENSIONS}")
        N = self.N
        if not isinstance(N, (int, np.integer)) or N < 8 or N & (N - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def cell_measure(self) -> float:
        return self.h**self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    def axes(self) -> list[np.ndarray]:
        """Open-mesh coordinate arrays, one per axis."""
        x = np.arange(self.N) * self.h
        return list(np.ix_(*([x] * self.n)))

    def coordinates(self) -> list[np.ndarray]:
        """Dense coordinate arrays ``x_1, ..., x_n``."""
        return [np.broadcast_to(a, self.shape) for a in self.axes()]

    def periodic_distance(self, center) -> np.ndarray:
        """Distance on the torus from every grid point to ``center``."""
        center = np.asarray(center, dtype=float)
        sq = np.zeros(self.shape)
        for a, c in zip(self.axes(), center):
            d = np.abs(a - c) % 1.0
            sq = sq + np.minimum(d, 1.0 - d) ** 2
        return np.sqrt(sq)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer frequencies in FFT order, Nyquist at ``-N/2``."""
        return sfft.fftfreq(self.N, d=1.0 / self.N)

    @cached_property
    def symbol(self) -> np.ndarray:
        """|2 pi k|^n on the half-spectrum layout used by ``rfftn``."""
        k_full = self.frequencies
        k_half = np.abs(sfft.rfftfreq(self.N, d=1.0 / self.N))
        # rfftfreq reports +N/2 for the Nyquist bin; |k| is identical
        ks = [k_full] * (self.n - 1) + [k_half]
        sq = np.zeros(tuple(len(k) for k in ks))
        for axis, k in enumerate(ks):
            shape = [1] * self.n
            shape[axis] = len(k)
            sq = sq + (k.reshape(shape) ** 2)
        return (4.0 * np.pi**2 * sq) ** (self.n // 2)

    @cached_property
    def max_symbol(self) -> float:
        return float(self.symbol.max())

    def check(self, u, name: str = "field") -> np.ndarray:
        """Validate a scalar field on this grid and return it as float64."""
        arr = np.asarray(u, dtype=np.float64)
        if arr.shape != self.shape:
            raise ValueError(f"{name} has shape {arr.shape}, expected {self.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        return arr

    def constant(self, value: float = 0.0) -> np.ndarray:
        return np.full(self.shape, float(value))


def forward(grid: TorusGrid, u: np.ndarray) -> np.ndarray:
    return sfft.rfftn(u, s=grid.shape, workers=fft_workers())


def inverse(grid: TorusGrid, uh: np.ndarray) -> np.ndarray:
    return sfft.irfftn(uh, s=grid.shape, workers=fft_workers())


def apply_multiplier(grid: TorusGrid, u: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return inverse(grid, forward(grid, u) * mult)


def apply_gjms(u, grid: TorusGrid) -> np.ndarray:
    """Return ``P u = (-Delta)^{n/2} u`` by FFT, multiplication, inverse FFT."""
    u = grid.check(u)
    out = apply_multiplier(grid, u, grid.symbol)
    # the multiplier kills k = 0; remove residual round-off in the mean
    return out - out.mean()


def _dense_dft(N: int) -> np.ndarray:
    j = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(j, j) / N)


def apply_gjms_dense(u, grid: TorusGrid) -> np.ndarray:
    """Reference ``P u`` by explicit dense DFT matrices (oracle, N <= 16)."""
    if grid.N > 16:
        raise ValueError(f"dense oracle limited to N <= 16, got N={grid.N}")
    u = grid.check(u)
    n, N = grid.n, grid.N
    F = _dense_dft(N)
    Finv = np.conj(F) / N
    k = np.fft.fftfreq(N, d=1.0 / N)
    # full symbol on the fftn layout: Nyquist bin carries |2 pi (N/2)|^n
    sq = sum(np.reshape(k**2, [N if a == axis else 1 for a in range(n)]) for axis in range(n))
    symbol = (4.0 * np.pi**2 * sq) ** (n // 2)
    # separable transform along every axis: O(N^{n+1}) per axis
    uh = u.astype(complex)
    for axis in range(n):
        uh = np.moveaxis(np.tensordot(F, uh, axes=([1], [axis])), 0, axis)
    uh = uh * symbol
    for axis in range(n):
        uh = np.moveaxis(np.tensordot(Finv, uh, axes=([1], [axis])), 0, axis)
    return uh.real


def apply_gjms_brute(u, grid: TorusGrid) -> np.ndarray:
    """Direct O(N^{2n}) summation of the multiplier, no factorization at all."""
    if grid.N > 16 or grid.size > 4096:
        raise ValueError("brute-force summation limited to N^n <= 4096")
    u = grid.check(u)
    n, N = grid.n, grid.N
    idx = np.indices(grid.shape).reshape(n, -1).T
    k = np.where(idx >= N // 2, idx - N, idx)
    symbol = np.sum(k**2, axis=1) * 4.0 * np.pi**2
    symbol = symbol ** (n // 2)
    phase = np.exp(-2j * np.pi * (idx @ idx.T) / N)
    uh = phase @ u.ravel()
    out = (np.conj(phase) @ (symbol * uh)) / grid.size
    return out.real.reshape(grid.shape)


def inner(grid: TorusGrid, u: np.ndarray, v: np.ndarray) -> float:
    """L^2 inner product with the trapezoidal (cell) measure."""
    return float(np.sum(u * v) * grid.cell_measure)


def integral(w, grid: TorusGrid) -> float:
    return float(np.sum(grid.check(w, "integrand")) * grid.cell_measure)


def energy(u, grid: TorusGrid) -> float:
    """E(u) = int u P u, evaluated in Parseval form."""
    u = grid.check(u)
    uh = forward(grid, u)
    return _parseval_energy(grid, uh)


def _parseval_energy(grid: TorusGrid, uh: np.ndarray) -> float:
    # rfftn stores one of each conjugate pair; double the interior bins
    weights = np.full(uh.shape[-1], 2.0)
    weights[0] = 1.0
    if grid.N % 2 == 0:
        weights[-1] = 1.0
    dens = grid.symbol * (uh.real**2 + uh.imag**2) * weights
    return float(np.sum(dens)) / grid.size**2


def energy_quadrature(u, grid: TorusGrid) -> float:
    """E(u) as the grid sum of u * P u (cross-check of the Parseval form)."""
    u = grid.check(u)
    return inner(grid, u, apply_gjms(u, grid))


def energy_gradient(u, grid: TorusGrid) -> np.ndarray:
    """L^2 gradient of E, namely ``2 P u``."""
    return 2.0 * apply_gjms(u, grid)


def exp_moments(u: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Return ``(e^{n u - shift}, shift)`` with the shift applied only when needed."""
    nu = n * u
    top = float(nu.max())
    shift = top if top > EXP_SHIFT_THRESHOLD else 0.0
    return np.exp(nu - shift), shift


def weighted_exp_integral(f, u, grid: TorusGrid, n: int | None = None) -> float:
    """Return int f e^{n u} with the exponential evaluated in shifted form."""
    n = grid.n if n is None else n
    f = grid.check(f, "weight")
    u = grid.check(u)
    w, shift = exp_moments(u, n)
    partial = float(np.sum(f * w)) * grid.cell_measure
    if shift == 0.0 or partial == 0.0:
        return partial
    log_mag = np.log(abs(partial)) + shift
    if log_mag > 709.0:
        raise OverflowError(
            f"int f e^(nu) overflows float64 (log magnitude {log_mag:.1f}); renormalize u first"
        )
    return float(np.sign(partial) * np.exp(log_mag))
