import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcrv.spectral import (
    TorusGrid,
    apply_gjms,
    apply_gjms_brute,
    apply_gjms_dense,
    energy,
    energy_gradient,
    energy_quadrature,
    fft_workers,
    inner,
    integral,
    weighted_exp_integral,
)

GRIDS = [(2, 8), (2, 16), (4, 8)]


def rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.mark.parametrize("n,N", [(3, 8), (2, 12), (2, 4), (6, 8)])
def test_grid_rejects_bad_shape(n, N):
    with pytest.raises(ValueError):
        TorusGrid(n, N)


def test_grid_unit_volume():
    for n, N in [(2, 64), (4, 16)]:
        g = TorusGrid(n, N)
        assert g.cell_measure * g.size == 1.0
        assert integral(g.constant(1.0), g) == pytest.approx(1.0, abs=1e-15)


def test_symbol_invariants():
    g = TorusGrid(2, 16)
    m = g.symbol
    assert m.flat[0] == 0.0
    assert np.all(m.flat[1:] > 0)
    # Nyquist mode kept with its own value |2 pi N/2|^n
    assert m[g.N // 2, 0] == pytest.approx((2 * math.pi * g.N / 2) ** 2)


def test_kernel_is_constants():
    g = TorusGrid(2, 32)
    assert np.max(np.abs(apply_gjms(g.constant(5.0), g))) <= 1e-12
    assert energy(g.constant(5.0), g) == 0.0


def test_eigenfunctions():
    g2 = TorusGrid(2, 32)
    x, y = g2.coordinates()
    u = np.cos(2 * math.pi * x)
    assert rel(apply_gjms(u, g2), 4 * math.pi**2 * u) <= 1e-12
    g4 = TorusGrid(4, 8)
    x1, x2, _, _ = g4.coordinates()
    v = np.sin(2 * math.pi * x1) * np.sin(2 * math.pi * x2)
    assert rel(apply_gjms(v, g4), (8 * math.pi**2) ** 2 * v) <= 1e-12
    assert rel(apply_gjms_dense(v, g4), (8 * math.pi**2) ** 2 * v) <= 1e-12


def test_cosine_energy_values():
    g2 = TorusGrid(2, 32)
    u = np.cos(2 * math.pi * g2.coordinates()[0])
    assert energy(u, g2) == pytest.approx(2 * math.pi**2, rel=1e-10)
    assert energy_quadrature(u, g2) == pytest.approx(19.7392088, rel=1e-8)
    g4 = TorusGrid(4, 8)
    v = np.cos(2 * math.pi * g4.coordinates()[0])
    assert energy(v, g4) == pytest.approx(8 * math.pi**4, rel=1e-10)
    assert energy(v, g4) == pytest.approx(779.2727282, rel=1e-8)


@pytest.mark.parametrize("n,N", GRIDS)
def test_dense_oracle_matches_fft(n, N):
    g = TorusGrid(n, N)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(g.shape)
        assert rel(apply_gjms(u, g), apply_gjms_dense(u, g)) <= 1e-10


def test_brute_oracle_matches_dense():
    g = TorusGrid(2, 8)
    u = np.random.default_rng(3).standard_normal(g.shape)
    assert rel(apply_gjms_brute(u, g), apply_gjms_dense(u, g)) <= 1e-10


def test_oracle_size_guards():
    with pytest.raises(ValueError):
        apply_gjms_dense(np.zeros((32, 32)), TorusGrid(2, 32))
    with pytest.raises(ValueError):
        apply_gjms_brute(np.zeros((16,) * 4), TorusGrid(4, 16))


def test_non_finite_rejected():
    g = TorusGrid(2, 8)
    u = np.zeros(g.shape)
    u[1, 2] = np.nan
    with pytest.raises(ValueError):
        apply_gjms(u, g)


def test_output_has_zero_mean():
    g = TorusGrid(2, 64)
    u = np.random.default_rng(1).standard_normal(g.shape)
    Pu = apply_gjms(u, g)
    assert abs(integral(Pu, g)) <= 1e-12 * np.max(np.abs(Pu))


def test_gradient_single_mode_and_fd():
    g = TorusGrid(2, 16)
    u = np.cos(2 * math.pi * g.coordinates()[0])
    assert rel(energy_gradient(u, g), 8 * math.pi**2 * u) <= 1e-12
    rng = np.random.default_rng(4)
    u = rng.standard_normal(g.shape)
    v = rng.standard_normal(g.shape)
    v /= math.sqrt(inner(g, v, v))
    eps = 1e-5
    fd = (energy(u + eps * v, g) - energy(u - eps * v, g)) / (2 * eps)
    assert fd == pytest.approx(inner(g, energy_gradient(u, g), v), rel=1e-6)


def test_weighted_exp_integral_examples():
    g = TorusGrid(2, 16)
    assert weighted_exp_integral(g.constant(1.0), g.constant(0.0), g) == pytest.approx(1.0, abs=1e-15)
    c = np.cos(2 * math.pi * g.coordinates()[0])
    assert abs(weighted_exp_integral(c, g.constant(0.0), g)) <= 1e-15


def test_weighted_exp_integral_shift_and_overflow():
    g = TorusGrid(2, 16)
    u = g.constant(0.0)
    u[0, 0] = 300.0  # n*u = 600 > 500: shifted path
    val = weighted_exp_integral(g.constant(1.0), u, g)
    assert val == pytest.approx(math.exp(600.0) * g.cell_measure, rel=1e-12)
    u[0, 0] = 400.0  # e^800 has no float64 representation
    with pytest.raises(OverflowError):
        weighted_exp_integral(g.constant(1.0), u, g)


def test_workers_env(monkeypatch):
    monkeypatch.setenv("QCRV_THREADS", "0")
    assert fft_workers() == -1
    monkeypatch.setenv("QCRV_THREADS", "3")
    assert fft_workers() == 3


fields_2d = st.integers(0, 2**31 - 1).map(lambda s: np.random.default_rng(s).standard_normal((16, 16)))


@given(fields_2d, fields_2d)
def test_self_adjoint(u, v):
    g = TorusGrid(2, 16)
    lhs = inner(g, apply_gjms(u, g), v)
    rhs = inner(g, u, apply_gjms(v, g))
    bound = 1e-10 * math.sqrt(inner(g, u, u) * inner(g, v, v)) * g.max_symbol
    assert abs(lhs - rhs) <= bound


@given(fields_2d, st.floats(-50, 50), st.floats(-3, 3).filter(lambda t: abs(t) > 1e-3))
def test_energy_invariances(u, c, t):
    g = TorusGrid(2, 16)
    E = energy(u, g)
    assert E >= 0
    assert energy(u + c, g) == pytest.approx(E, rel=1e-10)
    assert energy(t * u, g) == pytest.approx(t * t * E, rel=1e-12)
    assert energy_quadrature(u, g) == pytest.approx(E, rel=1e-10)


@given(st.floats(-1e3, 1e3))
def test_positivity_zero_only_on_constants(c):
    g = TorusGrid(4, 8)
    assert abs(energy(g.constant(c), g)) <= 1e-12
    u = g.constant(c)
    u[0, 0, 0, 0] += 1.0
    assert energy(u, g) > 1e-6
