import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcrv.analytic import standard_bubble
from qcrv.bubble import (
    ConcentrationSelection,
    NoConcentration,
    RescaledProfile,
    ball_mass,
    fit_standard_bubble,
    flatness_diagnostics,
    rescale,
    select_radius,
)
from qcrv.constraints import normalize_volume
from qcrv.spectral import TorusGrid


def transplant(grid, s, x0):
    """Standard bubble centred at x0 on the periodic chart, shifted to unit volume."""
    x = np.stack(grid.coordinates(), axis=-1)
    d = (x - np.asarray(x0) + 0.5) % 1.0 - 0.5
    return normalize_volume(standard_bubble(s, np.zeros(grid.n), d, grid.n), grid)


def exact_profile(s, z0, R=5.0, m=128, n=2):
    t = -R + (np.arange(m) + 0.5) * (2 * R / m)
    z = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1)
    return RescaledProfile(z=z, values=standard_bubble(s, z0, z, n), R=R, m=m, n=n,
                           window_mass=math.nan, ball_mass=math.nan)


def selection(center, r):
    return ConcentrationSelection(center=np.asarray(center, float), radius=r, achieved_mass=math.nan,
                                  center_index=(0, 0), rounds=1, bisection_steps=0, second_cluster=False)


def test_uniform_density_radius():
    g = TorusGrid(2, 64)
    sel = select_radius(g.constant(0.0), g)
    assert sel.radius == pytest.approx(math.sqrt(1 / (8 * math.pi)), abs=1e-5)
    assert abs(sel.achieved_mass - 0.125) <= 1e-6


def test_bubble_transplant_selection():
    g = TorusGrid(2, 256)
    x0 = (0.3, 0.6)
    sel = select_radius(transplant(g, 0.01, x0), g)
    d = np.abs(sel.center - x0)
    assert np.all(np.minimum(d, 1 - d) <= g.h)
    assert sel.radius < 0.02
    assert abs(sel.achieved_mass - 0.125) <= 1e-6
    assert not sel.second_cluster


def test_selection_preconditions():
    g = TorusGrid(2, 32)
    with pytest.raises(ValueError):
        select_radius(g.constant(0.0), g, mass=0.6)
    with pytest.raises(ValueError):
        select_radius(g.constant(1.0), g)  # not unit volume


def test_no_concentration():
    g = TorusGrid(2, 32)
    # a smooth field whose density is spread almost uniformly cannot hold 0.45 within r < 1/4
    with pytest.raises(NoConcentration):
        select_radius(g.constant(0.0), g, mass=0.45)


def test_second_cluster_reported():
    g = TorusGrid(2, 128)
    u = transplant(g, 0.02, (0.25, 0.25))
    v = transplant(g, 0.02, (0.75, 0.75))
    both = normalize_volume(np.log(np.exp(2 * u) + np.exp(2 * v)) / 2, g)
    assert select_radius(both, g).second_cluster


@given(st.integers(0, 63), st.integers(0, 63))
def test_center_translation_covariant(a, b):
    g = TorusGrid(2, 64)
    u = transplant(g, 0.05, (0.41, 0.27))
    base = select_radius(u, g)
    moved = select_radius(np.roll(u, (a, b), axis=(0, 1)), g)
    assert moved.center_index == ((base.center_index[0] + a) % 64, (base.center_index[1] + b) % 64)
    assert moved.radius == pytest.approx(base.radius, rel=1e-9)


def test_rescale_exact_bubble():
    g = TorusGrid(2, 256)
    s, x0 = 0.05, (0.5, 0.5)
    u = transplant(g, s, x0)
    shift = float(u[128, 128] - standard_bubble(s, np.zeros(2), np.zeros(2)))
    for r in (0.02, 0.05):
        prof = rescale(u, g, selection(x0, r), R=2.0, m=32)
        exact = standard_bubble(s, np.zeros(2), r * prof.z) + shift + math.log(r)
        assert np.max(np.abs(prof.values - exact)) <= 1e-4


def test_rescale_identity_shift():
    g = TorusGrid(2, 64)
    x, y = g.coordinates()
    u = 0.3 * np.cos(2 * math.pi * x) * np.sin(2 * math.pi * y)
    m = 31
    R = m * g.h / 2  # cell-centred ticks land on grid points
    prof = rescale(u, g, selection((0.0, 0.0), 1.0), R=R, m=m)
    idx = (np.arange(m) - 15) % 64
    assert np.allclose(prof.values, u[np.ix_(idx, idx)], atol=1e-12)


def test_rescale_window_too_large():
    g = TorusGrid(2, 32)
    with pytest.raises(ValueError):
        rescale(g.constant(0.0), g, selection((0, 0), 0.1), R=10.0, m=16)


def test_mass_conservation_under_rescaling():
    g = TorusGrid(2, 256)
    u = transplant(g, 0.03, (0.2, 0.7))
    sel = select_radius(u, g)
    prof = rescale(u, g, sel, R=min(10.0, 0.25 / sel.radius), m=128)
    assert prof.mass_consistent
    assert ball_mass(u, g, sel.center, sel.radius) == pytest.approx(0.125, abs=1e-6)


def test_fit_identity_case():
    f = fit_standard_bubble(exact_profile(1.0, np.zeros(2)))
    assert f.converged
    assert abs(f.s - 1.0) <= 1e-8 and np.max(np.abs(f.z0)) <= 1e-8
    assert f.linf_residual <= 1e-8 and f.R_fit == 2.5


def test_fit_shifted_case():
    f = fit_standard_bubble(exact_profile(2.5, np.array([0.3, -0.1])))
    assert abs(f.s - 2.5) <= 1e-6
    assert np.allclose(f.z0, [0.3, -0.1], atol=1e-6)


def test_fit_noisy_case():
    prof = exact_profile(1.2, np.array([0.4, 0.2]))
    noise = 0.01 * np.random.default_rng(0).standard_normal(prof.values.shape)
    prof.values = prof.values + noise
    f = fit_standard_bubble(prof)
    assert abs(f.s - 1.2) <= 1e-2 and np.allclose(f.z0, [0.4, 0.2], atol=1e-2)
    assert 0.5 * 0.01 <= f.rms_residual <= 2 * 0.01


def test_fit_n4_exact():
    f = fit_standard_bubble(exact_profile(0.8, np.array([0.1, 0.0, -0.2, 0.3]), R=3.0, m=16, n=4))
    assert abs(f.s - 0.8) <= 1e-8 and np.allclose(f.z0, [0.1, 0.0, -0.2, 0.3], atol=1e-8)


def test_fit_non_fit_sentinel():
    prof = exact_profile(1.0, np.zeros(2))
    prof.values = np.random.default_rng(1).standard_normal(prof.values.shape) * 50
    f = fit_standard_bubble(prof, max_iters=1)
    assert not f.converged and math.isinf(f.linf_residual)


@settings(max_examples=50)
@given(st.floats(0.1, 10.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_fit_recovers_exact_bubbles(s, a, b):
    f = fit_standard_bubble(exact_profile(s, np.array([a, b])))
    assert abs(f.s - s) <= 1e-6 * s
    assert np.allclose(f.z0, [a, b], atol=1e-6)


def test_flatness_synthetic():
    lams = np.geomspace(1e-2, 1e-4, 5)
    ok = flatness_diagnostics(lams, lams ** (1 / 2), [(0.0, 0.0)] * 5, [(0.0, 0.0)], l=2)
    assert ok.passed
    bad = flatness_diagnostics(lams, lams ** (1 / 4), [(0.0, 0.0)] * 5, [(0.0, 0.0)], l=2)
    assert bad.status == "fail"
    drift = flatness_diagnostics(lams, lams ** (1 / 2), [(0.1, 0.0)] * 5, [(0.0, 0.0)], l=2)
    assert drift.status == "fail"
    assert flatness_diagnostics(lams[:2], lams[:2], [(0, 0)] * 2, [(0, 0)], 2).status == "inconclusive"
