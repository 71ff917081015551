import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcrv.analytic import ProfileSpec, make_profile, make_test_function
from qcrv.constraints import (
    ProjectionError,
    check_admissible,
    constraint_report,
    normalize_volume,
    project_to_Mstar,
    scaling_root,
)
from qcrv.spectral import TorusGrid, energy, integral

G = TorusGrid(2, 64)
F0 = make_profile(ProfileSpec(), G).values


def phi_normalized(u, f, t):
    w = np.exp(2 * t * (u - u.max()))
    return float(np.sum(f * w) / np.sum(w))


def concentrated(amp=6.0, width=0.05):
    d = G.periodic_distance((0.0, 0.0))
    return amp * np.exp(-(d / width) ** 2)


def test_admissibility_examples():
    assert not check_admissible(G.constant(-1.0), G).admissible
    assert not check_admissible(G.constant(-1.0), G).attains_zero
    assert not check_admissible(G.constant(0.0), G).admissible
    adm = check_admissible(F0, G)
    assert adm.admissible and adm.lambda_max == pytest.approx(1.0)
    assert not check_admissible(F0 + 0.1, G).admissible


def test_scaling_root_bisection_vs_scan():
    f = F0 + 0.5
    u = concentrated()
    assert phi_normalized(u, f, 1.0) > 0
    t = scaling_root(u, f, G)
    assert 0 < t < 1
    assert abs(phi_normalized(u, f, t)) <= 1e-12 * np.max(np.abs(f))
    eps = 1e-6
    assert phi_normalized(u, f, t - eps) < 0 < phi_normalized(u, f, t + eps)
    # independent oracle: fine scan of phi on [0, 1] brackets the same unique root
    ts = np.linspace(0, 1, 20001)
    vals = np.array([phi_normalized(u, f, s) for s in ts])
    sign_changes = np.nonzero(np.diff(np.sign(vals)))[0]
    assert len(sign_changes) == 1
    assert ts[sign_changes[0]] <= t <= ts[sign_changes[0] + 1]


def test_scaling_root_identity_case():
    f = F0 + 0.5
    u = concentrated()
    t = scaling_root(u, f, G)
    assert scaling_root(t * u, f, G) == 1.0


def test_scaling_root_errors():
    f = F0 + 0.5
    with pytest.raises(ProjectionError):
        scaling_root(G.constant(0.0), f, G)
    with pytest.raises(ProjectionError):
        scaling_root(concentrated(), F0 + 2.0, G)  # int f > 0
    weak = concentrated(amp=0.1)
    with pytest.raises(ProjectionError, match="concentrate"):
        scaling_root(weak, f, G)


def test_scaling_root_extended_bracket():
    f = F0 + 0.5
    weak = concentrated(amp=1.0)
    t = scaling_root(weak, f, G, t_max=64)
    assert t > 1
    assert abs(phi_normalized(weak, f, t)) <= 1e-12


def test_normalize_volume_examples():
    assert np.array_equal(normalize_volume(G.constant(0.0), G), G.constant(0.0))
    assert np.allclose(normalize_volume(G.constant(3.0), G), 0.0, atol=1e-15)
    u = np.random.default_rng(0).standard_normal(G.shape) * 4
    v = normalize_volume(u, G)
    assert abs(integral(np.exp(2 * v), G) - 1) <= 1e-13
    assert np.ptp(u - v) <= 1e-12


def test_normalize_volume_large_amplitude():
    u = concentrated(amp=400.0, width=0.02)
    v = normalize_volume(u, G)
    assert abs(integral(np.exp(2 * v), G) - 1) <= 1e-13


@pytest.mark.parametrize("lam", [0.1, 0.01, 1e-3])
def test_project_test_function_lands_in_Mstar(lam):
    f = F0 + lam
    phi = make_test_function((0, 0), lam**-0.5, 0.1, G)
    # the far-field plateau outweighs the cap at delta = 0.1, so t > 1 is needed
    with pytest.raises(ProjectionError):
        project_to_Mstar(phi, f, G)
    u = project_to_Mstar(phi, f, G, t_max=64)
    assert constraint_report(u, f, G).passed


def test_project_constant_rejected():
    with pytest.raises(ProjectionError):
        project_to_Mstar(G.constant(0.0), F0 + 0.5, G)


def test_project_idempotent_and_energy():
    f = F0 + 0.5
    u = concentrated()
    t = scaling_root(u - u.mean(), f, G)
    p1 = project_to_Mstar(u, f, G)
    p2 = project_to_Mstar(p1, f, G)
    assert np.max(np.abs(p1 - p2)) <= 1e-9
    assert energy(p1, G) == pytest.approx(t * t * energy(u, G), rel=1e-10)


@given(st.floats(0.05, 0.9), st.floats(2.0, 10.0), st.floats(0.01, 100.0))
def test_root_invariant_under_f_scaling(lam, amp, c):
    f = F0 + lam
    u = concentrated(amp=amp)
    if phi_normalized(u, f, 1.0) <= 0:
        return
    assert scaling_root(u, c * f, G) == pytest.approx(scaling_root(u, f, G), abs=1e-12)


@given(st.floats(0.05, 0.9), st.floats(3.0, 10.0))
def test_projection_satisfies_constraints(lam, amp):
    f = F0 + lam
    u = concentrated(amp=amp)
    if phi_normalized(u - u.mean(), f, 1.0) <= 0:
        return
    rep = constraint_report(project_to_Mstar(u, f, G), f, G)
    assert rep.passed, rep
