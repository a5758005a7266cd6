import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from g2instantons import dynamics as dyn
from g2instantons.errors import NoContraction
from g2instantons.metric import AsymptoticSeries
from g2instantons.reference import Z_PLUS

from conftest import H0_AT_F0_01

small = st.floats(-2, 2, allow_nan=False)


@pytest.mark.parametrize("loc", ["z0", "z+", "z-"])
def test_fixed_points_are_exact_zeros(loc):
    assert all(x == 0 for x in dyn.autonomous_F(dyn.FIXED_POINTS[loc]))


@pytest.mark.parametrize("loc", ["z0", "z+", "z-"])
def test_table_eigenvectors_are_exact(loc):
    J, lam, vecs = dyn.REFERENCE_LINEARIZATIONS[loc]
    A = np.array([[Fraction(x) for x in row] for row in J], dtype=object)
    for value, v in zip(lam, np.array(vecs, dtype=object).T):
        v = np.array([Fraction(x) for x in v], dtype=object)
        assert all(x == 0 for x in A.dot(v) - Fraction(value) * v)


@given(small, small)
def test_abelian_plane_is_invariant(g, h):
    F = dyn.autonomous_F(np.array([0.0, 0.0, g, h]))
    assert F[0] == 0.0 and F[1] == 0.0


@given(small, small)
def test_diagonal_plane_is_invariant(f, h):
    F = dyn.autonomous_F(np.array([f, f, 0.0, h]))
    assert F[0] == pytest.approx(F[1], abs=1e-12) and F[2] == 0.0


@given(arrays(float, 4, elements=small))
def test_field_is_sign_gauge_equivariant(z):
    from g2instantons.su2 import sign_gauge

    assert np.allclose(dyn.autonomous_F(sign_gauge(z)), sign_gauge(dyn.autonomous_F(z)))


def test_heteroclinic_oracle_solves_the_field():
    for tau in np.linspace(-4, 4, 17):
        h = 1e-5
        num = (dyn.heteroclinic_oracle(tau + h).z - dyn.heteroclinic_oracle(tau - h).z) / (2 * h)
        assert np.allclose(num, dyn.autonomous_F(dyn.heteroclinic_oracle(tau).z), atol=1e-9)


def test_heteroclinic_endpoints():
    assert np.allclose(dyn.heteroclinic_oracle(-30).z, 0, atol=1e-20)
    assert np.allclose(dyn.heteroclinic_oracle(30).z, Z_PLUS)
    assert np.allclose(dyn.heteroclinic_oracle(30, -1).z, [-1 / 3, -1 / 3, 0, 1 / 3])


def test_perturbation_is_the_leading_correction(params):
    far = AsymptoticSeries(params, 0.0, 6, 0.0)
    z = np.array([0.3, 0.25, 0.1, 0.3])
    scaled = []
    for tau in (4.0, 5.0, 6.0):
        rest = dyn.exact_rescaled_rhs(z, tau, far) - dyn.autonomous_F(z)
        scaled.append(np.abs(rest - dyn.nonautonomous_G(z, tau)).max() * math.exp(6 * tau))
        rescaled_gap = np.abs(rest - dyn.nonautonomous_G(z, tau, g_row_factor=6.0)).max() * math.exp(3 * tau)
        assert rescaled_gap > 1.0
    assert max(scaled) < 2 * min(scaled)


def test_transversality_along_orbit():
    for tau in (-2.0, 0.0, 3.0):
        assert dyn.transversality_margin(tau) > 1e-3


def test_linear_iteration_reproduces_linear_flow():
    xs = np.array([0.01, -0.01, 0.02, 0.0])
    res = dyn.stable_manifold_iteration(stable_data=xs, nonlinear=False, forcing=False, horizon=4.0)
    Ps, _, lam, V = dyn.spectral_projections(dyn.linearize("z+").jacobian)
    y0 = np.where(lam < 0, np.linalg.solve(V, Ps @ xs), 0.0)
    for k in (0, 100, 400, 800):
        want = V @ (np.exp(lam * (res.taus[k] - res.tau0)) * y0)
        assert np.allclose(res.path[k] - Z_PLUS, want, atol=1e-15)


def test_expanding_perturbation_is_reported():
    zs = np.array(Z_PLUS)
    with pytest.raises(NoContraction):
        dyn.stable_manifold_iteration(stable_data=[0.01, -0.01, 0.02, 0.0], perturbation=lambda z, t: 50 * (z - zs))


def test_zero_f0_is_the_abelian_member(profile):
    res = dyn.shoot_h0(0.0, profile)
    assert res.h0 == 0.0


def test_shooting_reference_value(shot):
    assert shot.classification == dyn.CONVERGED_PLUS
    assert shot.h0 == pytest.approx(H0_AT_F0_01, abs=1e-12)
    lo, hi = shot.bracket
    assert lo <= shot.h0 <= hi and hi - lo <= 4 * math.ulp(hi)


def test_bracket_ends_escape_in_opposite_directions(profile, shot):
    sh = dyn.Shooter(profile)
    lo, hi = shot.bracket
    assert sh.side(0.1, lo - 1e-6) * sh.side(0.1, hi + 1e-6) < 0


def test_refined_state_stays_near_target(shot):
    for tau in (8.0, 9.0, 10.0):
        assert np.abs(shot.state(tau) - Z_PLUS).max() < 1e-3


def test_diagnostics_of_converged_solution(profile, shot):
    d = dyn.diagnose(shot, profile)
    assert d.curvature_bounded and d.g_monotone and d.parity_passed
    assert d.far_field_distance < 1e-2


def test_stage2_block_structure(profile):
    A = dyn.stage2_linearization(profile, 1.0)
    assert np.all(A[:2, 2:] == 0) and np.all(A[2:, :2] == 0) and A[2, 3] == 0 and A[3, 2] == 0
