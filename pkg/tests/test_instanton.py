import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from g2instantons.errors import SingularTime, WrongBundle
from g2instantons.instanton import (BundleIndex, LocalData, connection_to_u, expected_orders, general_rhs,
                                    integrate_connection, integrate_general, local_family, parity_check,
                                    reduced_rhs, u_to_connection)
from g2instantons.metric import MetricSample
from g2instantons.reference import abelian_solution
from g2instantons.sivp import check_conditions, residual, series_coefficients
from g2instantons.su2 import constraint_residual, embed_reduced, project_reduced, sign_gauge

states = arrays(float, 4, elements=st.floats(-2, 2, allow_nan=False))
log_times = st.floats(np.log(1e-2), np.log(1e2))


def test_bundle_congruence():
    BundleIndex(1, 1, 1)
    BundleIndex(1, 2, 2)
    BundleIndex(1, 2, 5)
    with pytest.raises(WrongBundle):
        BundleIndex(1, 2, 3)
    with pytest.raises(WrongBundle):
        BundleIndex(1, 1, 2)
    assert BundleIndex.from_nu(3).j == 5 and BundleIndex(1, 1, 5).nu == 3


@settings(max_examples=60, deadline=None)
@given(states, log_times)
def test_general_system_preserves_reduced_ansatz(profile, z, logt):
    s = profile.sample(float(np.exp(logt)))
    red = reduced_rhs(z, s, profile.params)
    gen = general_rhs(embed_reduced(z), s, profile.params)
    assert np.allclose(gen.flatten(), embed_reduced(red).flatten(), rtol=1e-12, atol=1e-12 * np.abs(red).max())


@settings(max_examples=60, deadline=None)
@given(states, log_times)
def test_reduced_system_is_sign_gauge_equivariant(profile, z, logt):
    s = profile.sample(float(np.exp(logt)))
    assert np.allclose(reduced_rhs(sign_gauge(z), s, profile.params), sign_gauge(reduced_rhs(z, s, profile.params)))


def test_singular_time_is_rejected(params):
    with pytest.raises(SingularTime):
        reduced_rhs(np.zeros(4), MetricSample(0.0, 0.0, 1.0, 1.0, 0.0), params)


def test_u_variables_round_trip():
    z = np.array([0.3, -0.2, 1.0, 0.1])
    assert np.allclose(u_to_connection(connection_to_u(z, 0.7, 2), 0.7, 2), z)


@pytest.mark.parametrize("nu", [1, 2, 3, 4])
def test_local_family_leading_jacobian(params, nu):
    p = local_family(BundleIndex.from_nu(nu), LocalData(0.2, 0.1), params)
    rep = check_conditions(p)
    assert rep.charpoly == [1, 2 * nu, 0, 0, 0]


@pytest.mark.parametrize("nu", [1, 2])
def test_local_series_solves_the_equations(params, nu):
    p = local_family(BundleIndex.from_nu(nu), LocalData(0.2, 0.1), params)
    sol = series_coefficients(p, 10)
    assert residual(p, sol, 1e-3) < 1e-10


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_local_series_extends_smoothly(params, nu):
    idx = BundleIndex.from_nu(nu)
    sol = series_coefficients(local_family(idx, LocalData(0.2, 0.1), params), 10)
    assert parity_check(idx, sol).passed


def test_parity_check_detects_wrong_parity(params):
    idx = BundleIndex(1, 1, 1)
    sol = series_coefficients(local_family(idx, LocalData(0.2, 0.1), params), 8)
    sol.coeffs[1, 0] = 0.5
    assert not parity_check(idx, sol).passed


def test_expected_orders_table():
    assert expected_orders(BundleIndex(1, 1, 1))["A12"] == (0, "even")
    assert expected_orders(BundleIndex(1, 1, 3))["A12p"] == (2, "even")
    assert expected_orders(BundleIndex(1, 2, 2))["A12p"] == (1, "odd")
    assert expected_orders(BundleIndex(1, 2, 5))["A12"] == (1, "odd")


def test_zero_f0_follows_abelian_solution(profile):
    traj = integrate_connection(BundleIndex(1, 1, 1), LocalData(0.0, 0.2), profile, T_max=50.0)
    ab = abelian_solution(1, 0.2, profile, t_end=50.0)
    for t, z in zip(traj.t[::20], traj.z[::20]):
        assert np.allclose(z, ab.state(t), atol=1e-8)


def test_general_integration_keeps_constraint(profile):
    traj = integrate_connection(BundleIndex(1, 1, 1), LocalData(0.1, 0.05), profile, T_max=3.0)
    ts = np.geomspace(traj.t[0], 3.0, 9)
    cs = integrate_general(embed_reduced(traj.z[0]), profile, ts[0], ts[-1], ts)
    for t, c in zip(ts, cs):
        assert constraint_residual(c, profile.sample(t)) < 1e-12
        assert np.allclose(project_reduced(c), traj.at(t), atol=1e-8)
