import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from g2instantons.su2 import (BASIS, CYCLIC, ConnectionState, InvariantConnection, bracket, conjugate_sign_gauge,
                              curvature, embed_reduced, project_reduced, sign_gauge)
from g2instantons.reference import flat_connections

finite = st.floats(-10, 10, allow_nan=False)
vec3 = arrays(float, 3, elements=finite)
vec4 = arrays(float, 4, elements=finite)


def test_structure_constants():
    for i, j, k in CYCLIC:
        assert np.array_equal(bracket(BASIS[i], BASIS[j]), BASIS[k])


@given(vec3, vec3, vec3)
def test_jacobi_identity(x, y, z):
    total = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))
    assert np.abs(total).max() <= 1e-9 * (1 + np.abs(x).max() * np.abs(y).max() * np.abs(z).max())


@given(vec3, vec3)
def test_bracket_antisymmetric(x, y):
    assert np.allclose(bracket(x, y), -bracket(y, x))


@given(vec4)
def test_embed_project_round_trip(z):
    assert np.allclose(project_reduced(embed_reduced(z)), z, atol=1e-12)


@given(vec4)
def test_sign_gauge_is_an_involution(z):
    assert np.array_equal(sign_gauge(sign_gauge(z)), z)


@given(vec4)
def test_sign_gauge_commutes_with_embedding(z):
    lhs = conjugate_sign_gauge(embed_reduced(z)).flatten()
    assert np.allclose(lhs, embed_reduced(sign_gauge(z)).flatten())


def test_flat_states_have_zero_curvature():
    for state in flat_connections()[:2]:
        assert curvature(embed_reduced(state)).max_abs() == 0.0


def test_canonical_state_is_not_flat():
    assert curvature(embed_reduced(flat_connections(1)[2])).max_abs() > 0.1


def test_flatten_round_trip():
    rng = np.random.default_rng(1)
    c = InvariantConnection(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    assert np.array_equal(InvariantConnection.unflatten(c.flatten()).flatten(), c.flatten())


def test_connection_state_array():
    s = ConnectionState(1.0, 2.0, 3.0, 4.0)
    assert ConnectionState.from_array(s.as_array()) == s
