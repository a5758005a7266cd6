import numpy as np
import pytest

from g2instantons.errors import DenominatorVanishes
from g2instantons.metric import MetricParams, MetricProfile
from g2instantons.reference import Z_PLUS, abelian_solution, flat_connections, limit_state
from g2instantons.verify import abelian_residual


def test_limit_state_is_the_attracting_fixed_point():
    assert np.array_equal(limit_state().as_array(), Z_PLUS)


def test_flat_states_listed_first():
    states = flat_connections(3)
    assert states[0].as_array().tolist() == [1.0, 0.0, 1.0, 0.5]
    assert states[2].g == 3.0


@pytest.mark.parametrize("h0", [0.0, 0.2, -0.4])
def test_abelian_solution_solves_reduced_system(profile, h0):
    ts = np.geomspace(1e-3, 1e2, 40)
    assert abelian_residual(profile, ts, 1, h0).max() < 1e-6


def test_abelian_initial_values(profile):
    ab = abelian_solution(3, 0.25, profile)
    assert ab.g(1e-9) == pytest.approx(3.0, rel=1e-12)
    assert ab.h(1e-9) == pytest.approx(0.25, rel=1e-9)


def test_h_grows_quadratically_at_infinity(profile):
    # a ~ b far out, so log h has slope 2b'/(3b) * t -> 2
    ab = abelian_solution(1, 0.3, profile, t_end=1e3)
    slope = (ab.exponent(1e3) - ab.exponent(5e2)) / np.log(2.0)
    assert slope == pytest.approx(2.0, abs=1e-2)


class _Bent(MetricProfile):
    """A fake profile on which 4a^2 - (b - R)^2 changes sign at t = 1."""

    def __init__(self):
        self.params = MetricParams(1, 1, 1.0, 1.0)

    def state(self, t):
        return 0.1 * t, 1.0 + t, 0.1, 1.0


def test_vanishing_denominator_is_reported():
    with pytest.raises(DenominatorVanishes):
        abelian_solution(1, 0.1, _Bent(), t_end=2.0)
