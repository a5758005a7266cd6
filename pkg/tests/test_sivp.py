import math
from fractions import Fraction

import numpy as np
import pytest

from g2instantons.errors import ConditionViolated, OutOfTrust
from g2instantons.metric import MetricParams, NearOrbitSeries, metric_sivp, closed_form_series_coefficients
from g2instantons.sivp import (SeriesSolution, SingularIVP, check_conditions, exact_charpoly, exact_det, handoff,
                               residual, series_coefficients, solve_from_origin)


def relaxation():
    """``t y' = -y + t``; the solution regular at 0 is ``y = t/2``."""
    return SingularIVP(lambda t, y: [-y[0] + t], [0.0], jacobian=np.array([[Fraction(-1)]]))


def cosine_ivp():
    """``t y' = -y + sin t`` written with math.sin (no jet support): ``y = (1 - cos t)/t``."""
    return SingularIVP(lambda t, y: [-y[0] + math.sin(t)], [0.0])


def test_linear_example_series():
    sol = series_coefficients(relaxation(), 6)
    assert np.allclose(sol.coeffs[:, 0], [0, 0.5, 0, 0, 0, 0, 0], atol=1e-15)
    assert residual(relaxation(), sol, 0.3) < 1e-14


def test_finite_difference_fallback_matches_closed_form():
    sol = series_coefficients(cosine_ivp(), 5)
    # sampled polynomial fit, so only a few digits short of the jet recursion
    assert np.allclose(sol.coeffs[:4, 0], [0, 0.5, 0, -1 / 24], atol=1e-6)


def test_resonant_problem_is_rejected():
    p = SingularIVP(lambda t, y: [2 * y[0] + t], [0.0], jacobian=np.array([[Fraction(2)]]))
    with pytest.raises(ConditionViolated) as err:
        check_conditions(p)
    assert err.value.h == 2


def test_nonvanishing_leading_term_is_rejected():
    with pytest.raises(ConditionViolated):
        check_conditions(SingularIVP(lambda t, y: [1.0 - y[0]], [0.0]))


def test_exact_determinant_and_charpoly():
    A = np.array([[Fraction(1), Fraction(2)], [Fraction(3), Fraction(4)]], dtype=object)
    assert exact_det(A) == -2
    assert exact_charpoly(A) == [1, -5, -2]


def test_handoff_outside_trust_region():
    sol = SeriesSolution(np.array([[1.0], [1.0], [1.0], [1.0]]), 1.0)
    with pytest.raises(OutOfTrust):
        handoff(sol, 2.0)


def test_json_round_trip():
    sol = series_coefficients(relaxation(), 4)
    back = SeriesSolution.from_json(sol.to_json())
    assert np.array_equal(back.coeffs, sol.coeffs)
    assert back.trust_radius == sol.trust_radius


def test_solve_from_origin_reaches_closed_form():
    out = solve_from_origin(relaxation(), 2.0, 1e-3, N=4)
    assert abs(out.y[0, -1] - 1.0) < 1e-10


def test_metric_series_matches_closed_form_terms():
    for m, n, beta in ((1, 1, 1.3), (1, 1, 0.8), (1, 2, 1.1)):
        params = MetricParams(m, n, 1.0, beta)
        pa, pb = closed_form_series_coefficients(params)
        near = NearOrbitSeries(params, 8)
        assert np.allclose(near.a_coeffs[:4], pa, atol=1e-12)
        if m == n:
            assert np.allclose(near.b_coeffs[:5], pb, atol=1e-12)
        else:
            assert np.allclose(near.b_coeffs[:4], pb[:4], atol=1e-12)


def test_metric_sivp_conditions_hold():
    rep = check_conditions(metric_sivp(MetricParams(1, 1, 1.0, 1.2)))
    assert rep.residual < 1e-12 and rep.min_abs_det > 0
