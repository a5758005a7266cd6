import numpy as np

from g2instantons.plotting import line_chart, read_polylines


def test_polyline_round_trip():
    x = np.linspace(-3, 2, 50)
    ys = {"sin": np.sin(x), "cubic": 0.1 * x**3}
    back = read_polylines(line_chart(x, ys, "x", "y", "t"))
    for name, y in ys.items():
        bx, by = back[name]
        span = max(np.ptp(ys["sin"]), np.ptp(ys["cubic"]))
        assert np.allclose(bx, x, atol=1e-7 * np.ptp(x))
        assert np.allclose(by, y, atol=1e-7 * span)


def test_non_finite_points_are_skipped():
    back = read_polylines(line_chart([0, 1, 2], {"y": [0.0, np.nan, 1.0]}))
    assert back["y"][0].size == 2


def test_constant_series_does_not_divide_by_zero():
    svg = line_chart([0, 1], {"y": [2.0, 2.0]})
    assert "nan" not in svg
