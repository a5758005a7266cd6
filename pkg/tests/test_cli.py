import json
from fractions import Fraction

import numpy as np
import pytest

from g2instantons import cli, dynamics as dyn
from g2instantons import instanton
from g2instantons.errors import ConfigError
from g2instantons.plotting import read_polylines
from g2instantons.verify import abelian_suite

from conftest import BETA_AC


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "run.cfg"
        path.write_text(config)
        args += ["--config", str(path)]
    return cli.main(args)


def test_config_parsing():
    cfg = cli.RunConfig.from_text("f0 = 0.2  # comment\nj = 3\nbeta = 1.5\nt0 = none\n")
    assert cfg.f0 == 0.2 and cfg.j == 3 and cfg.beta == "1.5" and cfg.t0 is None


@pytest.mark.parametrize("text", ["bogus = 1\n", "f0 = abc\n", "j = 2\n", "m = 2\nn = 2\n", "beta = -1\n",
                                  "tau_check = 20\n", "not a key value line\n"])
def test_bad_config_is_rejected(text):
    with pytest.raises(ConfigError):
        cli.RunConfig.from_text(text)


def test_config_error_exit_status(tmp_path):
    assert run(tmp_path, "shoot", config="bogus = 1\n") == 2
    assert run(tmp_path, "plot", str(tmp_path / "missing.csv")) == 2


def test_fixed_points_json_round_trip(tmp_path):
    assert run(tmp_path, "fixed-points") == 0
    data = json.loads((tmp_path / "fixed_points.json").read_text())
    for rec in data:
        J, lam, _ = dyn.REFERENCE_LINEARIZATIONS[rec["location"]]
        assert [[Fraction(x) for x in row] for row in rec["jacobian"]] == [[Fraction(x) for x in row] for row in J]
        assert sorted(rec["eigenvalues"]) == pytest.approx(sorted(lam), abs=1e-10)
        assert rec["fd_error"] < 1e-6
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["command"] == "fixed-points"


def test_integrate_output_is_deterministic(tmp_path):
    cfg = f"beta = {BETA_AC!r}\nf0 = 0.1\nh0 = 0.05\nT_max = 5\n"
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "integrate", config=cfg) == 0
    assert run(b, "integrate", config=cfg) == 0
    first = (a / "trajectory.csv").read_bytes()
    assert first == (b / "trajectory.csv").read_bytes()
    row = first.decode().splitlines()[5].split(",")
    assert len(row) == len(cli.TRAJECTORY_HEADER)
    assert all(float(format(float(v), ".17g")) == float(v) for v in row)


def test_shoot_emits_matching_plot(tmp_path):
    assert run(tmp_path, "shoot", config=f"beta = {BETA_AC!r}\nf0 = 0.1\n") == 0
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["results"]["classification"] == dyn.CONVERGED_PLUS
    assert manifest["results"]["far_field_distance"] < 1e-2
    data = np.genfromtxt(tmp_path / "trajectory.csv", delimiter=",", skip_header=1)
    curves = read_polylines((tmp_path / "trajectory.svg").read_text())
    x = np.log10(data[:, 0])
    span = np.ptp(data[:, 1:5])
    for i, name in enumerate(("f", "fp", "g", "h"), start=1):
        cx, cy = curves[name]
        assert np.allclose(cx, x, atol=1e-7 * np.ptp(x))
        assert np.allclose(cy, data[:, i], atol=1e-7 * span)


def test_shoot_at_zero_returns_abelian_member(tmp_path):
    assert run(tmp_path, "shoot", config=f"beta = {BETA_AC!r}\nf0 = 0\n") == 0
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["results"]["h0"] == 0.0


def test_numeric_failure_exit_status(tmp_path):
    assert run(tmp_path, "shoot", config=f"beta = {BETA_AC!r}\nf0 = 1.0\n") == 1
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["status"] == "failed"


def test_plot_command(tmp_path):
    csv_path = tmp_path / "curve.csv"
    csv_path.write_text("x,y\n0,1\n1,2\n2,5\n")
    assert run(tmp_path, "plot", str(csv_path)) == 0
    curves = read_polylines((tmp_path / "curve.svg").read_text())
    assert np.allclose(curves["y"][1], [1, 2, 5])


def test_verify_passes(tmp_path, capsys):
    assert run(tmp_path, "verify") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "reduction-consistency" in out and "abelian-residual" in out


def test_tampered_coefficient_breaks_abelian_suite(profile, monkeypatch):
    assert abelian_suite(profile).passed
    original = instanton._coeffs

    def tampered(a, b, w, params):
        Phi, Psi, Chi = original(a, b, w, params)
        return 1.01 * Phi, Psi, Chi

    monkeypatch.setattr(instanton, "_coeffs", tampered)
    assert not abelian_suite(profile).passed
