"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from g2instantons import dynamics as dyn
from g2instantons.instanton import BundleIndex, LocalData, expected_orders, local_family, parity_check
from g2instantons.metric import CONE_K, NU_INF, inequality_audit, tuned_ac_profile
from g2instantons.reference import Z_PLUS
from g2instantons.sivp import check_conditions, series_coefficients
from g2instantons.verify import abelian_residual, handoff_sensitivity, reduction_suite

from conftest import record

COARSE = (0.05, 0.10, 0.15, 0.20, 0.25)
MIDPOINTS = (0.075, 0.125, 0.175, 0.225)


@pytest.fixture(scope="module")
def family(profile):
    start = time.perf_counter()
    coarse = dyn.family_sweep(COARSE, profile)
    refined = dyn.family_sweep(MIDPOINTS, profile)
    plus = dyn.shoot_h0(0.1, profile)
    minus = dyn.shoot_h0(-0.1, profile)
    return coarse, refined, plus, minus, time.perf_counter() - start


def test_fixed_point_table():
    start = time.perf_counter()
    exact, worst = True, 0.0
    for loc, (J, lam, _) in dyn.REFERENCE_LINEARIZATIONS.items():
        rec = dyn.linearize(loc)
        exact &= all(Fraction(x) == Fraction(y) for r1, r2 in zip(rec.jacobian_exact, J) for x, y in zip(r1, r2))
        worst = max(worst, float(np.abs(np.sort(rec.eigenvalues) - np.sort(lam)).max()))
    spectra = {tuple(sorted(dyn.linearize(loc).eigenvalues.round(12))) for loc in dyn.REFERENCE_LINEARIZATIONS}
    elapsed = time.perf_counter() - start
    ok = exact and worst < 1e-10 and spectra == {(-6, -6, 2, 2), (-8, -2, -2, 4)} and elapsed < 1.0
    assert record(1, "fixed-point Jacobians and spectra", ok,
                  f"exact={exact}, eigenvalue error {worst:.1e}, {elapsed:.2f}s")


def test_heteroclinic_oracle():
    start = time.perf_counter()
    taus = np.linspace(-8.0, 8.0, 81)
    path = dyn.integrate_autonomous(dyn.heteroclinic_oracle(-8.0).z, taus)
    err = float(np.abs(path - dyn.heteroclinic_path(taus)).max())
    elapsed = time.perf_counter() - start
    assert record(2, "heteroclinic orbit", err < 1e-8 and elapsed < 1.0, f"sup error {err:.1e}, {elapsed:.2f}s")


def test_abelian_oracle(profile):
    start = time.perf_counter()
    ts = np.geomspace(1e-3, 1e2, 60)
    worst = max(float(abelian_residual(profile, ts, 1, h0).max()) for h0 in (0.0, 0.2, -0.3))
    elapsed = time.perf_counter() - start
    assert record(3, "abelian solution residual", worst < 1e-6 and elapsed < 10.0,
                  f"max residual {worst:.1e}, {elapsed:.2f}s")


def test_singular_ivp_engine(profile):
    h = sp.symbols("h")
    symbolic = True
    for nu in range(1, 5):
        rep = check_conditions(local_family(BundleIndex.from_nu(nu), LocalData(0.1, 0.05), profile.params))
        poly = sp.Poly([sp.Rational(c.numerator, c.denominator) for c in rep.charpoly], h)
        symbolic &= poly.as_expr() == sp.expand(h**3 * (h + 2 * nu))
        symbolic &= all(Fraction(int(k) ** 3 * (int(k) + 2 * nu)) == d for k, d in rep.determinants.items())
    drift = handoff_sensitivity(profile)
    assert record(4, "singular IVP determinant and handoff", symbolic and drift < 1e-6,
                  f"h^3(h+2nu) for nu=1..4: {symbolic}, handoff drift {drift:.1e}")


def test_metric_construction(params):
    start = time.perf_counter()
    prof = tuned_ac_profile(params)
    elapsed = time.perf_counter() - start
    T = prof.info["T_max"]
    ratios = []
    for piece in (prof, prof.middle):
        a, b, _, _ = piece.state(T)
        ratios += [a / (CONE_K * T**3), b / (CONE_K * T**3)]
    far_dev = max(abs(r - 1) for r in ratios)
    exp_err = abs(prof.info["exponent"] / NU_INF - 1)
    audit = inequality_audit(prof, np.geomspace(prof.info["t0"], T, 400))
    audit_ok = all(bool(v.all()) for v in audit.values())
    ok = far_dev < 1e-3 and exp_err < 0.02 and audit_ok and elapsed < 60
    assert record(5, "AC metric", ok, f"beta={prof.params.beta!r}, far-end deviation {far_dev:.1e}, "
                  f"exponent error {100 * exp_err:.2f}%, audit {audit_ok}, {elapsed:.1f}s")


def test_instanton_family(profile, family):
    coarse, refined, plus, minus, elapsed = family
    rows = coarse.rows + refined.rows
    converged = [r for r in rows if r.classification == dyn.CONVERGED_PLUS]
    close = all(r.distance < 1e-3 for r in converged)
    diag = [r.diagnostics for r in converged]
    regular = all(d.g_monotone and d.curvature_bounded for d in diag)
    jump_coarse = coarse.max_adjacent_jump
    ok_sorted = sorted(converged, key=lambda r: r.f0)
    jump_fine = max(abs(b.h0 - a.h0) for a, b in zip(ok_sorted, ok_sorted[1:]))
    eps = max(coarse.achieved_epsilon, refined.achieved_epsilon)
    mirror = dyn.mirror_check(plus, minus, np.linspace(math.log(1e-2), dyn.TAU_CHECK, 60))
    ok = (len(converged) == len(rows) and len(converged) >= 5 and close and regular
          and jump_fine < 0.6 * jump_coarse and minus.classification == dyn.CONVERGED_MINUS
          and mirror < 1e-10 and elapsed < 300)
    assert record(6, "instanton family", ok,
                  f"{len(converged)}/{len(rows)} converged up to eps={eps:g}, adjacent jump {jump_coarse:.3e} -> "
                  f"{jump_fine:.3e}, mirror {mirror:.1e}, {elapsed:.0f}s")


def test_reduction_consistency(profile):
    res = reduction_suite(profile, seed=0)
    assert record(7, "general vs reduced system", res.passed, f"max deviation {res.value:.1e}, {res.detail}")


def test_parity_and_extension(profile, family):
    coarse, refined, plus, minus, _ = family
    solutions = [r for r in coarse.rows + refined.rows if r.classification == dyn.CONVERGED_PLUS]
    series_ok = all(d.parity_passed for d in (r.diagnostics for r in solutions))
    series_ok &= parity_check(BundleIndex(1, 1, 1), plus.trajectory.series).passed
    series_ok &= parity_check(BundleIndex(1, 1, 1), minus.trajectory.series).passed
    table = {(1, 1, 3): {"A12": (1, "odd"), "A12p": (2, "even")},
             (1, 2, 2): {"A12": (0, "even"), "A12p": (1, "odd")},
             (1, 2, 5): {"A12": (1, "odd"), "A12p": (2, "even")}}
    table_ok = all(expected_orders(BundleIndex(*k))[key] == v for k, d in table.items() for key, v in d.items())
    idx = BundleIndex(1, 1, 3)
    rep = parity_check(idx, series_coefficients(local_family(idx, LocalData(0.1, 0.05), profile.params), 10))
    table_ok &= rep.passed and rep.orders["A12"] == 1 and rep.orders["A12p"] == 2
    assert record(8, "parity and smooth extension", series_ok and table_ok,
                  f"{len(solutions) + 2} converged series pass, table cases reproduced: {table_ok}")


def test_stage_two_structure(profile):
    ts, N = dyn.linearized_flow(profile, (0.0, 1.0), 1e-3, 1e3)
    leak = float((np.abs(N[:, :3]).max(axis=1) / np.abs(N[:, 3])).max())
    samples = np.geomspace(1e-3, 1e3, 400)
    s1, s2 = dyn.sign_functionals(profile, samples)
    signs = bool((s1 > 0).all() and (s2 < 0).all())
    assert record(9, "stage-2 linearization", leak < 1e-10 and signs,
                  f"transverse leak {leak:.1e}, sign functionals hold on {samples.size} samples: {signs}")


def test_stable_manifold_cross_check(shot):
    Ps, _, _, _ = dyn.spectral_projections(dyn.linearize("z+").jacobian)
    gaps, factors = [], []
    for tau0 in (8.0, 9.0, 10.0):
        z_shoot = shot.state(tau0)
        lp = dyn.stable_manifold_iteration("z+", Ps @ (z_shoot - np.array(Z_PLUS)), tau0=tau0)
        window = lp.taus <= tau0 + 1.0
        ref = np.array([shot.state(t) for t in lp.taus[window][::20]])
        gaps.append(float(np.abs(lp.path[window][::20] - ref).max()))
        factors.append(lp.contraction)
    decreasing = all(b < a for a, b in zip(factors, factors[1:]))
    ok = max(gaps) < 1e-3 and decreasing
    assert record(10, "stable manifold vs shooting", ok,
                  "gaps " + ", ".join(f"{g:.1e}" for g in gaps) + "; contraction " +
                  ", ".join(f"{c:.1e}" for c in factors))
