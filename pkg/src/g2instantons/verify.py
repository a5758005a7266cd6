"""Self-checks against closed forms and exact data, runnable from the command line."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import dynamics as dyn
from .instanton import (BundleIndex, LocalData, expected_orders, integrate_connection, integrate_general, local_family,
                        reduced_rhs)
from .metric import CONE_K, NU_INF, MetricProfile, inequality_audit
from .reference import abelian_solution
from .sivp import check_conditions
from .su2 import constraint_residual, embed_reduced


@dataclass
class SuiteResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<24} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"


def fixed_points_suite() -> SuiteResult:
    worst = 0.0
    exact = True
    for loc, (J, lam, _) in dyn.REFERENCE_LINEARIZATIONS.items():
        rec = dyn.linearize(loc)
        exact &= bool((rec.jacobian_exact == np.array(J, dtype=object)).all())
        worst = max(worst, float(np.abs(np.sort(rec.eigenvalues) - np.sort(lam)).max()))
    return SuiteResult("fixed-points", exact and worst < 1e-10, worst, 1e-10,
                       "Jacobians exact" if exact else "Jacobian mismatch")


def heteroclinic_suite(tau0: float = -8.0, tau1: float = 8.0) -> SuiteResult:
    z0 = dyn.heteroclinic_oracle(tau0).z
    taus = np.linspace(tau0, tau1, 81)
    err = float(np.abs(dyn.integrate_autonomous(z0, taus) - dyn.heteroclinic_path(taus)).max())
    return SuiteResult("heteroclinic", err < 1e-8, err, 1e-8)


def handoff_sensitivity(profile: MetricProfile, d: LocalData = LocalData(0.1, 0.05), t1: float = 5.0) -> float:
    """Largest difference on ``[t0, t1]`` between trajectories handed off at ``t0`` and ``t0 / 2``."""
    t0 = 1e-3 * profile.params.r0
    ts = np.log(np.geomspace(t0, t1 * profile.params.r0, 41))
    ref = integrate_connection(BundleIndex(1, 1, 1), d, profile, t0, math.exp(ts[-1]))
    half = integrate_connection(BundleIndex(1, 1, 1), d, profile, t0 / 2, math.exp(ts[-1]))
    return float(np.abs(ref.dense(ts) - half.dense(ts)).max())


def sivp_determinant_suite(profile: MetricProfile) -> SuiteResult:
    bad = []
    for nu in range(1, 5):
        rep = check_conditions(local_family(BundleIndex.from_nu(nu), LocalData(0.1, 0.05), profile.params))
        want = [Fraction(1), Fraction(2 * nu), Fraction(0), Fraction(0), Fraction(0)]
        if rep.charpoly != want:
            bad.append(nu)
    drift = handoff_sensitivity(profile)
    detail = "h^3(h+2nu) for nu=1..4" if not bad else f"mismatch at nu={bad}"
    return SuiteResult("sivp-determinant", not bad and drift < 1e-6, drift, 1e-6, f"{detail}, handoff t0 vs t0/2")


def reduction_suite(profile: MetricProfile, seed: int = 0, n: int = 4, t1: float = 10.0) -> SuiteResult:
    """General matrix system against the reduced system from random local data on ``[t0, t1]``."""
    rng = np.random.default_rng(seed)
    t0 = 1e-3 * profile.params.r0
    ts = np.geomspace(t0, t1 * profile.params.r0, 41)
    worst = worst_constraint = 0.0
    accepted = 0
    while accepted < n:
        # generic local data escape before t1; keep draws that live on the whole window
        f0, h0 = rng.uniform(-0.3, 0.3, 2)
        traj = integrate_connection(BundleIndex(1, 1, 1), LocalData(f0, h0), profile, t0, ts[-1], strict=False)
        if traj.exit_reason != "reached-end":
            continue
        accepted += 1
        red = traj.dense(np.log(ts)).T
        gen = integrate_general(embed_reduced(red[0]), profile, t0, ts[-1], ts)
        for t, z, c in zip(ts, red, gen):
            worst = max(worst, float(np.abs(embed_reduced(z).flatten() - c.flatten()).max()))
            worst_constraint = max(worst_constraint, constraint_residual(c, profile.sample(t)))
    passed = worst < 1e-8 and worst_constraint < 1e-8
    return SuiteResult("reduction-consistency", passed, worst, 1e-8, f"constraint residual {worst_constraint:.1e}")


def abelian_residual(profile: MetricProfile, ts, j: int = 1, h0: float = 0.0):
    """Scaled residual ``t |z' - reduced_rhs(z)| / max(1, |z|)`` of the abelian solution at each ``t``."""
    ab = abelian_solution(j, h0, profile, t_end=float(np.max(ts)))
    R = profile.params.R
    out = []
    for t in ts:
        a, b, ad, bd = profile.state(t)
        z = ab.state(t)
        zdot = np.array([0.0, 0.0, -8 * j * R * R * bd / (b + R) ** 3, z[3] * ab.integrand(t)])
        rhs = reduced_rhs(z, profile.sample(t), profile.params)
        out.append(t * float(np.abs(zdot - rhs).max()) / max(1.0, float(np.abs(z).max())))
    return np.array(out)


def abelian_suite(profile: MetricProfile) -> SuiteResult:
    ts = np.geomspace(1e-3 * profile.params.r0, 1e2 * profile.params.r0, 60)
    worst = max(float(abelian_residual(profile, ts, 1, h0).max()) for h0 in (0.0, 0.2))
    return SuiteResult("abelian-residual", worst < 1e-6, worst, 1e-6)


def metric_suite(profile: MetricProfile) -> SuiteResult:
    info = getattr(profile, "info", {})
    T = info.get("T_max", 3e4 * profile.params.r0)
    a, b, _, _ = profile.state(T)
    scale = 1.0 / (CONE_K * T**3)
    dev = max(abs(a * scale - 1), abs(b * scale - 1))
    exp_err = abs(info.get("exponent", float("nan")) / NU_INF - 1)
    audit = inequality_audit(profile, np.geomspace(1e-3 * profile.params.r0, T, 400))
    ok_audit = all(bool(v.all()) for v in audit.values())
    passed = dev < 1e-3 and exp_err < 0.02 and ok_audit
    return SuiteResult("metric-far-end", passed, dev, 1e-3, f"exponent rel. error {exp_err:.2e}, audit {'ok' if ok_audit else 'FAILED'}")


def parity_suite() -> SuiteResult:
    table = {(1, 1, 1): (0, "even", 1, "odd"), (1, 1, 3): (1, "odd", 2, "even"), (1, 2, 2): (0, "even", 1, "odd")}
    bad = []
    for (m, n, j), (d1, p1, d2, p2) in table.items():
        e = expected_orders(BundleIndex(m, n, j))
        if e["A12"] != (d1, p1) or e["A12p"] != (d2, p2):
            bad.append((m, n, j))
    return SuiteResult("parity-table", not bad, float(len(bad)), 0.0, "" if not bad else f"mismatch {bad}")


def stage2_suite(profile: MetricProfile) -> SuiteResult:
    ts = np.geomspace(1e-3 * profile.params.r0, 1e3 * profile.params.r0, 200)
    s1, s2 = dyn.sign_functionals(profile, ts)
    passed = bool((s1 > 0).all() and (s2 < 0).all())
    return SuiteResult("stage2-sign-functionals", passed, float(min(s1.min(), -s2.max())), 0.0)


def run_all(profile: MetricProfile, seed: int = 0) -> list:
    return [
        fixed_points_suite(),
        heteroclinic_suite(),
        sivp_determinant_suite(profile),
        reduction_suite(profile, seed),
        abelian_suite(profile),
        metric_suite(profile),
        parity_suite(),
        stage2_suite(profile),
    ]
