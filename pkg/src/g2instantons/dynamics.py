"""Instantons near the conical end as a dynamical system in ``tau = log t``.

On the cone the reduced equations become autonomous, ``dz/dtau = F(z)``; an
asymptotically conical metric adds a decaying perturbation ``G(z, tau)``.
This module holds the fixed-point analysis, the explicit heteroclinic orbit,
the shooting procedure on ``h0`` and a Lyapunov-Perron construction of the
stable manifold of ``z_+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar
from scipy.signal import lfilter

from .errors import EigenSolveFailure, NoBracket, NoContraction, NoConvergence, SingularTime
from .instanton import (BundleIndex, LocalData, Trajectory, integrate_connection, integrate_from,
                        parity_check, reduced_rhs)
from .metric import MetricProfile, _coeffs
from .sivp import fd_jacobian
from .su2 import curvature_norm, embed_reduced, sign_gauge

THIRD = Fraction(1, 3)
FIXED_POINTS = {
    "z0": (0, 0, 0, 0),
    "z+": (THIRD, THIRD, 0, THIRD),
    "z-": (-THIRD, -THIRD, 0, THIRD),
}

# exact linearizations: Jacobian, eigenvalues in column order, eigenvector columns
REFERENCE_LINEARIZATIONS = {
    "z0": (((-2, 4, 0, 0), (4, -2, 0, 0), (0, 0, -6, 0), (0, 0, 0, 2)),
           (-6, -6, 2, 2),
           ((0, -1, 0, 1), (0, 1, 0, 1), (1, 0, 0, 0), (0, 0, 1, 0))),
    "z+": (((-2, 2, 1, -2), (2, -2, -1, -2), (4, -4, -6, 0), (-2, -2, 0, 2)),
           (4, -8, -2, -2),
           ((-1, -1, 1, 1), (-1, 1, 1, -1), (0, 4, 0, 2), (2, 0, 1, 0))),
    "z-": (((-2, 2, -1, 2), (2, -2, 1, 2), (-4, 4, -6, 0), (2, 2, 0, 2)),
           (4, -8, -2, -2),
           ((1, 1, -1, -1), (1, -1, -1, 1), (0, 4, 0, 2), (2, 0, 1, 0))),
}

CONVERGED_PLUS = "converged_plus"
CONVERGED_MINUS = "converged_minus"
DIVERGED_UP = "diverged_up"
DIVERGED_DOWN = "diverged_down"
UNDECIDED = "undecided"

EPS_CONV = 1e-3
R_BIG = 1e3
TAU_CHECK = 7.5
TAU_END = 14.0


# vector fields ----------------------------------------------------------------------

def _cone_field(z) -> list:
    f, fp, g, h = z
    return [
        2 * fp * (2 - 3 * h + g / 2) + 2 * f * (g - 1),
        2 * f * (2 - 3 * h - g / 2) - 2 * fp * (g + 1),
        6 * (f * f - fp * fp - g),
        2 * h - fp * fp - f * f - 4 * f * fp,
    ]


def autonomous_F(z):
    """Cone limit of ``t * d/dt (f, f', g, h)``; works for floats, Fractions or arrays."""
    return np.array(_cone_field(z))


def DF(z):
    """Analytic Jacobian of :func:`autonomous_F`."""
    f, fp, g, h = z
    return np.array([
        [2 * (g - 1), 2 * (2 - 3 * h + g / 2), fp + 2 * f, -6 * fp],
        [2 * (2 - 3 * h - g / 2), -2 * (g + 1), -f - 2 * fp, -6 * f],
        [12 * f, -12 * fp, -6 + 0 * f, 0 * f],
        [-2 * f - 4 * fp, -2 * fp - 4 * f, 0 * f, 2 + 0 * f],
    ])


def integrate_autonomous(z0, taus, dps: int = 20, tol: Optional[float] = None) -> np.ndarray:
    """Flow of :func:`autonomous_F` from ``z0`` at ``taus[0]``, sampled at ``taus``.

    Uses a Taylor-series integrator in extended precision. The unstable direction
    of ``z+`` inside the invariant plane amplifies double-precision drift by roughly
    ``e^{2 (tau1 - tau0)}``, which a float integrator cannot absorb over ``|tau| <= 8``.
    """
    taus = np.asarray(taus, dtype=float)
    with mpmath.workdps(dps):
        tol = mpmath.mpf(10) ** (1 - dps) if tol is None else mpmath.mpf(tol)
        flow = mpmath.odefun(lambda s, z: _cone_field(z), mpmath.mpf(float(taus[0])),
                             [mpmath.mpf(float(v)) for v in z0], tol=tol)
        return np.array([[float(v) for v in flow(mpmath.mpf(float(t)))] for t in taus])


def nonautonomous_G(z, tau, r0: float = 1.0, g_row_factor: float = 1.0):
    """Leading ``e^{-3 tau}`` correction to :func:`autonomous_F` on an AC metric.

    The ``g`` row is ``c (f'^2 - f^2 + g)`` with ``c = 36 sqrt(3) r0^3 e^{-3 tau}``,
    which is what the exact equations on the series at infinity give.
    ``g_row_factor`` rescales that row; any value other than 1 breaks the agreement.
    """
    f, fp, g, h = z
    scale = 36 * math.sqrt(3.0) * r0**3 * math.exp(-3 * tau)
    return scale * np.array([
        fp * (h - 1 - 0.5 * g),
        f * (h + 0.5 * g - 1),
        g_row_factor * (fp * fp - f * f + g),
        0.5 * fp * fp + 0.5 * f * f - h,
    ])


def exact_rescaled_rhs(z, tau, profile: MetricProfile):
    """``t * reduced_rhs`` at ``t = e^tau`` on ``profile``."""
    t = math.exp(tau)
    return t * reduced_rhs(z, profile.sample(t), profile.params)


# the heteroclinic orbit ---------------------------------------------------------------

@dataclass(frozen=True)
class RescaledState:
    z: np.ndarray
    tau: float


def heteroclinic_w(tau):
    e = np.exp(2 * np.asarray(tau, dtype=float))
    return e / (1 + 3 * e)


def heteroclinic_oracle(tau, sign: int = 1) -> RescaledState:
    """Explicit orbit from ``z0`` (``tau -> -inf``) to ``z_+`` or ``z_-`` (``tau -> inf``)."""
    w = float(heteroclinic_w(tau))
    s = 1.0 if sign >= 0 else -1.0
    return RescaledState(np.array([s * w, s * w, 0.0, w]), float(tau))


def heteroclinic_path(taus, sign: int = 1) -> np.ndarray:
    w = heteroclinic_w(taus)
    s = 1.0 if sign >= 0 else -1.0
    return np.stack([s * w, s * w, 0 * w, w], axis=-1)


# fixed points ----------------------------------------------------------------------------

@dataclass
class FixedPointRecord:
    location: str
    z: np.ndarray
    jacobian: np.ndarray
    jacobian_exact: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    fd_error: float
    residual: float
    stable: list = field(default_factory=list)
    unstable: list = field(default_factory=list)

    def as_dict(self):
        return {
            "location": self.location,
            "z": [float(x) for x in self.z],
            "jacobian": [[str(x) for x in row] for row in self.jacobian_exact],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "eigenvectors": [[float(x) for x in row] for row in self.eigenvectors],
            "fd_error": self.fd_error,
            "residual": self.residual,
            "stable": self.stable,
            "unstable": self.unstable,
        }


def linearize(location: str) -> FixedPointRecord:
    """Jacobian, spectrum and eigenvectors of :func:`autonomous_F` at ``z0``, ``z+`` or ``z-``."""
    if location not in FIXED_POINTS:
        raise ValueError(f"unknown fixed point {location!r}; expected one of {sorted(FIXED_POINTS)}")
    zq = FIXED_POINTS[location]
    zf = np.array([float(x) for x in zq])
    exact = DF(tuple(Fraction(x) for x in zq))
    J = exact.astype(float)
    fd = fd_jacobian(autonomous_F, zf)
    try:
        lam, vec = np.linalg.eig(J)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(str(exc)) from exc
    if np.abs(lam.imag).max() > 1e-12 or np.linalg.cond(vec) > 1e10:
        raise EigenSolveFailure(f"non-real or defective spectrum at {location}")
    lam = lam.real
    order = np.argsort(lam, kind="stable")
    lam, vec = lam[order], vec[:, order].real
    return FixedPointRecord(location, zf, J, exact, lam, vec, float(np.abs(fd - J).max()),
                            float(np.abs(autonomous_F(zf)).max()),
                            [i for i in range(4) if lam[i] < 0], [i for i in range(4) if lam[i] > 0])


def spectral_projections(A):
    """``(P_stable, P_unstable, eigenvalues, V)`` for a diagonalizable real matrix."""
    lam, V = np.linalg.eig(A)
    if np.abs(lam.imag).max() > 1e-12:
        raise EigenSolveFailure("complex spectrum")
    lam, V = lam.real, V.real
    Vi = np.linalg.inv(V)
    Ps = V @ np.diag((lam < 0).astype(float)) @ Vi
    Pu = V @ np.diag((lam > 0).astype(float)) @ Vi
    return Ps, Pu, lam, V


# classification and shooting ----------------------------------------------------------

@dataclass
class ShootResult:
    f0: float
    h0: float
    classification: str
    exit_tau: float
    distance_to_target: float
    target: str = "z+"
    escape_side: int = 0
    bracket: tuple = ()
    iterations: int = 0
    trajectory: Optional[Trajectory] = None
    partner: Optional[Trajectory] = None
    profile: Optional[MetricProfile] = None
    _refined: Optional[Trajectory] = field(default=None, repr=False)

    def blended_state(self, tau):
        """Combination of the two bracket ends that cancels the unstable component near the target.

        This resolves ``h0`` below one unit in the last place; it is accurate while
        both ends are still close to each other.
        """
        z1 = _state_at(self.trajectory, tau)
        if self.partner is None or not self.converged:
            return z1
        z2 = _state_at(self.partner, tau)
        return z1 + self.refinement_weight() * (z2 - z1)

    def refined_trajectory(self, lead: float = 0.0) -> Trajectory:
        """Trajectory relaunched from the blended state ``lead`` units before the reference time."""
        if self._refined is None:
            if self.partner is None or self.profile is None:
                return self.trajectory
            tau_a = self._reference_tau() - lead
            traj = integrate_from(self.blended_state(tau_a), self.profile, math.exp(tau_a),
                                  math.exp(TAU_END + 2.0), 1e-12, R_BIG, joint=False)
            traj.meta.update(self.trajectory.meta, relaunch_tau=tau_a)
            self._refined = traj
        return self._refined

    def state(self, tau):
        """Best available state at ``tau``: the refined trajectory after its launch time."""
        if self.partner is None or self.profile is None or not self.converged:
            return _state_at(self.trajectory, tau)
        traj = self.refined_trajectory()
        if tau < traj.meta["relaunch_tau"]:
            return self.blended_state(tau)
        return _state_at(traj, tau)

    def refinement_weight(self, tau_ref: Optional[float] = None):
        zstar = np.array(FIXED_POINTS[self.target], dtype=float)
        _, Pu, _, _ = spectral_projections(DF(zstar))
        tau_ref = self._reference_tau() if tau_ref is None else tau_ref
        u1 = Pu @ (_state_at(self.trajectory, tau_ref) - zstar)
        u2 = Pu @ (_state_at(self.partner, tau_ref) - zstar)
        du = u2 - u1
        return float(-(u1 @ du) / (du @ du)) if du @ du > 0 else 0.0

    def _reference_tau(self, size: float = 1e-3):
        """Latest time at which both bracket ends are still within ``size`` of the target."""
        zstar = np.array(FIXED_POINTS[self.target], dtype=float)
        hi = min(math.log(self.trajectory.t_exit), math.log(self.partner.t_exit))
        taus = np.linspace(TAU_CHECK, hi, 400)
        ok = [t for t in taus if max(np.abs(_state_at(self.trajectory, t) - zstar).max(),
                                     np.abs(_state_at(self.partner, t) - zstar).max()) < size]
        return ok[-1] if ok else TAU_CHECK

    @property
    def converged(self) -> bool:
        return self.classification in (CONVERGED_PLUS, CONVERGED_MINUS)

    def as_row(self):
        return (self.f0, self.h0, self.classification, self.exit_tau, self.distance_to_target)


def escape_side(traj: Trajectory, near: float = 0.1) -> int:
    """Direction in which a trajectory leaves: ``+1`` up, ``-1`` down, ``0`` undetermined.

    After an escape this is the sign of ``h``. A trajectory still within ``near``
    of ``z_+-`` at its end is assigned the side its unstable component points to,
    which is the sign of ``h - 1/3``.
    """
    z = traj.z[-1]
    if traj.exit_reason == "blow-up":
        return 1 if z[3] > 0 else -1
    for key in ("z+", "z-"):
        d = z - np.array(FIXED_POINTS[key], dtype=float)
        if np.abs(d).max() < near and d[3] != 0.0:
            return 1 if d[3] > 0 else -1
    return 0


def _state_at(traj: Trajectory, tau: float):
    return np.asarray(traj.dense(tau), dtype=float)


def classify_trajectory(traj: Trajectory, eps_conv: float = EPS_CONV, R_big: float = R_BIG,
                        tau_check: float = TAU_CHECK) -> ShootResult:
    """Converged if within ``eps_conv`` of ``z_+-`` at ``tau_check``; otherwise the escape direction.

    ``traj`` must carry dense output in ``tau``.
    """
    f0, h0 = traj.meta.get("f0", float("nan")), traj.meta.get("h0", float("nan"))
    tau_exit = math.log(traj.t_exit)
    side = escape_side(traj)
    if tau_exit >= tau_check:
        z = _state_at(traj, tau_check)
        dp = float(np.abs(z - np.array(FIXED_POINTS["z+"], dtype=float)).max())
        dm = float(np.abs(z - np.array(FIXED_POINTS["z-"], dtype=float)).max())
        if min(dp, dm) < eps_conv:
            cls = CONVERGED_PLUS if dp <= dm else CONVERGED_MINUS
            return ShootResult(f0, h0, cls, tau_exit, min(dp, dm), "z+" if dp <= dm else "z-", side, trajectory=traj)
    z_end = traj.z[-1]
    if side != 0 and np.abs(z_end).max() >= R_big * (1 - 1e-9):
        cls = DIVERGED_UP if side > 0 else DIVERGED_DOWN
        return ShootResult(f0, h0, cls, tau_exit, float(np.abs(z_end).max()), "", side, trajectory=traj)
    dists = {k: float(np.abs(z_end - np.array(v, dtype=float)).max()) for k, v in FIXED_POINTS.items()}
    best = min(dists, key=dists.get)
    return ShootResult(f0, h0, UNDECIDED, tau_exit, dists[best], best, side, trajectory=traj)


class Shooter:
    """Integrates members of the local family on one profile with fixed settings."""

    def __init__(self, profile: MetricProfile, j: int = 1, t0: Optional[float] = None, tau_end: float = TAU_END,
                 R_big: float = R_BIG, eps_conv: float = EPS_CONV, tau_check: float = TAU_CHECK,
                 tol: float = 1e-12, order: int = 10):
        self.profile = profile
        self.idx = BundleIndex(1, 1, j)
        self.t0 = 1e-3 * profile.params.r0 if t0 is None else t0
        self.tau_end, self.R_big, self.eps_conv, self.tau_check = tau_end, R_big, eps_conv, tau_check
        self.tol, self.order = tol, order

    def run(self, f0: float, h0: float) -> Trajectory:
        return integrate_connection(self.idx, LocalData(f0, h0), self.profile, self.t0, math.exp(self.tau_end),
                                    self.tol, self.order, strict=False, bound=self.R_big)

    def side(self, f0, h0) -> int:
        return escape_side(self.run(f0, h0))

    def classify(self, f0, h0) -> ShootResult:
        return classify_trajectory(self.run(f0, h0), self.eps_conv, self.R_big, self.tau_check)


def shoot_h0(f0: float, profile: MetricProfile, bracket=(-0.5, 0.5), tol: float = 0.0, j: int = 1,
             n_scan: int = 17, shooter: Optional[Shooter] = None, **kw) -> ShootResult:
    """Find ``h0`` such that the family member ``(f0, h0)`` tends to ``z_+`` (``z_-`` for ``f0 < 0``).

    The bracket is scanned at ``n_scan`` points for a change of escape direction
    and then bisected until its width is at most ``tol`` (``0`` means until the
    midpoint is no longer representable).

    Raises
    ------
    NoBracket
        if the scan shows no change of escape direction.
    NoConvergence
        if the bisection ends without a trajectory converging to ``z_+-``.
    """
    sh = shooter or Shooter(profile, j, **kw)
    if f0 == 0.0:
        res = sh.classify(0.0, 0.0)
        res.h0, res.bracket = 0.0, (0.0, 0.0)
        return res
    scan = np.linspace(bracket[0], bracket[1], n_scan)
    sides = [sh.side(f0, float(h)) for h in scan]
    k = next((i for i in range(n_scan - 1) if sides[i] * sides[i + 1] < 0), None)
    if k is None:
        raise NoBracket(f"no change of escape direction for f0={f0!r}: {list(zip(scan.tolist(), sides))}")
    lo, hi = float(scan[k]), float(scan[k + 1])
    s_lo = sides[k]
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        s = sh.side(f0, mid)
        if s == 0:
            res = sh.classify(f0, mid)
            if res.converged:
                res.bracket, res.iterations = (lo, hi), it
                return res
            raise NoConvergence(f"bisection stalled at h0={mid!r} with an undecided trajectory")
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    ends = [sh.classify(f0, h) for h in (lo, hi)]
    order = sorted(range(2), key=lambda i: (not ends[i].converged, ends[i].distance_to_target))
    best = ends[order[0]]
    best.bracket, best.iterations = (lo, hi), it
    if not best.converged:
        raise NoConvergence(f"f0={f0!r}: endpoints of the final bracket [{lo!r}, {hi!r}] do not converge")
    if ends[order[1]].converged:
        best.partner = ends[order[1]].trajectory
        best.profile = profile
    return best


# diagnostics along converged solutions --------------------------------------------------

def curvature_profile(traj: Trajectory, profile: MetricProfile, taus) -> np.ndarray:
    params = profile.params
    out = []
    for tau in taus:
        t = math.exp(tau)
        z = _state_at(traj, tau)
        s = profile.sample(t)
        out.append(curvature_norm(embed_reduced(z), embed_reduced(reduced_rhs(z, s, params)), s, params))
    return np.array(out)


def far_field_distance(traj: Trajectory, tau_end: float, sign: int = 1, span: float = math.log(10.0), n: int = 60):
    """Sup distance on ``[tau_end - span, tau_end]`` to the best ``tau``-translate of the heteroclinic orbit."""
    taus = np.linspace(tau_end - span, tau_end, n)
    zs = np.array([_state_at(traj, t) for t in taus])

    def dist(shift):
        return float(np.abs(zs - heteroclinic_path(taus - shift, sign)).max())

    opt = minimize_scalar(dist, bounds=(-10.0, tau_end), method="bounded", options={"xatol": 1e-8})
    return float(opt.fun), float(opt.x)


@dataclass
class SolutionDiagnostics:
    max_curvature: float
    curvature_bounded: bool
    g_monotone: bool
    far_field_distance: float
    far_field_shift: float
    parity_passed: bool


def diagnose(result: ShootResult, profile: MetricProfile, tau_far: float = 3.0) -> SolutionDiagnostics:
    """Curvature bound, monotone decay of ``g`` near the end and the extension conditions at the origin."""
    traj = result.trajectory
    tau0 = math.log(traj.meta.get("t0", traj.t[0]))
    tau1 = min(math.log(traj.t_exit), TAU_CHECK if result.exit_tau >= TAU_CHECK else result.exit_tau)
    coarse = curvature_profile(traj, profile, np.linspace(tau0, tau1, 12))
    fine = curvature_profile(traj, profile, np.linspace(tau0, tau1, 120))
    bounded = bool(np.all(np.isfinite(fine)) and fine.max() <= 1.1 * coarse.max())
    taus = np.linspace(tau1 - tau_far, tau1, 200)
    g = np.array([_state_at(traj, t)[2] for t in taus])
    monotone = bool(np.all(np.diff(np.abs(g)) <= 0))
    sign = 1 if result.classification != CONVERGED_MINUS else -1
    dist, shift = far_field_distance(traj, tau1, sign)
    parity = parity_check(BundleIndex(1, 1, traj.meta["j"]), traj.series).passed
    return SolutionDiagnostics(float(fine.max()), bounded, monotone, dist, shift, parity)


@dataclass
class SweepRow:
    f0: float
    h0: float
    classification: str
    exit_tau: float
    distance: float
    max_curvature: float = float("nan")
    diagnostics: Optional[SolutionDiagnostics] = None
    error: str = ""

    def csv_row(self):
        return [self.f0, self.h0, self.classification, self.exit_tau, self.distance, self.max_curvature]


SWEEP_HEADER = ("f0", "h0", "classification", "exit_tau", "distance", "max_curvature")


@dataclass
class SweepReport:
    rows: list
    achieved_epsilon: float
    max_adjacent_jump: float
    max_slope: float

    @property
    def converged_rows(self):
        return [r for r in self.rows if r.classification in (CONVERGED_PLUS, CONVERGED_MINUS)]


_WORKER = {}


def _sweep_one(f0):
    args = _WORKER
    try:
        res = shoot_h0(f0, args["profile"], shooter=args["shooter"])
    except (NoBracket, NoConvergence) as exc:
        return SweepRow(f0, float("nan"), UNDECIDED, float("nan"), float("nan"), error=str(exc))
    diag = diagnose(res, args["profile"]) if res.converged else None
    return SweepRow(f0, res.h0, res.classification, res.exit_tau, res.distance_to_target,
                    diag.max_curvature if diag else float("nan"), diag)


def family_sweep(f0_grid: Sequence[float], profile: MetricProfile, jobs: int = 1, **kw) -> SweepReport:
    """Shoot every grid value; per-point failures are recorded, not raised."""
    grid = [float(x) for x in f0_grid]
    _WORKER.update(profile=profile, shooter=Shooter(profile, **kw))
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(jobs) as pool:
            rows = pool.map(_sweep_one, grid)
    else:
        rows = [_sweep_one(f) for f in grid]
    ok = [r for r in rows if r.classification in (CONVERGED_PLUS, CONVERGED_MINUS)]
    eps = max((abs(r.f0) for r in ok), default=0.0)
    ok_sorted = sorted(ok, key=lambda r: r.f0)
    jumps = [abs(b.h0 - a.h0) for a, b in zip(ok_sorted, ok_sorted[1:])]
    slopes = [abs(b.h0 - a.h0) / (b.f0 - a.f0) for a, b in zip(ok_sorted, ok_sorted[1:]) if b.f0 > a.f0]
    return SweepReport(rows, eps, max(jumps, default=0.0), max(slopes, default=0.0))


def mirror_check(result: ShootResult, mirrored: ShootResult, taus) -> float:
    """Sup distance between the sign-gauge image of one solution and the other."""
    a = np.array([sign_gauge(_state_at(result.trajectory, t)) for t in taus])
    b = np.array([_state_at(mirrored.trajectory, t) for t in taus])
    return float(np.abs(a - b).max())


# linearization about the abelian solution -------------------------------------------------

def _tilde_hat(profile: MetricProfile, t):
    a, b, ad, bd = profile.state(t)
    if bd == 0.0 or ad == 0.0:
        raise SingularTime(f"a' or b' vanishes at t={t!r}")
    Phi, Psi, Chi = _coeffs(a, b, 1, profile.params)
    d1 = 2 * ad**3 * bd * bd
    d2 = 2 * ad**4 * bd
    return (Phi / d1, Psi / d1, Chi / d1), (Phi / d2, Psi / d2, Chi / d2), b


def abelian_g(profile: MetricProfile, t, j: int = 1) -> float:
    R = profile.params.R
    b = profile.state(t)[1]
    return 4 * j * R * R / (b + R) ** 2


def stage2_linearization(profile: MetricProfile, t, g: Optional[float] = None, j: int = 1) -> np.ndarray:
    """Jacobian of the reduced equations at ``(0, 0, g, 0)``, ``g`` defaulting to the abelian value."""
    (Pt, St, Ct), (Ph, Sh, _), _ = _tilde_hat(profile, t)
    g = abelian_g(profile, t, j) if g is None else g
    return np.array([
        [Ct * (g - 1), Pt + 0.5 * g * (Pt + St), 0.0, 0.0],
        [Pt - 0.5 * g * (Pt + St), -Ct * (g + 1), 0.0, 0.0],
        [0.0, 0.0, Sh - Ph, 0.0],
        [0.0, 0.0, 0.0, Ph + Sh],
    ])


def sign_functionals(profile: MetricProfile, ts, j: int = 1):
    """The two cross-product functionals bounding the invariant region of the linearized flow.

    Returns ``(s1, s2)`` with ``s1 = 3 Phi~ + (g/2)(8 chi~ - 5 (Phi~ + Psi~))`` (expected ``> 0``)
    and ``s2 = -g (Phi~ + Psi~ + 2 chi~)`` (expected ``< 0``).
    """
    s1, s2 = [], []
    for t in np.atleast_1d(ts):
        (Pt, St, Ct), _, _ = _tilde_hat(profile, t)
        g = abelian_g(profile, t, j)
        s1.append(3 * Pt + 0.5 * g * (8 * Ct - 5 * (Pt + St)))
        s2.append(-g * (Pt + St + 2 * Ct))
    return np.array(s1), np.array(s2)


def linearized_flow(profile: MetricProfile, w, t0: float, t1: float, j: int = 1, n: int = 200, rtol: float = 1e-11):
    """Solve ``dN/dt = A(t) N`` from the variation of the local data in direction ``w = (df0, dh0)``.

    Returns ``(ts, N)`` sampled on a log grid.
    """
    params = profile.params
    nu = (j + 1) // 2
    beta, r0 = params.beta, params.r0
    K = (1 - j + 2 * beta**3) / (4 * r0 * beta**2)
    N0 = np.array([w[0] * t0 ** (nu - 1), w[0] * K / (2 * nu) * t0**nu, 0.0, w[1]])

    def rhs(tau, y):
        t = math.exp(tau)
        return t * (stage2_linearization(profile, t, j=j) @ y)

    taus = np.linspace(math.log(t0), math.log(t1), n)
    sol = solve_ivp(rhs, (taus[0], taus[-1]), N0, method="DOP853", rtol=rtol, atol=1e-14, t_eval=taus)
    return np.exp(sol.t), sol.y.T


# transversality along the heteroclinic orbit ------------------------------------------------

def transversality_margin(tau: float, tau_far: float = 10.0, sign: int = 1, segment: float = 0.5) -> float:
    """Smallest singular value of [tangent plane of {f = f', g = 0} | transported stable plane].

    The stable eigenvectors of ``z_+-`` transverse to that plane (eigenvalues -8
    and -2) are carried back from ``tau_far`` to ``tau`` by the linearization of
    ``F`` along the orbit. The pair is re-orthonormalized every ``segment`` so
    that the plane they span survives the very different growth rates.
    Along the orbit ``DF`` maps vectors ``(x, -x, y, 0)`` to vectors of the same
    form, so the margin is 1 up to rounding.
    """
    s = 1.0 if sign >= 0 else -1.0
    Q = np.array([[-s, s, 4.0, 0.0], [s, -s, 2.0, 0.0]]).T
    Q, _ = np.linalg.qr(Q)

    def rhs(x, v):
        return (DF(heteroclinic_oracle(x, sign).z) @ v.reshape(4, 2)).ravel()

    nodes = np.arange(tau_far, tau, -segment if tau < tau_far else segment)
    nodes = np.append(nodes, tau)
    for a, b in zip(nodes[:-1], nodes[1:]):
        sol = solve_ivp(rhs, (a, b), Q.ravel(), method="DOP853", rtol=1e-11, atol=1e-14)
        Q, _ = np.linalg.qr(sol.y[:, -1].reshape(4, 2))
    plane = np.array([[s, s, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]).T / np.array([math.sqrt(2), 1.0])
    return float(np.linalg.svd(np.hstack([plane, Q]), compute_uv=False).min())


# Lyapunov-Perron construction of the stable manifold ------------------------------------------

@dataclass
class ManifoldSample:
    tau0: float
    z0: np.ndarray
    taus: np.ndarray
    path: np.ndarray
    distances: list
    contraction: float
    iterations: int


def _numeric_jacobian(func, x, step=1e-7):
    x = np.asarray(x, dtype=float)
    J = np.zeros((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        J[:, i] = (func(x + e) - func(x - e)) / (2 * step)
    return J


def stable_manifold_iteration(location: str = "z+", stable_data=None, tau0: float = 8.0, n_iter: int = 60,
                              horizon: float = 12.0, dtau: float = 0.005, r0: float = 1.0,
                              nonlinear: bool = True, forcing: bool = True, tol: float = 1e-15,
                              perturbation=None) -> ManifoldSample:
    """Picard iteration of the variation-of-constants operator whose fixed point is the stable manifold.

    Writing ``z = z* + x``, the bounded solutions of ``x' = A x + q(x, tau)``, with
    ``A = DF(z*)`` and ``q = F(z* + x) - A x + G``, satisfy

        x(tau) = e^{(tau - tau0) A} x_s + int_{tau0}^{tau} e^{(tau - r) A} P_s q dr
                 - int_{tau}^{inf} e^{(tau - r) A} P_u q dr.

    The integrals are evaluated exactly for ``q`` piecewise linear on a uniform
    grid truncated at ``tau0 + horizon``.  The reported contraction factor is the
    sup-norm gain of the linearized operator at the fixed point, probed along
    the eigendirections of ``A``.

    Parameters
    ----------
    stable_data : array_like
        Displacement ``x_s`` from the fixed point; only its stable projection is used.
    perturbation : callable, optional
        ``(z, tau) -> vector`` replacing :func:`nonautonomous_G`.

    Raises
    ------
    NoContraction
        if the sup-distance between successive iterates grows twice in a row.
    """
    zstar = np.array(FIXED_POINTS[location], dtype=float)
    A = linearize(location).jacobian
    Ps, _, lam, V = spectral_projections(A)
    Vi = np.linalg.inv(V)
    xs = Ps @ np.asarray(stable_data, dtype=float)
    n = int(round(horizon / dtau))
    taus = tau0 + dtau * np.arange(n + 1)
    G = perturbation or (lambda z, tau: nonautonomous_G(z, tau, r0))
    stable = lam < 0
    e = np.exp(lam * dtau)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(stable, (e - 1) / lam, 0.0)
        phi2 = np.where(stable, (e - 1 - lam * dtau) / (lam * lam * dtau), 0.0)
        mu = -lam
        emu = np.exp(mu * dtau)
        psi1 = np.where(~stable, (emu - 1) / mu, 0.0)
        psi2 = np.where(~stable, (emu * (mu * dtau - 1) + 1) / (mu * mu * dtau), 0.0)
    y0 = Vi @ xs

    def kernel(Q, start):
        """Variation-of-constants map in eigencoordinates for forcing ``Q`` (rows on the grid)."""
        Y = np.empty_like(Q)
        for i in range(4):
            q = Q[:, i]
            if stable[i]:
                u = phi1[i] * q[:-1] + phi2[i] * (q[1:] - q[:-1])
                Y[0, i] = start[i]
                Y[1:, i] = lfilter([1.0], [1.0, -e[i]], u, zi=[e[i] * start[i]])[0]
            else:
                v = psi1[i] * q[:-1] + psi2[i] * (q[1:] - q[:-1])
                Y[:-1, i] = lfilter([1.0], [1.0, -1.0 / e[i]], -v[::-1])[::-1]
                Y[-1, i] = 0.0
        return Y

    def forcing_terms(x):
        q = np.zeros_like(x)
        if nonlinear:
            q += np.array([autonomous_F(zz) for zz in zstar + x]) - x @ A.T
        if forcing:
            q += np.array([G(zstar + xx, tt) for xx, tt in zip(x, taus)])
        return q @ Vi.T

    Y = np.exp(np.outer(taus - tau0, lam)) * np.where(stable, y0, 0.0)
    x = Y @ V.T
    distances = []
    for _ in range(n_iter):
        xnew = kernel(forcing_terms(x), y0) @ V.T
        d = float(np.abs(xnew - x).max())
        distances.append(d)
        x = xnew
        if len(distances) >= 3 and distances[-1] > distances[-2] > distances[-3] and d > tol:
            raise NoContraction(distances)
        if d <= tol * max(1.0, float(np.abs(x).max())):
            break

    # gain of the linearized operator at the fixed point
    gains = []
    for k in range(4):
        probe = np.tile(V[:, k] / np.abs(V[:, k]).max(), (taus.size, 1))
        dq = np.zeros_like(probe)
        for r, (xx, tt) in enumerate(zip(x, taus)):
            z = zstar + xx
            Jq = np.zeros((4, 4))
            if nonlinear:
                Jq += DF(z) - A
            if forcing:
                Jq += _numeric_jacobian(lambda zz: G(zz, tt), z)
            dq[r] = Jq @ probe[r]
        gains.append(float(np.abs(kernel(dq @ Vi.T, np.zeros(4)) @ V.T).max()))
    return ManifoldSample(tau0, zstar + x[0], taus, zstar + x, distances, max(gains), len(distances))


def contraction_factor(distances, floor: float = 1e-13) -> float:
    """Largest ratio of successive iterate distances above the rounding floor."""
    ratios = [b / a for a, b in zip(distances, distances[1:]) if a > floor and b > floor]
    if not ratios:
        return 0.0
    return float(max(ratios))
