"""Evolution equations for invariant instantons and their local solutions near the singular orbit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUp, SingularTime, StepFailure, WrongBundle
from .metric import (CompositeProfile, MetricParams, MetricProfile, MetricSample, TabulatedProfile, _coeffs,
                     _second_derivatives, metric_sivp)
from .sivp import SeriesSolution, SingularIVP, handoff, series_coefficients
from .su2 import InvariantConnection, bracket, constraint_residual, curvature_norm, embed_reduced
from .taylor import Jet

BLOWUP_BOUND = 1e6


@dataclass(frozen=True)
class BundleIndex:
    """Isotropy weight ``j`` of the bundle over the singular orbit; ``nu`` with ``j = 2 nu - 1`` when ``m = n = 1``."""

    m: int = 1
    n: int = 1
    j: int = 1

    def __post_init__(self):
        if math.gcd(self.m, self.n) != 1 or self.m < 1 or self.n < 1:
            raise WrongBundle("m and n must be coprime positive integers")
        if self.branch() is None:
            raise WrongBundle(f"j={self.j} is not congruent to n or -m modulo 2(m+n) for (m, n)=({self.m}, {self.n})")

    @property
    def nu(self) -> int:
        if self.m == self.n == 1:
            if self.j % 2 != 1:
                raise WrongBundle("j must be odd on M_{1,1}")
            return (self.j + 1) // 2
        raise ValueError("nu is defined for m = n = 1 only")

    @classmethod
    def from_nu(cls, nu: int):
        return cls(1, 1, 2 * nu - 1)

    def branch(self) -> Optional[str]:
        mod = 2 * (self.m + self.n)
        if (self.j - self.n) % mod == 0:
            return "n"
        if (self.j + self.m) % mod == 0:
            return "-m"
        return None


@dataclass(frozen=True)
class LocalData:
    f0: float = 0.0
    h0: float = 0.0


# right-hand sides ---------------------------------------------------------------------

def reduced_rhs(z, s: MetricSample, params: MetricParams):
    """Time derivative of ``(f, f', g, h)`` for the reduced ansatz (``m = n`` weights).

    The ``f, f'`` rows are divided by ``2 a'^3 b'^2`` and the ``g, h`` rows by ``2 a'^4 b'``.
    """
    f, fp, g, h = z
    ad, bd = s.da, s.db
    if bd == 0.0 or ad == 0.0:
        raise SingularTime(f"a' or b' vanishes at t={s.t!r}; start from the series solution instead")
    Phi, Psi, Chi = _coeffs(s.a, s.b, params.m, params)
    return _reduced(f, fp, g, h, Phi, Psi, Chi, ad, bd)


def _reduced(f, fp, g, h, Phi, Psi, Chi, ad, bd):
    d1 = 2 * ad**3 * bd * bd
    d2 = 2 * ad**4 * bd
    return np.array([
        (fp * (1 - h + 0.5 * g) * Phi + f * (g - 1) * Chi + fp * (0.5 * g + h) * Psi) / d1,
        (f * (1 - 0.5 * g - h) * Phi - fp * (g + 1) * Chi + f * (h - 0.5 * g) * Psi) / d1,
        (f * f - fp * fp - g) * (Phi - Psi) / d2,
        ((h - 0.5 * fp * fp - 0.5 * f * f) * (Phi + Psi) - 2 * f * fp * Chi) / d2,
    ])


def general_rhs(c: InvariantConnection, s: MetricSample, params: MetricParams) -> InvariantConnection:
    """Time derivative of the six su(2) coefficients of a general invariant connection."""
    ad, bd = s.da, s.db
    if bd == 0.0 or ad == 0.0:
        raise SingularTime(f"a' or b' vanishes at t={s.t!r}")
    Pm, Sm, Cm = _coeffs(s.a, s.b, params.m, params)
    Pn, Sn, Cn = _coeffs(s.a, s.b, params.n, params)
    al, ap = c.alpha, c.alphap
    d1 = 2 * ad**3 * bd * bd
    d2 = 2 * ad**4 * bd
    out, outp = np.zeros((3, 3)), np.zeros((3, 3))
    # rows 0 and 1 pair the a-direction index p with the b-direction index 2; e_p^e_3 = sign * e_j^e_k
    for i, p, sign in ((0, 1, 1.0), (1, 0, -1.0)):
        out[i] = ((ap[i] - sign * bracket(ap[p], ap[2])) * Pm - sign * bracket(al[p], ap[2]) * Cm
                  + sign * bracket(ap[p], al[2]) * Sm + (sign * bracket(al[p], al[2]) - al[i]) * Cn) / d1
        outp[i] = ((al[i] - sign * bracket(al[p], al[2])) * Pn - sign * bracket(ap[p], al[2]) * Cn
                   + sign * bracket(al[p], ap[2]) * Sn + (sign * bracket(ap[p], ap[2]) - ap[i]) * Cm) / d1
    out[2] = ((ap[2] - bracket(ap[0], ap[1])) * Pm - (bracket(al[0], ap[1]) + bracket(ap[0], al[1])) * Cm
              + (al[2] - bracket(al[0], al[1])) * Sn) / d2
    outp[2] = ((al[2] - bracket(al[0], al[1])) * Pn - (bracket(ap[0], al[1]) + bracket(al[0], ap[1])) * Cn
               + (ap[2] - bracket(ap[0], ap[1])) * Sm) / d2
    return InvariantConnection(out, outp)


# local solutions near the singular orbit ---------------------------------------------

class _MetricJets:
    """Series of ``(a/t, (b-mnR)/t^2, a', b'/t)`` used inside the connection series."""

    def __init__(self, params: MetricParams, order: int):
        self.sol = series_coefficients(metric_sivp(params), order)
        self.order = order

    def at(self, t):
        if isinstance(t, Jet):
            K = t.order
            if K > self.order:
                raise ValueError("metric series is too short for the requested connection order")
            return [Jet(self.sol.coeffs[: K + 1, i]) for i in range(4)]
        return list(self.sol(t))


def local_family(idx: BundleIndex, d: LocalData, params: MetricParams, metric_order: int = 24) -> SingularIVP:
    """Singular IVP for ``u = (f t^{1-nu}, f' t^{-nu}, g, h)`` on ``P_j``, ``j = 2 nu - 1`` (``m = n = 1``)."""
    if not (idx.m == idx.n == 1 and params.m == params.n == 1):
        raise WrongBundle("the local family is implemented on M_{1,1}")
    nu = idx.nu
    r0, beta = params.r0, params.beta
    R = params.R
    jets = _MetricJets(params, metric_order)
    K0 = (1 - (2 * nu - 1) + 2 * beta**3 * (1 - 2 * d.h0)) / (4 * r0 * beta**2)
    uf0 = d.f0
    ufp0 = K0 * d.f0 / (2 * nu)
    y0 = np.array([uf0, ufp0, 2 * nu - 1, d.h0], dtype=float)

    def tpow(t, k):
        if isinstance(t, Jet):
            return Jet.monomial(k, t.order)
        return t**k

    def N(t, y):
        uf, ufp, g, h = y[0], y[1], y[2], y[3]
        ua, ub, p, w = jets.at(t)
        t2 = t * t
        b = R + t2 * ub
        bR = b + R
        Phib = bR * (2 * ua * ua + R * ub)
        Psib = bR * (b * ub - 2 * ua * ua)
        Chib = ua * bR * bR
        D1 = 2 * p * p * p * w * w
        D2 = 2 * p * p * p * p * w
        f = uf * tpow(t, nu - 1)
        fp = ufp * tpow(t, nu)
        Nf = (ufp * t2 * ((1 - h + 0.5 * g) * Phib + (0.5 * g + h) * Psib) + uf * (g - 1) * Chib) / D1 - (nu - 1) * uf
        Nfp = (uf * ((1 - 0.5 * g - h) * Phib + (h - 0.5 * g) * Psib) - ufp * (g + 1) * Chib) / D1 - nu * ufp
        Ng = t2 * (f * f - fp * fp - g) * bR * (4 * ua * ua - t2 * ub * ub) / D2
        Nh = bR * bR * (t2 * (h - 0.5 * fp * fp - 0.5 * f * f) * ub - 2 * uf * ufp * tpow(t, 2 * nu) * ua) / D2
        return [Nf, Nfp, Ng, Nh]

    # exact Jacobian of the leading part at y0; integer entries kept rational
    c = 1.0 / (4 * r0 * beta**2)
    J = np.array([
        [Fraction(2 * nu, 2) - nu, Fraction(0), 0.5 * uf0, Fraction(0)],
        [(1 - (2 * nu - 1) + 2 * beta**3 * (1 - 2 * d.h0)) * c, Fraction(-2 * nu), -0.5 * ufp0 - uf0 * c, -beta * uf0 / r0],
        [Fraction(0)] * 4,
        [Fraction(0)] * 4,
    ], dtype=object)
    return SingularIVP(N, y0, J, name=f"instanton(j={idx.j})")


def u_to_connection(u, t, nu: int):
    """``(u_f, u_f', u_g, u_h) -> (f, f', g, h)``."""
    u = np.asarray(u, dtype=float)
    return np.array([u[0] * t ** (nu - 1), u[1] * t**nu, u[2], u[3]])


def connection_to_u(z, t, nu: int):
    z = np.asarray(z, dtype=float)
    return np.array([z[0] / t ** (nu - 1), z[1] / t**nu, z[2], z[3]])


# integration on a profile ---------------------------------------------------------------

@dataclass
class Trajectory:
    """Connection states sampled along a profile."""

    t: np.ndarray
    z: np.ndarray
    exit_reason: str
    t_exit: float
    dense: object = None
    series: Optional[SeriesSolution] = None
    meta: dict = field(default_factory=dict)

    @property
    def tau(self):
        return np.log(self.t)

    def at(self, t):
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        return self.dense(np.log(t))


def _connection_field(f, fp, g, h, a, b, ad, bd, t, mn2, w2R):
    aa = a * a
    Phi = 2 * aa * b + w2R * (2 * aa + b * b - mn2)
    Psi = b * (b * b - 2 * aa - mn2) - 2 * aa * w2R
    Chi = a * (b * b + mn2) + 2 * a * b * w2R
    d1 = 2 * ad**3 * bd * bd / t
    d2 = 2 * ad**4 * bd / t
    return [
        (fp * (1 - h + 0.5 * g) * Phi + f * (g - 1) * Chi + fp * (0.5 * g + h) * Psi) / d1,
        (f * (1 - 0.5 * g - h) * Phi - fp * (g + 1) * Chi + f * (h - 0.5 * g) * Psi) / d1,
        (f * f - fp * fp - g) * (Phi - Psi) / d2,
        ((h - 0.5 * fp * fp - 0.5 * f * f) * (Phi + Psi) - 2 * f * fp * Chi) / d2,
    ]


def _constants(params: MetricParams):
    R = params.R
    return (params.m * params.n) ** 2 * R * R, params.m**2 * R


def connection_rhs_tau(profile: MetricProfile):
    """``dz/dtau`` with ``tau = log t`` along ``profile``."""
    mn2, w2R = _constants(profile.params)
    state = profile.state

    def rhs(tau, z):
        t = math.exp(tau)
        a, b, ad, bd = state(t)
        return _connection_field(z[0], z[1], z[2], z[3], a, b, ad, bd, t, mn2, w2R)

    return rhs


def joint_rhs_tau(params: MetricParams):
    """``d/dtau`` of ``(a, b, a', b', f, f', g, h)``: metric and connection together."""
    mn2, w2R = _constants(params)

    def rhs(tau, y):
        t = math.exp(tau)
        a, b, ad, bd = y[0], y[1], y[2], y[3]
        add, bdd = _second_derivatives(a, b, ad, bd, params)
        return [t * ad, t * bd, t * add, t * bdd] + _connection_field(y[4], y[5], y[6], y[7], a, b, ad, bd, t, mn2, w2R)

    return rhs


class PiecewiseDense:
    """Dense output in ``tau`` assembled from consecutive integration legs."""

    def __init__(self):
        self.legs = []

    def add(self, tau0, tau1, sol, offset):
        self.legs.append((tau0, tau1, sol, offset))

    def _one(self, tau):
        for tau0, tau1, sol, offset in self.legs:
            if tau <= tau1:
                return sol(max(tau, tau0))[offset:]
        tau0, tau1, sol, offset = self.legs[-1]
        return sol(tau1)[offset:]

    def __call__(self, tau):
        if np.ndim(tau) == 0:
            return self._one(float(tau))
        return np.array([self._one(float(x)) for x in tau]).T


def _legs(profile: MetricProfile, t0: float, T: float):
    """``(t_start, t_end, mode)`` pieces; ``mode`` is ``'profile'`` or ``'joint'``.

    Inside the numerically integrated part of a composite profile the metric
    equations are solved alongside the connection, which keeps the right-hand
    side smooth; elsewhere the analytic series of the profile are used.
    """
    if not (isinstance(profile, CompositeProfile) and isinstance(profile.middle, TabulatedProfile)):
        return [(t0, T, "profile")]
    legs = []
    if t0 < profile.t_near:
        legs.append((t0, min(T, profile.t_near), "profile"))
    lo = max(t0, profile.t_near)
    hi = min(T, profile.t_far)
    if hi > lo:
        legs.append((lo, hi, "joint"))
    if T > profile.t_far and profile.far is not None:
        legs.append((max(t0, profile.t_far), T, "profile"))
    return legs


def integrate_from(z0, profile: MetricProfile, t0: float, T_max: float, tol: float = 1e-11,
                   bound: float = BLOWUP_BOUND, n_samples: int = 400, dense: bool = True,
                   joint: bool = True) -> Trajectory:
    """Integrate the reduced equations from a regular state at ``t0``.

    With ``joint=False`` the profile is always evaluated through ``profile.state``
    (slower on tabulated profiles, but never re-integrates the metric).
    """
    def escape(tau, y):
        return max(abs(y[-4]), abs(y[-3]), abs(y[-2]), abs(y[-1])) - bound

    escape.terminal = True
    z = np.asarray(z0, dtype=float)
    pieces = PiecewiseDense()
    reason, nfev = "reached-end", 0
    tau_end = math.log(t0)
    legs = _legs(profile, t0, T_max) if joint else [(t0, T_max, "profile")]
    for ta, tb, mode in legs:
        span = (math.log(ta), math.log(tb))
        if mode == "joint":
            rhs = joint_rhs_tau(profile.params)
            y0 = np.concatenate([profile.middle.state(ta) if ta > profile.t_near else profile.near.state(ta), z])
            atol = np.array([1e-300] * 4 + [tol * 1e-2] * 4)
            offset = 4
        else:
            rhs = connection_rhs_tau(profile)
            y0, atol, offset = z, tol * 1e-2, 0
        sol = solve_ivp(rhs, span, y0, method="DOP853", rtol=tol, atol=atol, events=escape, dense_output=True)
        nfev += sol.nfev
        pieces.add(sol.t[0], sol.t[-1], sol.sol, offset)
        tau_end = sol.t[-1]
        z = sol.y[offset:, -1]
        if sol.status == -1:
            reason = "step-failure"
            break
        if sol.status == 1:
            reason = "blow-up"
            break
    taus = np.linspace(math.log(t0), tau_end, n_samples)
    zs = pieces(taus).T
    return Trajectory(np.exp(taus), zs, reason, math.exp(tau_end), pieces if dense else None,
                      meta={"nfev": nfev})


def integrate_connection(idx: BundleIndex, d: LocalData, profile: MetricProfile, t0: Optional[float] = None,
                         T_max: float = 1e2, tol: float = 1e-11, order: int = 10, strict: bool = True,
                         bound: float = BLOWUP_BOUND) -> Trajectory:
    """Series solution up to ``t0`` followed by numerical integration to ``T_max``.

    Raises
    ------
    BlowUp, StepFailure
        when ``strict`` and the trajectory escapes ``|z| > bound`` or the stepper fails.
    """
    params = profile.params
    t0 = 1e-3 * params.r0 if t0 is None else t0
    p = local_family(idx, d, params)
    series = series_coefficients(p, order)
    u0 = handoff(series, t0, tol=1e-9)
    z0 = u_to_connection(u0, t0, idx.nu)
    traj = integrate_from(z0, profile, t0, T_max, tol, bound)
    traj.series = series
    traj.meta.update(f0=d.f0, h0=d.h0, j=idx.j, t0=t0)
    if strict and traj.exit_reason == "blow-up":
        raise BlowUp(traj.t_exit)
    if strict and traj.exit_reason == "step-failure":
        raise StepFailure(traj.t_exit)
    return traj


def integrate_general(c0: InvariantConnection, profile: MetricProfile, t0: float, t1: float, ts,
                      rtol: float = 1e-12, atol: float = 1e-14) -> list:
    """Integrate :func:`general_rhs` in ``log t`` and return the connections at ``ts``."""
    params = profile.params

    def rhs(tau, y):
        t = math.exp(tau)
        return t * general_rhs(InvariantConnection.unflatten(y), profile.sample(t), params).flatten()

    sol = solve_ivp(rhs, (math.log(t0), math.log(t1)), c0.flatten(), method="DOP853", rtol=rtol, atol=atol,
                    t_eval=np.log(ts))
    if sol.status != 0:
        raise StepFailure(math.exp(sol.t[-1]))
    return [InvariantConnection.unflatten(y) for y in sol.y.T]


def trajectory_diagnostics(traj: Trajectory, profile: MetricProfile):
    """Per-sample ``(constraint residual, curvature norm)`` of the embedded connection."""
    params = profile.params
    res, curv = [], []
    for t, z in zip(traj.t, traj.z):
        s = profile.sample(t)
        c = embed_reduced(z)
        cdot = embed_reduced(reduced_rhs(z, s, params))
        res.append(constraint_residual(c, s))
        curv.append(curvature_norm(c, cdot, s, params))
    return np.array(res), np.array(curv)


# smooth extension over the singular orbit --------------------------------------------------

@dataclass
class ParityReport:
    orders: dict
    parities: dict
    expected: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def expected_orders(idx: BundleIndex) -> dict:
    """Required vanishing order and parity for each coefficient of the connection."""
    branch = idx.branch()
    if branch is None:
        raise WrongBundle(f"j={idx.j} fails the congruence conditions")
    s = idx.m + idx.n
    d12 = abs(Fraction(idx.j - idx.n, s))
    d12p = abs(Fraction(idx.j + idx.m, s))
    if d12.denominator != 1 or d12p.denominator != 1:
        raise WrongBundle("non-integral vanishing order")
    d12, d12p = int(d12), int(d12p)
    return {
        "A12": (d12, "even" if d12 % 2 == 0 else "odd"),
        "A12p": (d12p, "even" if d12p % 2 == 0 else "odd"),
        "Ars": (2, "even"),
        "Amn": (0, "even"),
    }


def _order_and_parity(coeffs, atol):
    nz = [k for k, c in enumerate(coeffs) if abs(c) > atol]
    if not nz:
        return None, "zero"
    if all(k % 2 == 0 for k in nz):
        par = "even"
    elif all(k % 2 == 1 for k in nz):
        par = "odd"
    else:
        par = "mixed"
    return nz[0], par


def bundle_basis_series(idx: BundleIndex, series: SeriesSolution) -> dict:
    """Coefficient series of ``(A12, A12', A_rs, A_mn)`` in powers of ``t`` from a ``u``-series on ``M_{1,1}``.

    ``A_rs = g - j`` measures the deviation from the canonical connection.
    """
    nu = idx.nu
    N = series.order
    size = N + nu + 1
    A12 = np.zeros(size)
    A12p = np.zeros(size)
    A12[nu - 1 : nu - 1 + N + 1] = series.coeffs[:, 0]
    A12p[nu : nu + N + 1] = series.coeffs[:, 1]
    Ars = np.zeros(size)
    Ars[: N + 1] = series.coeffs[:, 2]
    Ars[0] -= idx.j
    Amn = np.zeros(size)
    Amn[: N + 1] = series.coeffs[:, 3]
    return {"A12": A12, "A12p": A12p, "Ars": Ars, "Amn": Amn}


def parity_check(idx: BundleIndex, series, atol: float = 1e-12) -> ParityReport:
    """Check the smooth-extension conditions over the singular orbit.

    ``series`` is either a :class:`SeriesSolution` of the local family (``m = n = 1``)
    or a mapping ``{'A12', 'A12p', 'Ars', 'Amn'} -> coefficient array``.
    """
    expected = expected_orders(idx)
    table = bundle_basis_series(idx, series) if isinstance(series, SeriesSolution) else series
    scale = max(1.0, max(float(np.abs(v).max()) for v in table.values()))
    orders, parities, checks = {}, {}, {}
    for key, (order, parity) in expected.items():
        lead, par = _order_and_parity(table[key], atol * scale)
        orders[key], parities[key] = lead, par
        if par == "zero":
            checks[key] = True
        else:
            checks[key] = lead >= order and par == parity
    return ParityReport(orders, parities, expected, checks)
