"""Metric profile functions ``a(t), b(t)`` of the cohomogeneity-one G2-metric.

The torsion-free condition for the family reduces to a second-order system for
``(a, b)``.  Writing ``R = r0**3`` and
``Lambda = 4 a^2 (b + m^2 R)(b + n^2 R) - (b^2 - m^2 n^2 R^2)^2``, it reads::

    a'' = (2a^2 b + a^2 (m^2+n^2) R - b^3 + b m^2 n^2 R^2) / (2 a'^3 b')
    b'' = (a (b+m^2 R)(b+n^2 R) / (a'^2 b') - a'' b') / a'

and conserves the first integral ``(a'^2 b')^2 = Lambda / 4``.

Four profile implementations share the :class:`MetricProfile` interface: the
exact cone, the series about the singular orbit, the series at infinity, and a
numerically integrated complete solution (with the shooting parameter ``beta``
tuned so that the solution is asymptotically conical).
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BlowUp, DegenerateFrame, NoBracket, SeriesOrderUnavailable
from .sivp import SingularIVP, series_coefficients
from .taylor import Jet

CONE_K = math.sqrt(3.0) / 54.0
NU_INF = (math.sqrt(145.0) + 7.0) / 2.0


@dataclass(frozen=True)
class MetricParams:
    """Topological integers ``m, n``, scale ``r0`` and shooting parameter ``beta``.

    ``r0 = 0`` is accepted and describes the cone itself.
    """

    m: int = 1
    n: int = 1
    r0: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive integers")
        if math.gcd(int(self.m), int(self.n)) != 1:
            raise ValueError("m and n must be coprime")
        if not self.r0 >= 0.0:
            raise ValueError("r0 must be non-negative")
        if not self.beta > 0.0:
            raise ValueError("beta must be positive")

    @property
    def R(self) -> float:
        return self.r0**3

    def with_beta(self, beta: float) -> "MetricParams":
        return MetricParams(self.m, self.n, self.r0, float(beta))


@dataclass(frozen=True)
class MetricSample:
    t: float
    a: float
    b: float
    da: float
    db: float

    def as_array(self):
        return np.array([self.a, self.b, self.da, self.db])


@dataclass(frozen=True)
class CoefficientTriple:
    Phi: float
    Psi: float
    Chi: float


def coefficients(s: MetricSample, params: MetricParams, which: str = "m") -> CoefficientTriple:
    """The cubic coefficient functions built from ``a, b`` for weight ``m`` or ``n``."""
    w = {"m": params.m, "n": params.n}[which]
    return CoefficientTriple(*_coeffs(s.a, s.b, w, params))


def _coeffs(a, b, w, params):
    R = params.R
    mn2 = (params.m * params.n) ** 2 * R * R
    w2R = w * w * R
    Phi = 2 * a * a * b + w2R * (2 * a * a + b * b - mn2)
    Psi = b * (b * b - 2 * a * a - mn2) - 2 * a * a * w2R
    Chi = a * (b * b + mn2) + 2 * a * b * w2R
    return Phi, Psi, Chi


def metric_tensor(s: MetricSample, params: MetricParams) -> np.ndarray:
    """Matrix of ``dt^2 + g_t`` in the coframe ``(dt, e1, e2, e3, e1', e2', e3')``."""
    a, b, ad, bd = s.a, s.b, s.da, s.db
    if ad * bd == 0.0:
        raise DegenerateFrame(f"a' * b' vanishes at t={s.t!r}")
    R, m, n = params.R, params.m, params.n
    G = np.zeros((7, 7))
    G[0, 0] = 1.0
    G[1, 1] = G[2, 2] = a * (b + m * m * R) / (ad * bd)
    G[3, 3] = (a * a + b * m * m * R) / ad**2
    G[4, 4] = G[5, 5] = a * (b + n * n * R) / (ad * bd)
    G[6, 6] = (a * a + b * n * n * R) / ad**2
    off = -(b * b - (m * n * R) ** 2) / (2 * ad * bd)
    for i, j in ((1, 4), (2, 5)):
        G[i, j] = G[j, i] = off
    G[3, 6] = G[6, 3] = (b * b - 2 * a * a + (m * n * R) ** 2) / (2 * ad**2)
    return G


def hitchin_rhs(state, t, params: MetricParams):
    """Second derivatives ``(a'', b'')`` from ``state = (a, a', b, b')``.

    The system is autonomous; ``t`` is accepted for interface uniformity.
    """
    a, ad, b, bd = state
    if not (ad > 0 and bd > 0):
        raise DegenerateFrame(f"need a' > 0 and b' > 0, got a'={ad!r}, b'={bd!r}")
    return _second_derivatives(a, b, ad, bd, params)


def _second_derivatives(a, b, ad, bd, params):
    R, m, n = params.R, params.m, params.n
    add = (2 * a * a * b + a * a * (m * m + n * n) * R - b**3 + b * (m * n * R) ** 2) / (2 * ad**3 * bd)
    bdd = (a * (b + m * m * R) * (b + n * n * R) / (ad * ad * bd) - add * bd) / ad
    return add, bdd


def hitchin_constraint(a, b, ad, bd, params: MetricParams):
    """Relative defect of the first integral ``(a'^2 b')^2 = Lambda/4``."""
    R, m, n = params.R, params.m, params.n
    lam = 4 * a * a * (b + m * m * R) * (b + n * n * R) - (b * b - (m * n * R) ** 2) ** 2
    lhs = (ad * ad * bd) ** 2
    return (lhs - lam / 4) / np.maximum(np.abs(lhs), np.abs(lam) / 4)


# profiles ------------------------------------------------------------------------

class MetricProfile:
    """Evaluator ``t -> (a, b, a', b')`` valid on ``[t_min, t_max]``."""

    params: MetricParams
    t_min: float = 0.0
    t_max: float = math.inf
    name: str = "profile"

    def state(self, t):
        """``(a, b, a', b')`` at scalar ``t`` as a tuple of floats."""
        raise NotImplementedError

    def states(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.array([self.state(t) for t in ts])

    def gaps(self, t):
        """``(b - a, a' - b')``; subclasses that know these in closed form avoid the cancellation."""
        a, b, ad, bd = self.state(t)
        return b - a, ad - bd

    def sample(self, t) -> MetricSample:
        a, b, ad, bd = self.state(t)
        return MetricSample(float(t), float(a), float(b), float(ad), float(bd))

    def samples(self, ts):
        return [self.sample(t) for t in np.atleast_1d(ts)]

    def coefficient_functions(self, t, which="m"):
        a, b, _, _ = self.state(t)
        w = self.params.m if which == "m" else self.params.n
        return _coeffs(a, b, w, self.params)

    def contains(self, t) -> bool:
        return self.t_min <= t <= self.t_max


class ConeProfile(MetricProfile):
    """Exact conical solution ``a = b = k t^3`` (``k = sqrt(3)/54``); exact when ``r0 = 0``."""

    name = "cone"

    def __init__(self, params: MetricParams):
        self.params = params
        self.t_min, self.t_max = 0.0, math.inf

    def state(self, t):
        a = CONE_K * t**3
        ad = 3 * CONE_K * t**2
        return a, a, ad, ad


def metric_sivp(params: MetricParams) -> SingularIVP:
    """The metric equations as a singular IVP in ``(a/t, (b - mnR)/t^2, a', b'/t)``."""
    m, n, R = params.m, params.n, params.R
    mnR = m * n * R
    p0 = params.r0**2 * params.beta
    w0 = math.sqrt(m * n) * (m + n) * R / p0 if p0 > 0 else 0.0

    def N(t, y):
        ua, ub, p, w = y[0], y[1], y[2], y[3]
        b = mnR + t * t * ub
        p3w = p * p * p * w
        tadd = t * t * (ua * ua * (2 * b + (m * m + n * n) * R) - b * ub * (b + mnR)) / (2 * p3w)
        return [p - ua, w - 2 * ub, tadd, ua * (b + m * m * R) * (b + n * n * R) / p3w - tadd * w / p - w]

    return SingularIVP(N, np.array([p0, 0.5 * w0, p0, w0]), name="metric")


def closed_form_series_coefficients(params: MetricParams):
    """Closed-form low-order coefficients about the singular orbit.

    Returns ``(a_coeffs, b_coeffs)`` as arrays in increasing powers of ``t``
    (``a`` through ``t^3``, ``b`` through ``t^4``).
    """
    m, n, r0, beta = params.m, params.n, params.r0, params.beta
    smn = math.sqrt(m * n)
    a = np.array([0.0, r0**2 * beta, 0.0, ((m + n) * beta**3 - (m * n) ** 2.5) / (12 * smn * beta**3)])
    b = np.array([m * n * r0**3, 0.0, smn * (m + n) * r0 / (2 * beta), 0.0,
                  (m + n) / (96 * r0 * beta**5) * (7 - 4 * (m + n) * beta**3)])
    return a, b


class NearOrbitSeries(MetricProfile):
    """Truncated power series of ``a`` and ``b`` about the singular orbit ``t = 0``.

    Parameters
    ----------
    params : MetricParams
    order : int
        Highest power of ``t`` kept in ``a`` and ``b``.
    engine : bool
        Compute coefficients with the singular-IVP recursion.  Without it only
        the closed-form terms (``order <= 4``) are available.
    """

    name = "near-orbit"

    def __init__(self, params: MetricParams, order: int = 12, engine: bool = True):
        if order < 4:
            raise ValueError("order must be at least 4")
        if params.r0 <= 0:
            raise ValueError("the singular orbit needs r0 > 0")
        self.params = params
        self.order = order
        if engine:
            sol = series_coefficients(metric_sivp(params), order)
            ca = np.zeros(order + 1)
            cb = np.zeros(order + 1)
            ca[1:] = sol.coeffs[:order, 0]
            cb[0] = params.m * params.n * params.R
            cb[2:] = sol.coeffs[: order - 1, 1]
            self.trust_radius = sol.trust_radius
        else:
            if order > 4:
                raise SeriesOrderUnavailable("coefficients beyond t^4 need the series engine")
            pa, pb = closed_form_series_coefficients(params)
            ca = np.zeros(order + 1)
            cb = np.zeros(order + 1)
            ca[: pa.size] = pa
            cb[: pb.size] = pb
            self.trust_radius = math.inf
        self.a_coeffs, self.b_coeffs = ca, cb
        self._da = ca[1:] * np.arange(1, order + 1)
        self._db = cb[1:] * np.arange(1, order + 1)
        self.t_min = 0.0
        self.t_max = 0.5 * self.trust_radius if math.isfinite(self.trust_radius) else 0.1 * params.r0

    def state(self, t):
        P = np.polynomial.polynomial.polyval
        return P(t, self.a_coeffs), P(t, self.b_coeffs), P(t, self._da), P(t, self._db)

    def truncation_estimate(self, t) -> float:
        k = self.order
        return float(abs(self.a_coeffs[k - 1]) * t ** (k - 1) + abs(self.b_coeffs[k]) * t**k)


def cone_series_coefficients(m: int, n: int, order: int) -> np.ndarray:
    """Coefficients of ``A(Y)`` for the solutions with ``a = b`` near infinity.

    With ``Y = r0^3 / (k T^3)`` these solutions are ``a = b = k T^3 A(Y)``.
    The first integral becomes ``3 P^6 = 4 A^2 (A + m^2 Y)(A + n^2 Y) - (A^2 - m^2 n^2 Y^2)^2``
    with ``P = A - Y A'``; the coefficient of ``Y^i`` enters linearly with
    factor ``6 - 18 i``, which gives a recursion.
    """
    alpha = np.zeros(order + 1)
    alpha[0] = 1.0
    for i in range(1, order + 1):
        A = Jet(alpha[: i + 1].copy())
        A.c[i] = 0.0
        Y = Jet.variable(i)
        P = A - Y * A.derivative()
        lhs = 3 * P**6
        rhs = 4 * A * A * (A + m * m * Y) * (A + n * n * Y) - (A * A - (m * n) ** 2 * Y * Y) ** 2
        alpha[i] = -(lhs - rhs)[i] / (6 - 18 * i)
    return alpha


class AsymptoticSeries(MetricProfile):
    """Series at infinity: conical leading term, ``t^{-3}`` corrections and the decaying ``b - a`` mode.

    ``54/sqrt(3) T^-3 a = A(Y) - (c/3) T^-nu`` and ``54/sqrt(3) T^-3 b = A(Y) + (2c/3) T^-nu``
    with ``T = t + shift``; the time shift reflects the translation invariance
    of the equations.
    """

    name = "asymptotic"

    def __init__(self, params: MetricParams, c: float = 0.0, order: int = 6, shift: float = 0.0, t_min: float = 0.0):
        self.params = params
        self.c = float(c)
        self.shift = float(shift)
        self.order = order
        self.alpha = cone_series_coefficients(params.m, params.n, order)
        self._dalpha = self.alpha[1:] * np.arange(1, order + 1)
        self.t_min = t_min
        self.t_max = math.inf

    def state(self, t):
        T = t + self.shift
        k = CONE_K
        Y = self.params.R / (k * T**3)
        A = np.polynomial.polynomial.polyval(Y, self.alpha)
        P = A - Y * np.polynomial.polynomial.polyval(Y, self._dalpha)
        decay = self.c * T ** (-NU_INF)
        a = k * T**3 * (A - decay / 3)
        b = k * T**3 * (A + 2 * decay / 3)
        ddecay = (3 - NU_INF) * k * T**2 * decay
        ad = 3 * k * T**2 * P - ddecay / 3
        bd = 3 * k * T**2 * P + 2 * ddecay / 3
        return a, b, ad, bd

    def gaps(self, t):
        T = t + self.shift
        decay = self.c * T ** (-NU_INF)
        return CONE_K * T**3 * decay, (NU_INF - 3) * CONE_K * T**2 * decay


class TabulatedProfile(MetricProfile):
    """Cubic Hermite interpolation in ``log t`` on a uniform grid.

    Scalar evaluation avoids any search and costs a handful of flops, which
    matters because connection integrators call it thousands of times.
    """

    name = "tabulated"

    def __init__(self, params, log_t0, dlog, values, slopes):
        self.params = params
        self.log_t0 = float(log_t0)
        self.dlog = float(dlog)
        self.values = np.ascontiguousarray(values, dtype=float)
        self.slopes = np.ascontiguousarray(slopes, dtype=float) * self.dlog
        self.n_nodes = self.values.shape[0]
        self.t_min = math.exp(self.log_t0)
        self.t_max = math.exp(self.log_t0 + self.dlog * (self.n_nodes - 1))

    @classmethod
    def from_dense(cls, params, dense, log_t0, log_t1, dlog):
        n = int(math.ceil((log_t1 - log_t0) / dlog)) + 1
        dlog = (log_t1 - log_t0) / (n - 1)
        taus = log_t0 + dlog * np.arange(n)
        vals = dense(taus).T
        t = np.exp(taus)
        slopes = np.empty_like(vals)
        for i in range(n):
            a, b, ad, bd = vals[i]
            add, bdd = _second_derivatives(a, b, ad, bd, params)
            slopes[i] = t[i] * np.array([ad, bd, add, bdd])
        return cls(params, log_t0, dlog, vals, slopes)

    def state(self, t):
        x = (math.log(t) - self.log_t0) / self.dlog
        i = int(x)
        if i < 0:
            i = 0
        elif i > self.n_nodes - 2:
            i = self.n_nodes - 2
        s = x - i
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        y = h00 * self.values[i] + h10 * self.slopes[i] + h01 * self.values[i + 1] + h11 * self.slopes[i + 1]
        return y[0], y[1], y[2], y[3]


class CompositeProfile(MetricProfile):
    """Series near the singular orbit, a tabulated middle and a series at infinity."""

    name = "composite"

    def __init__(self, params, near: MetricProfile, middle: MetricProfile, far: Optional[MetricProfile],
                 t_near: float, t_far: float, info: Optional[dict] = None):
        self.params = params
        self.near, self.middle, self.far = near, middle, far
        self.t_near, self.t_far = t_near, t_far
        self.t_min = 0.0
        self.t_max = math.inf if far is not None else t_far
        self.info = info or {}

    def state(self, t):
        if t < self.t_near:
            return self.near.state(t)
        if t <= self.t_far or self.far is None:
            return self.middle.state(t)
        return self.far.state(t)

    def _piece(self, t):
        if t < self.t_near:
            return self.near
        if t <= self.t_far or self.far is None:
            return self.middle
        return self.far

    def gaps(self, t):
        return self._piece(t).gaps(t)


# integration and tuning -----------------------------------------------------------

COLLAPSE = "collapse"
ALC = "alc"
AC = "ac"


@dataclass
class ProfileRun:
    """Raw result of integrating the metric equations for one ``beta``."""

    params: MetricParams
    classification: str
    t_end: float
    t0: float
    dense: object
    seed: np.ndarray
    nfev: int


def _seed_state(params: MetricParams, t0: float, order: int = 12):
    near = NearOrbitSeries(params, order)
    return near, np.array(near.state(t0))


def _integrate(params: MetricParams, t0: float, T: float, rtol: float, dense: bool, stop_on_alc: bool = True,
               order: int = 12) -> ProfileRun:
    near, y0 = _seed_state(params, t0, order)

    def rhs(tau, y):
        t = math.exp(tau)
        a, b, ad, bd = y
        add, bdd = _second_derivatives(a, b, ad, bd, params)
        return [t * ad, t * bd, t * add, t * bdd]

    def frame(tau, y):
        return min(y[2], y[3])

    frame.terminal = True
    frame.direction = -1

    def crossing(tau, y):
        return y[1] - y[0]

    crossing.terminal = stop_on_alc
    crossing.direction = -1
    sol = solve_ivp(rhs, (math.log(t0), math.log(T)), y0, method="DOP853", rtol=rtol, atol=1e-300,
                    events=[frame, crossing], dense_output=dense)
    if sol.status == -1:
        cls = COLLAPSE
    elif sol.t_events[0].size:
        cls = COLLAPSE
    elif sol.t_events[1].size or sol.y[1, -1] < sol.y[0, -1]:
        cls = ALC
    else:
        cls = AC
    return ProfileRun(params, cls, math.exp(sol.t[-1]), t0, sol.sol if dense else None, y0, sol.nfev)


def classify_beta(params: MetricParams, t0: Optional[float] = None, T: Optional[float] = None, rtol: float = 1e-12) -> str:
    """``'collapse'`` (frame degenerates, beta too small), ``'alc'`` (b drops below a, beta too
    large) or ``'ac'`` (neither happens before ``T``)."""
    t0 = 1e-3 * params.r0 if t0 is None else t0
    T = 1e3 * params.r0 if T is None else T
    return _integrate(params, t0, T, rtol, dense=False).classification


def integrate_ac_profile(params: MetricParams, t0: Optional[float] = None, T_max: Optional[float] = None,
                         tol: float = 1e-12, dlog: float = 0.004) -> CompositeProfile:
    """Integrate the metric equations from the singular orbit to ``T_max``.

    Returns a composite profile (series below ``t0``, tabulated solution above).
    The ``classification`` entry of ``info`` records whether the run stayed
    asymptotically conical (``'ac'``) or turned ALC (``'alc'``, ``b`` falls
    below ``a``).

    Raises
    ------
    BlowUp
        if the frame degenerates (``a'`` or ``b'`` reaches zero) before ``T_max``.
    """
    t0 = 1e-3 * params.r0 if t0 is None else t0
    T_max = 3e4 * params.r0 if T_max is None else T_max
    run = _integrate(params, t0, T_max, tol, dense=True, stop_on_alc=False)
    if run.classification == COLLAPSE:
        raise BlowUp(run.t_end, f"frame degenerates at t={run.t_end!r} (beta={params.beta!r} is below the AC value)")
    near = NearOrbitSeries(params, 12)
    table = TabulatedProfile.from_dense(params, run.dense, math.log(t0), math.log(run.t_end), dlog)
    info = {"classification": run.classification, "t0": t0, "T_max": run.t_end, "tol": tol, "nfev": run.nfev}
    return CompositeProfile(params, near, table, None, t0, run.t_end, info)


@dataclass
class BetaTuning:
    beta: float
    bracket: tuple
    iterations: int
    history: list = field(default_factory=list)


def tune_beta_ac(params: MetricParams, bracket=(0.5, 3.0), tol: float = 1e-15, T_class: Optional[float] = None,
                 rtol: float = 1e-12, max_iter: int = 200) -> BetaTuning:
    """Bisect on ``beta`` between a collapsing and an ALC-type solution.

    A run counts as "above" when ``b`` drops below ``a`` before ``T_class`` and
    as "below" otherwise; at the AC value the unstable mode grows like
    ``t^2.52``, so this split converges to the AC value at float resolution.
    Stops when the relative bracket width is below ``tol`` or no float lies
    strictly between the endpoints.
    """
    lo, hi = float(bracket[0]), float(bracket[1])

    def above(beta):
        c = classify_beta(params.with_beta(beta), T=T_class, rtol=rtol)
        history.append((beta, c))
        return c == ALC

    history = []
    if above(lo) or not above(hi):
        raise NoBracket(f"bracket endpoints classify as {history[0][1]!r} and {history[-1][1]!r}")
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or (hi - lo) <= tol * hi:
            break
        if above(mid):
            hi = mid
        else:
            lo = mid
    return BetaTuning(0.5 * (lo + hi), (lo, hi), it, history)


@dataclass
class FarFieldFit:
    shift: float
    c: float
    exponent: float
    window: tuple
    match_t: float


def fit_far_field(profile: MetricProfile, window=(5.0, 25.0), match_t: Optional[float] = None, npts: int = 48,
                  order: int = 6) -> FarFieldFit:
    """Fit the time shift (from ``a`` far out) and the decaying ``b - a`` mode.

    The decay exponent is measured on a log-log fit of ``54/sqrt(3) T^-3 (b - a)``
    against the shifted time ``T = t + shift`` over ``window`` (in units of ``r0``).
    """
    params = profile.params
    r0 = params.r0
    match_t = min(1e3 * r0, profile.t_max) if match_t is None else match_t
    a_m = profile.state(match_t)[0]
    base = AsymptoticSeries(params, 0.0, order)
    shift = brentq(lambda s: base.state(match_t + s)[0] - a_m, -0.5 * match_t, 0.5 * match_t, xtol=1e-14 * match_t)
    ts = np.geomspace(window[0] * r0, window[1] * r0, npts)
    st = profile.states(ts)
    T = ts + shift
    q = (st[:, 1] - st[:, 0]) / (CONE_K * T**3)
    if np.any(q <= 0):
        return FarFieldFit(shift, float("nan"), float("nan"), tuple(window), match_t)
    slope, icpt = np.polyfit(np.log(T), np.log(q), 1)
    c = math.exp(icpt)
    return FarFieldFit(float(shift), float(c), float(-slope), tuple(window), float(match_t))


def with_far_field(prof: CompositeProfile, t_switch: Optional[float] = None) -> CompositeProfile:
    """Attach the fitted series at infinity and hand over to it at ``t_switch`` (default ``40 r0``).

    Past a few tens of ``r0`` the integrated ``b - a`` sinks below the integration
    tolerance and the residual growing mode takes over, so the series is the
    better description there even though the integration continued further.
    """
    fit = fit_far_field(prof)
    t_switch = min(40.0 * prof.params.r0 if t_switch is None else t_switch, prof.t_far)
    far = AsymptoticSeries(prof.params, fit.c, 6, fit.shift, t_min=t_switch)
    info = dict(prof.info)
    info.update(beta=prof.params.beta, shift=fit.shift, c=fit.c, exponent=fit.exponent, fit_window=list(fit.window),
                t_switch=t_switch)
    return CompositeProfile(prof.params, prof.near, prof.middle, far, prof.t_near, t_switch, info)


def ac_profile(params: MetricParams, T_max: Optional[float] = None, t0: Optional[float] = None,
               rtol: float = 1e-12) -> CompositeProfile:
    """Profile for the given ``beta`` with the series at infinity attached.

    Raises
    ------
    BlowUp
        if the metric collapses; NoBracket if it is not asymptotically conical up to ``T_max``.
    """
    prof = integrate_ac_profile(params, t0, T_max, rtol)
    if prof.info["classification"] != AC:
        raise NoBracket(f"beta={params.beta!r} does not give an asymptotically conical metric up to T_max")
    return with_far_field(prof)


def tuned_ac_profile(params: MetricParams, bracket=(0.5, 3.0), tol: float = 1e-15, T_max: Optional[float] = None,
                     t0: Optional[float] = None, rtol: float = 1e-12) -> CompositeProfile:
    """Tune ``beta``, integrate the AC solution and attach the fitted series at infinity."""
    tuning = tune_beta_ac(params, bracket, tol, rtol=rtol)
    T_max = 3e4 * params.r0 if T_max is None else T_max
    candidates = [tuning.beta, tuning.bracket[0], tuning.bracket[1]]
    prof = None
    for beta in candidates:
        try:
            prof = integrate_ac_profile(params.with_beta(beta), t0, T_max, rtol)
        except BlowUp:
            continue
        if prof.info["classification"] == AC:
            break
    if prof is None or prof.info["classification"] != AC:
        raise NoBracket("no candidate beta stays asymptotically conical up to T_max")
    out = with_far_field(prof)
    out.info.update(bracket=list(tuning.bracket), iterations=tuning.iterations)
    return out


# checks and export ------------------------------------------------------------------

INEQUALITIES = ("b>a>0", "da>db>0", "b>-w^2R", "b>mnR", "lambda>0", "ka>X")


def inequality_audit(profile: MetricProfile, ts) -> dict:
    """Pointwise check of the global inequalities satisfied by the AC solution.

    ``ka > X`` for every ``k`` in ``(1, 2)`` is checked in its strongest form ``a >= X``.
    Returns a mapping from inequality label to a boolean array over ``ts``.
    """
    p = profile.params
    R, m, n = p.R, p.m, p.n
    st = profile.states(ts)
    a, b, ad, bd = st.T
    gap, dgap = np.array([profile.gaps(t) for t in np.atleast_1d(ts)]).T
    X = (b * b - (m * n * R) ** 2) / np.sqrt((b + m * m * R) * (b + n * n * R))
    lam = 4 * a * a * (b + m * m * R) * (b + n * n * R) - (b * b - (m * n * R) ** 2) ** 2
    return {
        "b>a>0": (gap > 0) & (a > 0),
        "da>db>0": (dgap > 0) & (bd > 0),
        "b>-w^2R": b > max(-m * m * R, -n * n * R),
        "b>mnR": b > m * n * R,
        "lambda>0": lam > 0,
        "ka>X": (b - X) - gap >= 0,
    }


def write_profile_csv(profile: MetricProfile, ts, path) -> None:
    rows = profile.states(ts)
    _atomic_write(path, lambda fh: _write_rows(fh, ["t", "a", "b", "da", "db"], np.column_stack([ts, rows])))


def profile_manifest(profile: MetricProfile, tol=None) -> dict:
    p = profile.params
    info = getattr(profile, "info", {})
    return {"m": p.m, "n": p.n, "r0": p.r0, "beta": p.beta, "tol": info.get("tol", tol),
            "t0": info.get("t0"), "T_max": info.get("T_max"), **{k: v for k, v in info.items() if k not in ("tol", "t0", "T_max")}}


def _write_rows(fh, header, rows):
    w = csv.writer(fh)
    w.writerow(header)
    for r in rows:
        w.writerow([format(float(x), ".17g") for x in r])


def _atomic_write(path, writer, mode="w"):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_profile_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data


def manifest_json(d: dict) -> str:
    return json.dumps(d, indent=1, sort_keys=True, default=float)
