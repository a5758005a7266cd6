"""Power-series solutions of singular initial value problems.

The problems handled have the form::

    dy/dt = M_{-1}(y) / t + M(t, y),      y(0) = y0,

with ``M_{-1}(y0) = 0`` and ``h*I - dM_{-1}(y0)`` invertible for every
positive integer ``h``.  Under these conditions the solution is unique and
given by a convergent power series, which we build order by order.

The engine works with the scaled field ``N(t, y) = t * dy/dt =
M_{-1}(y) + t*M(t, y)``.  When ``N`` is written with ordinary arithmetic it
can be evaluated on :class:`~g2instantons.taylor.Jet` arguments and the
Taylor coefficients needed by the recursion come out exactly (to rounding).
Evaluators that only accept floats fall back to a least-squares polynomial
fit of samples at small positive ``t``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConditionViolated, OutOfTrust, SingularRecursion
from .taylor import Jet

DEFAULT_ORDER = 8
DEFAULT_H = 20


@dataclass
class SingularIVP:
    """A singular IVP given through its scaled field ``N(t, y) = t*y'``.

    Parameters
    ----------
    scaled_field : callable
        ``N(t, y)`` returning a sequence of length ``k``.  Must accept floats;
        accepting :class:`Jet` arguments enables exact series recursion.
    y0 : array_like
        Value at ``t = 0``.
    jacobian : array_like, optional
        Exact ``dM_{-1}(y0)``.  Entries may be floats or ``Fraction``.
    """

    scaled_field: Callable
    y0: np.ndarray
    jacobian: Optional[np.ndarray] = None
    name: str = "sivp"

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)

    @property
    def dimension(self) -> int:
        return self.y0.size

    @classmethod
    def from_parts(cls, m_minus1, m_regular, y0, jacobian=None, name="sivp"):
        """Build from separate evaluators ``M_{-1}(y)`` and ``M(t, y)``."""

        def N(t, y):
            lead = m_minus1(y)
            reg = m_regular(t, y)
            return [lead[i] + t * reg[i] for i in range(len(lead))]

        return cls(N, y0, jacobian, name)

    def m_minus1(self, y):
        return np.asarray(self.scaled_field(0.0, np.asarray(y, dtype=float)), dtype=float)

    def m_regular(self, t, y):
        """``M(t, y)`` for ``t > 0``."""
        y = np.asarray(y, dtype=float)
        return (np.asarray(self.scaled_field(t, y), dtype=float) - self.m_minus1(y)) / t

    def rhs(self, t, y):
        """``dy/dt`` for ``t > 0``, suitable for a regular integrator."""
        return np.asarray(self.scaled_field(t, np.asarray(y, dtype=float)), dtype=float) / t

    def lead_jacobian(self):
        if self.jacobian is not None:
            return np.asarray(self.jacobian)
        return fd_jacobian(self.m_minus1, self.y0)


def fd_jacobian(func, y0, rel_step=1e-6):
    """Central finite-difference Jacobian with step ``rel_step*(1+|y0|)``."""
    y0 = np.asarray(y0, dtype=float)
    f0 = np.asarray(func(y0), dtype=float)
    J = np.zeros((f0.size, y0.size))
    for i in range(y0.size):
        step = rel_step * (1.0 + abs(y0[i]))
        e = np.zeros_like(y0)
        e[i] = step
        J[:, i] = (np.asarray(func(y0 + e)) - np.asarray(func(y0 - e))) / (2 * step)
    return J


# exact linear algebra on rationals ------------------------------------------------

def _as_fraction_matrix(A):
    return [[x if isinstance(x, Fraction) else Fraction(float(x)) for x in row] for row in np.asarray(A, dtype=object)]


def exact_det(A) -> Fraction:
    """Determinant by fraction-free Bareiss elimination (exact for rational input)."""
    M = _as_fraction_matrix(A)
    n = len(M)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) / prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


def exact_charpoly(A) -> list:
    """Coefficients of ``det(h*I - A)`` (highest degree first), Faddeev-LeVerrier."""
    M = _as_fraction_matrix(A)
    n = len(M)
    coeffs = [Fraction(1)]
    Mk = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        # Mk <- A*Mk + c_{k-1} I
        AM = [[sum(M[i][l] * Mk[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        for i in range(n):
            AM[i][i] += coeffs[-1]
        Mk = AM
        AMk = [[sum(M[i][l] * Mk[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        ck = -sum(AMk[i][i] for i in range(n)) / k
        coeffs.append(ck)
    return coeffs


@dataclass
class ConditionReport:
    residual: float
    determinants: dict
    min_abs_det: float
    argmin_h: int
    exact: bool
    charpoly: Optional[list] = None

    def as_dict(self):
        return {
            "residual": self.residual,
            "determinants": {str(h): (str(d) if isinstance(d, Fraction) else d) for h, d in self.determinants.items()},
            "min_abs_det": self.min_abs_det,
            "argmin_h": self.argmin_h,
            "exact": self.exact,
            "charpoly": None if self.charpoly is None else [str(c) for c in self.charpoly],
        }


def check_conditions(p: SingularIVP, H: int = DEFAULT_H, tol: float = 1e-10) -> ConditionReport:
    """Verify ``M_{-1}(y0) = 0`` and invertibility of ``h*I - dM_{-1}(y0)`` for ``h = 1..H``.

    With an exact Jacobian the determinants are computed in rational arithmetic
    and a value is rejected only if it is exactly zero.
    """
    residual = float(np.linalg.norm(p.m_minus1(p.y0)))
    if residual > tol * (1.0 + float(np.linalg.norm(p.y0))):
        raise ConditionViolated(f"M_-1(y0) does not vanish: |M_-1(y0)| = {residual:.3e}", residual=residual)
    exact = p.jacobian is not None
    J = p.lead_jacobian()
    k = p.dimension
    dets = {}
    charpoly = None
    if exact:
        charpoly = exact_charpoly(J)
        for h in range(1, H + 1):
            dets[h] = exact_det(np.array([[Fraction(h) * (i == j) - _frac(J[i, j]) for j in range(k)] for i in range(k)], dtype=object))
        bad = [h for h, d in dets.items() if d == 0]
    else:
        Jf = np.asarray(J, dtype=float)
        scale = max(1.0, float(np.abs(Jf).max()))
        for h in range(1, H + 1):
            dets[h] = float(np.linalg.det(h * np.eye(k) - Jf))
        bad = [h for h, d in dets.items() if abs(d) < tol * (h + scale) ** k]
    absdets = {h: abs(float(d)) for h, d in dets.items()}
    hmin = min(absdets, key=absdets.get)
    if bad:
        raise ConditionViolated(f"h*I - dM_-1(y0) is singular at h = {bad}", h=bad[0], residual=residual)
    return ConditionReport(residual, dets, absdets[hmin], hmin, exact, charpoly)


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(float(x))


@dataclass
class SeriesSolution:
    """Coefficients ``coeffs[h]`` of ``y(t) = sum_h coeffs[h] t**h``."""

    coeffs: np.ndarray
    trust_radius: float
    parity: list = field(default_factory=list)
    tol: float = 1e-10

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def derivative(self, t):
        d = self.coeffs[1:] * np.arange(1, self.coeffs.shape[0])[:, None]
        if d.shape[0] == 0:
            return np.zeros(self.coeffs.shape[1])
        return np.polynomial.polynomial.polyval(t, d)

    def component(self, i) -> np.ndarray:
        return self.coeffs[:, i].copy()

    def truncation_estimate(self, t) -> float:
        """Size of the last two retained terms, a proxy for the neglected tail."""
        N = self.order
        if N == 0:
            return 0.0
        tail = [np.abs(self.coeffs[h]).max() * t**h for h in range(max(1, N - 1), N + 1)]
        return float(max(tail))

    def to_json(self) -> str:
        table = {str(h): [float(x) for x in self.coeffs[h]] for h in range(self.coeffs.shape[0])}
        return json.dumps({"coefficients": table, "trust_radius": self.trust_radius, "parity": self.parity}, indent=1)

    @classmethod
    def from_json(cls, text: str):
        d = json.loads(text)
        rows = sorted(d["coefficients"].items(), key=lambda kv: int(kv[0]))
        return cls(np.array([v for _, v in rows], dtype=float), float(d["trust_radius"]), d.get("parity", []))


def _jet_coefficient(p: SingularIVP, coeffs, order):
    """Order-``order`` Taylor coefficient of ``t -> N(t, y_<order(t))``."""
    K = order
    T = Jet.variable(K)
    Y = [Jet(np.concatenate([coeffs[:K, i], [0.0]])) for i in range(p.dimension)]
    out = p.scaled_field(T, Y)
    return np.array([o[K] if isinstance(o, Jet) else (float(o) if K == 0 else 0.0) for o in out])


def _fd_coefficient(p: SingularIVP, coeffs, order, delta=None):
    """Fallback: Taylor coefficient from samples at small positive ``t`` by polynomial fitting."""
    K = order
    if delta is None:
        delta = 0.05
    nodes = delta * (1 + np.cos(np.pi * (np.arange(2 * K + 3) + 0.5) / (2 * K + 3))) / 2
    vals = []
    for t in nodes:
        y = np.polynomial.polynomial.polyval(t, coeffs[:K])
        vals.append(np.asarray(p.scaled_field(t, y), dtype=float))
    vals = np.array(vals)
    V = np.vander(nodes / delta, K + 3, increasing=True)
    sol, *_ = np.linalg.lstsq(V, vals, rcond=None)
    return sol[K] / delta**K


def _supports_jets(p: SingularIVP) -> bool:
    try:
        T = Jet.variable(1)
        Y = [Jet.constant(v, 1) for v in p.y0]
        out = p.scaled_field(T, Y)
        return all(isinstance(o, (Jet, float, int, np.floating)) for o in out)
    except (TypeError, AttributeError, ValueError):
        return False


def series_coefficients(p: SingularIVP, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> SeriesSolution:
    """Solve ``(h*I - dM_{-1}(y0)) c_h = [N(t, y_<h)]_h`` for ``h = 1..N``."""
    k = p.dimension
    coeffs = np.zeros((N + 1, k))
    coeffs[0] = p.y0
    if N == 0:
        return SeriesSolution(coeffs, math.inf, _parity_flags(coeffs), tol)
    J = np.asarray(p.lead_jacobian(), dtype=float)
    use_jets = _supports_jets(p)
    for h in range(1, N + 1):
        rhs = _jet_coefficient(p, coeffs, h) if use_jets else _fd_coefficient(p, coeffs, h)
        A = h * np.eye(k) - J
        if np.linalg.cond(A) > 1e12:
            raise SingularRecursion(h)
        coeffs[h] = np.linalg.solve(A, rhs)
    return SeriesSolution(coeffs, _trust_radius(coeffs), _parity_flags(coeffs), tol)


def _trust_radius(coeffs) -> float:
    """Root-test estimate of the convergence radius from the upper half of the coefficients."""
    N = coeffs.shape[0] - 1
    roots = []
    for h in range(max(1, N // 2), N + 1):
        mag = float(np.abs(coeffs[h]).max())
        if mag > 0:
            roots.append(mag ** (1.0 / h))
    if not roots:
        return math.inf
    return 1.0 / max(roots)


def _parity_flags(coeffs, rtol=1e-12):
    """Per component: 'even', 'odd', 'zero' or 'mixed' according to the nonzero powers."""
    flags = []
    scale = max(1.0, float(np.abs(coeffs).max()))
    for i in range(coeffs.shape[1]):
        nz = [h for h in range(coeffs.shape[0]) if abs(coeffs[h, i]) > rtol * scale]
        if not nz:
            flags.append("zero")
        elif all(h % 2 == 0 for h in nz):
            flags.append("even")
        elif all(h % 2 == 1 for h in nz):
            flags.append("odd")
        else:
            flags.append("mixed")
    return flags


def handoff(sol: SeriesSolution, t0: float, tol: Optional[float] = None):
    """State (and derivative) at ``t0`` for seeding a regular integrator."""
    tol = sol.tol if tol is None else tol
    err = sol.truncation_estimate(t0)
    scale = 1.0 + float(np.abs(sol.coeffs[0]).max())
    if t0 >= sol.trust_radius or err > tol * scale:
        raise OutOfTrust(f"series truncation estimate {err:.3e} at t0={t0!r} exceeds tolerance (trust radius {sol.trust_radius:.3e})")
    return sol(t0)


def residual(p: SingularIVP, sol: SeriesSolution, t) -> float:
    """``|y' - N(t,y)/t|`` for the truncated series at ``t > 0``."""
    y = sol(t)
    return float(np.linalg.norm(sol.derivative(t) - p.rhs(t, y)))


def solve_from_origin(p: SingularIVP, t_end: float, t0: float, N: int = DEFAULT_ORDER, tol: float = 1e-10,
                      rtol: float = 1e-11, atol: float = 1e-13, method: str = "DOP853", dense_output=False):
    """Series to ``t0`` then a regular integrator to ``t_end``."""
    from scipy.integrate import solve_ivp

    sol = series_coefficients(p, N, tol)
    y0 = handoff(sol, t0)
    return solve_ivp(p.rhs, (t0, t_end), y0, method=method, rtol=rtol, atol=atol, dense_output=dense_output)


def evaluate(coeff_rows: Sequence, t):
    return np.polynomial.polynomial.polyval(t, np.asarray(coeff_rows))
