"""Closed-form solutions used as oracles: flat connections, the abelian family and the conical limit."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DenominatorVanishes
from .metric import MetricProfile
from .su2 import ConnectionState

Z_PLUS = (1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0)
Z_MINUS = (-1.0 / 3.0, -1.0 / 3.0, 0.0, 1.0 / 3.0)


def flat_connections(j: int = 1) -> list:
    """The two flat states ``(+-1, 0, 1, 1/2)`` followed by the canonical state ``(0, 0, j, 0)``.

    The canonical state is listed for comparison; it is not flat in this normalization.
    """
    return [ConnectionState(1.0, 0.0, 1.0, 0.5), ConnectionState(-1.0, 0.0, 1.0, 0.5),
            ConnectionState(0.0, 0.0, float(j), 0.0)]


def limit_state() -> ConnectionState:
    """Rescaled image of the limit connection ``(1/3) sum E_i (e_i + e_i')``."""
    return ConnectionState(*Z_PLUS)


class AbelianSolution:
    """``f = f' = 0``, ``g = 4 j R^2 / (b + R)^2`` and ``h = h0 exp(I(t))`` with
    ``I' = 2 b' (b - R) / (4 a^2 - (b - R)^2)``, ``I(0) = 0``.

    Parameters
    ----------
    j : int
        Isotropy weight; ``g(0) = j``.
    h0 : float
        Value of ``h`` at the singular orbit.
    profile : MetricProfile
        Metric with ``m = n = 1``.
    t_end : float, optional
        Largest time at which ``h`` is needed. Defaults to ``1e3 r0``.
    """

    def __init__(self, j: int, h0: float, profile: MetricProfile, t_end: float = None, t_start: float = None,
                 rtol: float = 1e-12):
        self.j, self.h0, self.profile = j, float(h0), profile
        self.params = profile.params
        r0 = self.params.r0
        self.R = self.params.R
        self.t_end = 1e3 * r0 if t_end is None else float(t_end)
        # below t_start the integrand is linear in t to high accuracy
        self.t_start = 1e-6 * r0 if t_start is None else float(t_start)
        I0 = 0.5 * self.t_start * self.integrand(self.t_start)

        def rhs(tau, y):
            t = math.exp(tau)
            return [t * self.integrand(t)]

        sol = solve_ivp(rhs, (math.log(self.t_start), math.log(self.t_end)), [I0], method="DOP853",
                        rtol=rtol, atol=1e-15, dense_output=True)
        self._exponent = sol.sol

    def integrand(self, t):
        a, b, ad, bd = self.profile.state(t)
        bR = b - self.R
        den = 4 * a * a - bR * bR
        if den <= 0.0:
            raise DenominatorVanishes(t)
        return 2 * bd * bR / den

    def exponent(self, t):
        """``I(t) = log(h/h0)``."""
        if t <= self.t_start:
            return 0.5 * t * self.integrand(t) if t > 0 else 0.0
        if t > self.t_end * (1 + 1e-12):
            raise ValueError(f"t={t!r} beyond the tabulated range {self.t_end!r}")
        return float(self._exponent(math.log(t))[0])

    def g(self, t):
        b = self.profile.state(t)[1]
        return 4 * self.j * self.R * self.R / (b + self.R) ** 2

    def h(self, t):
        if self.h0 == 0.0:
            return 0.0
        return self.h0 * math.exp(self.exponent(t))

    def state(self, t) -> np.ndarray:
        return np.array([0.0, 0.0, self.g(t), self.h(t)])

    def states(self, ts) -> np.ndarray:
        return np.array([self.state(t) for t in np.atleast_1d(ts)])


def abelian_solution(j: int, h0: float, profile: MetricProfile, **kw) -> AbelianSolution:
    return AbelianSolution(j, h0, profile, **kw)
