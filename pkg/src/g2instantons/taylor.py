"""Truncated power series ("jets") in one variable.

A :class:`Jet` holds the coefficients ``c[0..K]`` of a polynomial in ``t``
modulo ``t**(K+1)``.  Arithmetic mixes freely with Python and numpy scalars,
so right-hand sides written with ordinary operators can be expanded about
``t = 0`` by passing jets instead of floats.
"""
from __future__ import annotations

import numbers

import numpy as np


class Jet:
    __slots__ = ("c",)
    __array_priority__ = 1000

    def __init__(self, coeffs):
        self.c = np.array(coeffs, dtype=float)
        if self.c.ndim != 1 or self.c.size == 0:
            raise ValueError("jet needs a non-empty 1-d coefficient array")

    @property
    def order(self) -> int:
        return self.c.size - 1

    @classmethod
    def constant(cls, value, order):
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, order):
        """The jet of ``t`` itself."""
        c = np.zeros(order + 1)
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def monomial(cls, power, order):
        c = np.zeros(order + 1)
        if power <= order:
            c[power] = 1.0
        return cls(c)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.c.size != self.c.size:
                raise ValueError("jets of different order")
            return other
        if isinstance(other, numbers.Number) or np.ndim(other) == 0:
            return Jet.constant(float(other), self.order)
        return NotImplemented

    def __repr__(self):
        return f"Jet({self.c.tolist()})"

    def __neg__(self):
        return Jet(-self.c)

    def __pos__(self):
        return self

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Jet(self.c + o.c)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Jet(self.c - o.c)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Jet(o.c - self.c)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if other.c.size != self.c.size:
                raise ValueError("jets of different order")
            return Jet(np.convolve(self.c, other.c)[: self.c.size])
        if isinstance(other, numbers.Number) or np.ndim(other) == 0:
            return Jet(self.c * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def reciprocal(self):
        c0 = self.c[0]
        if c0 == 0.0:
            raise ZeroDivisionError("jet with zero constant term is not invertible")
        K = self.c.size
        out = np.zeros(K)
        out[0] = 1.0 / c0
        for k in range(1, K):
            out[k] = -np.dot(self.c[1 : k + 1], out[k - 1 :: -1][:k]) / c0
        return Jet(out)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if isinstance(other, numbers.Number) or np.ndim(other) == 0:
            return Jet(self.c / float(other))
        return NotImplemented

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, numbers.Integral):
            if p < 0:
                return (self ** (-p)).reciprocal()
            out = Jet.constant(1.0, self.order)
            base = self
            while p:
                if p & 1:
                    out = out * base
                base = base * base
                p >>= 1
            return out
        return self.power(float(p))

    def power(self, p: float):
        """Real power via the recurrence ``c0 * d_k = sum_j (p*j - (k-j)) c_j d_{k-j} / k``."""
        c = self.c
        if c[0] <= 0.0:
            raise ValueError("non-integer power needs a positive constant term")
        K = c.size
        d = np.zeros(K)
        d[0] = c[0] ** p
        for k in range(1, K):
            j = np.arange(1, k + 1)
            d[k] = np.dot((p * j - (k - j)) * c[1 : k + 1], d[k - 1 :: -1][:k]) / (k * c[0])
        return Jet(d)

    def sqrt(self):
        return self.power(0.5)

    def derivative(self):
        """Term-wise derivative, keeping the same order (top coefficient becomes 0)."""
        K = self.c.size
        out = np.zeros(K)
        out[:-1] = self.c[1:] * np.arange(1, K)
        return Jet(out)

    def shift(self, k: int):
        """Multiply by ``t**k`` (truncating)."""
        out = np.zeros_like(self.c)
        if k < self.c.size:
            out[k:] = self.c[: self.c.size - k]
        return Jet(out)

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.c)

    def __getitem__(self, k):
        return self.c[k]


def sqrt(x):
    """Square root for floats or jets."""
    if isinstance(x, Jet):
        return x.sqrt()
    return np.sqrt(x)


def is_jet(x) -> bool:
    return isinstance(x, Jet)
