"""su(2)-valued invariant connection coefficients.

Elements of su(2) are stored as length-3 float arrays of coefficients in a
basis ``E1, E2, E3`` normalised so that ``[E_i, E_j] = E_k`` for cyclic
``(i, j, k)``; the bracket is then the vector cross product.

An invariant connection on a principal orbit is described by six su(2)
elements, the coefficients of the coframe ``e1, e2, e3, e1', e2', e3'``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveMetric

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
BASIS = (E1, E2, E3)

CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))

# coframe slots in the 7-dimensional frame (dt, e1, e2, e3, e1', e2', e3')
_UNPRIMED = (1, 2, 3)
_PRIMED = (4, 5, 6)


def bracket(x, y):
    """Lie bracket of two su(2) coefficient vectors (broadcasts over leading axes)."""
    return np.cross(x, y)


def norm(x) -> float:
    return float(np.linalg.norm(x))


@dataclass(frozen=True)
class ConnectionState:
    """The four scalar functions of the reduced ansatz at one time."""

    f: float
    fp: float
    g: float
    h: float

    def as_array(self):
        return np.array([self.f, self.fp, self.g, self.h], dtype=float)

    @classmethod
    def from_array(cls, z):
        f, fp, g, h = (float(v) for v in z)
        return cls(f, fp, g, h)


@dataclass
class InvariantConnection:
    """Six su(2) coefficients; row ``i`` of ``alpha`` is the coefficient of ``e_{i+1}``."""

    alpha: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    alphap: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(3, 3)
        self.alphap = np.asarray(self.alphap, dtype=float).reshape(3, 3)

    def flatten(self):
        return np.concatenate([self.alpha.ravel(), self.alphap.ravel()])

    @classmethod
    def unflatten(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:9].reshape(3, 3), v[9:].reshape(3, 3))


def embed_reduced(z) -> InvariantConnection:
    """Image of a reduced state ``(f, f', g, h)`` in the general coefficient space."""
    f, fp, g, h = np.asarray(z.as_array() if isinstance(z, ConnectionState) else z, dtype=float)
    alpha = np.diag([f, f, 0.5 * g + h])
    alphap = np.diag([fp, fp, h - 0.5 * g])
    return InvariantConnection(alpha, alphap)


def project_reduced(c: InvariantConnection):
    """Inverse of :func:`embed_reduced` on its image (reads the diagonal entries)."""
    f = c.alpha[0, 0]
    fp = c.alphap[0, 0]
    s3, d3 = c.alpha[2, 2], c.alphap[2, 2]
    return np.array([f, fp, s3 - d3, 0.5 * (s3 + d3)])


@dataclass
class CurvatureComponents:
    """Curvature of an invariant connection as a map from basis 2-forms to su(2).

    Keys are pairs ``(p, q)`` of slots in the 7-frame ``(dt, e1, e2, e3, e1', e2', e3')``
    with the 2-form ``e_p ^ e_q``.
    """

    components: dict

    def __getitem__(self, key):
        return self.components[key]

    def items(self):
        return self.components.items()

    def max_abs(self) -> float:
        return max(float(np.abs(v).max()) for v in self.components.values())

    def as_tensor(self):
        """Antisymmetric array ``F[p, q, :]`` on the 7-frame."""
        F = np.zeros((7, 7, 3))
        for (p, q), v in self.components.items():
            F[p, q] += v
            F[q, p] -= v
        return F


def curvature(c: InvariantConnection) -> CurvatureComponents:
    """Curvature of the orbit part of the connection (no ``dt`` terms)."""
    al, ap = c.alpha, c.alphap
    comp = {}
    for i in range(3):
        comp[(_UNPRIMED[i], _PRIMED[i])] = bracket(al[i], ap[i])
    for i, j, k in CYCLIC:
        comp[(_UNPRIMED[j], _UNPRIMED[k])] = bracket(al[j], al[k]) - al[i]
        comp[(_PRIMED[j], _PRIMED[k])] = bracket(ap[j], ap[k]) - ap[i]
        comp[(_UNPRIMED[j], _PRIMED[k])] = bracket(al[j], ap[k])
        comp[(_PRIMED[j], _UNPRIMED[k])] = bracket(ap[j], al[k])
    return CurvatureComponents(comp)


def constraint_residual(c: InvariantConnection, s) -> float:
    """Norm of the first-order constraint that accompanies the evolution equations."""
    ad, bd = s.da, s.db
    al, ap = c.alpha, c.alphap
    r = ad * bd * (bracket(al[0], ap[0]) + bracket(al[1], ap[1])) + ad * ad * bracket(al[2], ap[2])
    return norm(r)


def curvature_norm(c: InvariantConnection, cdot: InvariantConnection, s, params) -> float:
    """Pointwise norm of ``F_A = dt ^ alpha_dot + F_alpha`` in the cohomogeneity-one metric.

    Parameters
    ----------
    c, cdot : InvariantConnection
        Connection coefficients and their time derivatives.
    s : MetricSample
    params : MetricParams
    """
    from .metric import metric_tensor

    G = metric_tensor(s, params)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveMetric(f"metric is not positive definite at t={s.t!r}") from exc
    Ginv = np.linalg.inv(G)
    F = curvature(c).as_tensor()
    dots = np.vstack([cdot.alpha, cdot.alphap])
    for slot, v in zip(_UNPRIMED + _PRIMED, dots):
        F[0, slot] += v
        F[slot, 0] -= v
    sq = 0.5 * np.einsum("pqa,rsa,pr,qs->", F, F, Ginv, Ginv)
    return float(np.sqrt(max(sq, 0.0)))


def sign_gauge(z):
    """Gauge map ``E1 -> -E1, E2 -> -E2`` acting on reduced states."""
    f, fp, g, h = np.asarray(z, dtype=float)
    return np.array([-f, -fp, g, h])


def conjugate_sign_gauge(c: InvariantConnection) -> InvariantConnection:
    """The same gauge map acting on general coefficients."""
    D = np.array([-1.0, -1.0, 1.0])
    return InvariantConnection(c.alpha * D, c.alphap * D)
