"""Numerical construction of invariant G2-instantons on an asymptotically conical G2-manifold."""

__version__ = "0.1.0"
