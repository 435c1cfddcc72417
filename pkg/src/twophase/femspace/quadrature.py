"""Quadrature on the reference triangle {(x, y): x, y >= 0, x + y <= 1} and on [0, 1]."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def line_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(((x + 1) / 2)[:, None], w / 2, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed (Duffy) tensor Gauss rule on the reference triangle.

    A monomial of total degree ``d`` pulls back to degree ``d`` in ``u`` and
    ``d + 1`` in ``v`` once the Jacobian ``1 - v`` is included, so ``n``
    Gauss points per direction with ``2n - 1 >= d + 1`` suffice.  All weights
    are positive.
    """
    n = max(1, (degree + 3) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1) / 2
    w = w / 2
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    px = (u * (1 - v)).ravel()
    py = v.ravel()
    wt = (wu * wv * (1 - v)).ravel()
    return QuadratureRule(np.column_stack([px, py]), wt, degree)
