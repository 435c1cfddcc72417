"""Lagrange elements on the reference triangle and the reference segment.

Local node ordering on the triangle with vertices v0=(0,0), v1=(1,0),
v2=(0,1): the three vertices, then the ``k-1`` interior nodes of edge 0
(v0->v1), edge 1 (v1->v2) and edge 2 (v2->v0), each listed in the direction
of the edge, then the interior nodes.  Edge nodes sit at Gauss-Lobatto
points; interior nodes at the equispaced lattice points.
"""
from functools import lru_cache
from math import factorial

import numpy as np

EDGE_VERTICES = ((0, 1), (1, 2), (2, 0))
_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@lru_cache(maxsize=None)
def gauss_lobatto(k: int) -> np.ndarray:
    """The k+1 Gauss-Lobatto-Legendre points on [0, 1], ascending."""
    if k < 1:
        raise ValueError("need k >= 1")
    if k == 1:
        return np.array([0.0, 1.0])
    inner = np.polynomial.legendre.Legendre.basis(k).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return (x + 1) / 2


def n_basis(k: int) -> int:
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def lagrange_nodes(k: int) -> np.ndarray:
    if k == 0:
        return np.array([[1 / 3, 1 / 3]])
    s = gauss_lobatto(k)[1:-1]
    pts = [_VERTS]
    for a, b in EDGE_VERTICES:
        pts.append(_VERTS[a] + s[:, None] * (_VERTS[b] - _VERTS[a]))
    interior = [(i / k, j / k) for j in range(1, k) for i in range(1, k - j) if i + j < k]
    if interior:
        pts.append(np.array(interior))
    return np.vstack(pts)


def _monomials(k):
    return [(i, d - i) for d in range(k + 1) for i in range(d, -1, -1)]


def _falling(p, r):
    return 0.0 if r > p else factorial(p) / factorial(p - r)


class LagrangeBasis:
    """Nodal P^k basis on the reference triangle, evaluated through monomials."""

    def __init__(self, k: int):
        self.k = k
        self.nodes = lagrange_nodes(k)
        self.exps = _monomials(k)
        V = self._mono(self.nodes, 0, 0)
        if np.linalg.cond(V) > 1e10:
            raise ValueError(f"P{k} node set is not unisolvent")
        # column j of coef holds the monomial coefficients of basis function j
        self.coef = np.linalg.inv(V)

    def __len__(self):
        return len(self.exps)

    def _mono(self, pts, dx, dy):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        cols = []
        for a, b in self.exps:
            c = _falling(a, dx) * _falling(b, dy)
            if c == 0.0:
                cols.append(np.zeros(len(pts)))
            else:
                cols.append(c * x ** (a - dx) * y ** (b - dy))
        return np.column_stack(cols)

    def derivative(self, pts, dx=0, dy=0):
        """d^(dx+dy) phi_j / dx^dx dy^dy at ``pts``; shape (npts, nbasis)."""
        return self._mono(pts, dx, dy) @ self.coef

    def values(self, pts):
        return self.derivative(pts)

    def grads(self, pts):
        return np.stack([self.derivative(pts, 1, 0), self.derivative(pts, 0, 1)], axis=-1)


class EdgeBasis:
    """P^k Lagrange basis on [0, 1] with Gauss-Lobatto nodes."""

    def __init__(self, k: int):
        self.k = k
        self.nodes = gauss_lobatto(k)
        V = np.vander(self.nodes, k + 1, increasing=True)
        self.coef = np.linalg.inv(V)

    def __len__(self):
        return self.k + 1

    def derivative(self, s, order=0):
        s = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
        cols = []
        for p in range(self.k + 1):
            c = _falling(p, order)
            cols.append(np.zeros_like(s) if c == 0 else c * s ** (p - order))
        return np.column_stack(cols) @ self.coef

    def values(self, s):
        return self.derivative(s, 0)


@lru_cache(maxsize=None)
def basis(k: int) -> LagrangeBasis:
    return LagrangeBasis(k)


@lru_cache(maxsize=None)
def edge_basis(k: int) -> EdgeBasis:
    return EdgeBasis(k)


def edge_local_nodes(k: int, edge: int) -> np.ndarray:
    """Local indices of the k+1 triangle nodes on ``edge``, from its start vertex to its end."""
    a, b = EDGE_VERTICES[edge]
    inner = 3 + edge * (k - 1) + np.arange(k - 1)
    return np.concatenate([[a], inner, [b]]).astype(int)


def lattice_points(k: int) -> np.ndarray:
    """Equispaced barycentric lattice of order k (used for visualization)."""
    return np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])


def lattice_triangles(k: int) -> np.ndarray:
    """k^2 counterclockwise sub-triangles of :func:`lattice_points`."""
    index = {}
    n = 0
    for j in range(k + 1):
        for i in range(k + 1 - j):
            index[i, j] = n
            n += 1
    tris = []
    for j in range(k):
        for i in range(k - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j + 1 < k:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(tris)
