"""Shape-regularity measures of iso-parametric element maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..femspace.quadrature import triangle_rule
from ..femspace.reference import basis

# reference right triangle -> unit equilateral triangle
_W_INV = np.linalg.inv(np.array([[1.0, 0.5], [0.0, np.sqrt(3) / 2]]))


@dataclass(frozen=True)
class ShapeMetrics:
    kappa: float
    kappa_star: float
    min_scaled_jacobian: float


def singular_values_2x2(J):
    """Largest and smallest singular values of stacked 2x2 matrices."""
    fro2 = (J**2).sum(axis=(-1, -2))
    det = np.abs(J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0])
    root = np.sqrt(np.maximum(fro2**2 - 4 * det**2, 0.0))
    smax = np.sqrt((fro2 + root) / 2)
    return smax, det / smax


def element_diameters(mesh):
    v = mesh.nodes[mesh.elements[:, :3]]
    return np.linalg.norm(v - np.roll(v, -1, axis=1), axis=-1).max(axis=1)


def scaled_jacobian(J):
    """Mean-ratio quality 2 det(A) / |A|_F^2 of A = J W^-1, equal to 1 for equilateral maps."""
    A = J @ _W_INV
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return 2 * det / (A**2).sum(axis=(-1, -2))


def element_quality(mesh):
    rule = triangle_rule(2 * mesh.k + 2)
    pts = np.vstack([rule.points, basis(mesh.k).nodes])
    return scaled_jacobian(mesh.jacobians(pts)).min(axis=1)


def _seminorms(mesh, rule, hk):
    """|F_K / h_K|_{H^r(K^)} for r = 1..k, shape (M, k)."""
    b = basis(mesh.k)
    X = mesh.element_coords() / hk[:, None, None]
    out = np.zeros((mesh.n_elements, mesh.k))
    for r in range(1, mesh.k + 1):
        acc = np.zeros(mesh.n_elements)
        for dx in range(r + 1):
            D = b.derivative(rule.points, dx, r - dx)  # (nq, nb)
            vals = D @ X
            acc += (vals**2).sum(-1) @ rule.weights
        out[:, r - 1] = np.sqrt(acc)
    return out


def shape_metrics(mesh) -> ShapeMetrics:
    """Size-normalized versions of the shape-regularity quantities kappa and kappa_*.

    Each element map is divided by its vertex diameter before taking
    derivatives, so straight equilateral elements report the same values at
    every scale; zeroth-order terms are dropped to keep translation invariance.
    """
    rule = triangle_rule(2 * mesh.k + 2)
    pts = np.vstack([rule.points, basis(mesh.k).nodes])
    hk = element_diameters(mesh)
    J = mesh.jacobians(pts)
    Js = J / hk[:, None, None, None]
    smax, smin = singular_values_2x2(Js)
    w1 = smax.max(axis=1)
    winv = (1.0 / smin).max(axis=1)
    semi = _seminorms(mesh, rule, hk)
    k = mesh.k
    kappa_el = semi[:, : k - 1].sum(axis=1) + w1 + winv
    kappa_star_el = semi.sum(axis=1)
    q = scaled_jacobian(J).min(axis=1)
    return ShapeMetrics(float(kappa_el.max()), float(kappa_star_el.max()), float(q.min()))
