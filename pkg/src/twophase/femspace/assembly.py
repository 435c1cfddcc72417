"""Assembly of the bulk and interface operators of the discrete Stokes/curvature system.

All element loops are vectorized over elements; local contributions are
scattered through COO triplets in element-id order and summed on CSR
conversion, so results do not depend on any worker count.
"""
from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from ..errors import JacobianFlip
from ..mesh.curved import CurvedMesh
from ..mesh.mesher import MINUS
from .quadrature import line_rule, triangle_rule
from .reference import basis, edge_basis
from .spaces import FeSystem, ScalarSpace


class BulkGeometry:
    """Quadrature-point geometry of every element of a curved mesh."""

    def __init__(self, mesh: CurvedMesh, degree: int | None = None):
        self.mesh = mesh
        self.rule = triangle_rule(degree if degree is not None else 2 * mesh.k + 2)
        J = mesh.jacobians(self.rule.points)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        bad = np.nonzero((det <= 0).any(axis=1))[0]
        if len(bad):
            raise JacobianFlip(f"{len(bad)} element(s) with non-positive Jacobian, first {bad[0]}", bad)
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        self.det = det
        self.invJ = inv
        self.W = det * self.rule.weights  # (M, nq)
        self.x = mesh.map_points(self.rule.points)
        self._grads = {}

    def values(self, degree):
        return basis(degree).values(self.rule.points)  # (nq, nb)

    def grads(self, degree):
        """Physical basis gradients (M, nq, nb, 2)."""
        if degree not in self._grads:
            G = basis(degree).grads(self.rule.points)
            self._grads[degree] = G[None] @ self.invJ  # g[m,q,b,i] = sum_j G[q,b,j] invJ[m,q,j,i]
        return self._grads[degree]


def _coo(rows, cols, vals, shape):
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return A.tocsr()


def element_viscosity(mesh, nu_minus, nu_plus):
    return np.where(mesh.phase == MINUS, float(nu_minus), float(nu_plus))


def viscous_local(geo: BulkGeometry, nu):
    """Local matrices of 2 nu D(u):D(v), shape (M, 2, nb, 2, nb) as [comp_i, a, comp_j, b]."""
    g = geo.grads(geo.mesh.k).transpose(0, 3, 2, 1)  # (M, 2, nb, nq)
    W = (geo.W * nu[:, None])[:, None, :]
    Wg = [W * g[:, i] for i in range(2)]
    lap = Wg[0] @ g[:, 0].transpose(0, 2, 1) + Wg[1] @ g[:, 1].transpose(0, 2, 1)
    M, _, nb, _ = g.shape
    loc = np.empty((M, 2, nb, 2, nb))
    for c in range(2):
        for d in range(2):
            # cross term g_a[d] g_b[c]
            loc[:, c, :, d, :] = Wg[d] @ g[:, c].transpose(0, 2, 1)
    loc[:, 0, :, 0, :] += lap
    loc[:, 1, :, 1, :] += lap
    return loc


def assemble_viscous(mesh: CurvedMesh, nu_minus, nu_plus, sys: FeSystem, geo: BulkGeometry | None = None):
    """Matrix of (u, v) -> int 2 nu D(u):D(v) on the free velocity dofs."""
    geo = geo or BulkGeometry(mesh)
    loc = viscous_local(geo, element_viscosity(mesh, nu_minus, nu_plus))
    M, nb = mesh.elements.shape
    nf = len(sys.free_nodes)
    fid = sys.node_to_free[mesh.elements]  # (M, nb)
    dof = np.stack([fid, np.where(fid >= 0, fid + nf, -1)], axis=1)  # (M, 2, nb)
    rows = np.broadcast_to(dof[:, :, :, None, None], loc.shape)
    cols = np.broadcast_to(dof[:, None, None, :, :], loc.shape)
    keep = (rows >= 0) & (cols >= 0)
    return _coo(rows[keep], cols[keep], loc[keep], (2 * nf, 2 * nf))


def assemble_divergence(mesh: CurvedMesh, sys: FeSystem, geo: BulkGeometry | None = None):
    """B[r, (c, a)] = int psi_r d(phi_a)/dx_c, pressure rows by free velocity columns."""
    geo = geo or BulkGeometry(mesh)
    g = geo.grads(mesh.k)
    psi = geo.values(sys.Q.degree)
    Wpsi = (geo.W[:, :, None] * psi[None]).transpose(0, 2, 1)  # (M, nbp, nq)
    M, nq, nb, _ = g.shape
    loc = (Wpsi @ g.reshape(M, nq, nb * 2)).reshape(M, -1, nb, 2).transpose(0, 1, 3, 2)  # (M, nbp, 2, nb)
    nf = len(sys.free_nodes)
    fid = sys.node_to_free[mesh.elements]
    dof = np.stack([fid, np.where(fid >= 0, fid + nf, -1)], axis=1)  # (M, 2, nb)
    rows = np.broadcast_to(sys.Q.elements[:, :, None, None], loc.shape)
    cols = np.broadcast_to(dof[:, None, :, :], loc.shape)
    keep = cols >= 0
    return _coo(rows[keep], cols[keep], loc[keep], (sys.n_pressure, 2 * nf))


def assemble_mean(mesh: CurvedMesh, space: ScalarSpace, geo: BulkGeometry | None = None):
    """Vector c with c_r = int psi_r, so that c @ p = int p."""
    geo = geo or BulkGeometry(mesh)
    loc = np.einsum("mq,qr->mr", geo.W, geo.values(space.degree))
    return np.bincount(space.elements.ravel(), weights=loc.ravel(), minlength=space.ndof)


def assemble_mass(mesh: CurvedMesh, space: ScalarSpace, geo: BulkGeometry | None = None):
    geo = geo or BulkGeometry(mesh)
    phi = geo.values(space.degree)
    loc = np.einsum("mq,qa,qb->mab", geo.W, phi, phi)
    el = space.elements
    rows = np.broadcast_to(el[:, :, None], loc.shape)
    cols = np.broadcast_to(el[:, None, :], loc.shape)
    return _coo(rows, cols, loc, (space.ndof, space.ndof))


def assemble_stiffness(mesh: CurvedMesh, space: ScalarSpace, geo: BulkGeometry | None = None):
    """Scalar Laplace stiffness on all dofs of ``space``."""
    geo = geo or BulkGeometry(mesh)
    g = geo.grads(space.degree)
    loc = np.einsum("mq,mqai,mqbi->mab", geo.W, g, g)
    el = space.elements
    rows = np.broadcast_to(el[:, :, None], loc.shape)
    cols = np.broadcast_to(el[:, None, :], loc.shape)
    return _coo(rows, cols, loc, (space.ndof, space.ndof))


# -- interface --------------------------------------------------------------


def edge_matrices(points, k, rule=None):
    """Local interface mass and Laplace-Beltrami stiffness for curved edges.

    ``points`` has shape (E, k+1, 2): the Gauss-Lobatto nodes of each edge.
    Returns ``(mass, stiff)``, each (E, k+1, k+1).
    """
    rule = rule or line_rule(2 * k + 3)
    eb = edge_basis(k)
    s = rule.points[:, 0]
    chi = eb.values(s)
    dchi = eb.derivative(s, 1)
    dx = np.einsum("qa,eai->eqi", dchi, points)
    speed = np.linalg.norm(dx, axis=-1)  # (E, nq)
    mass = np.einsum("eq,q,qa,qb->eab", speed, rule.weights, chi, chi)
    stiff = np.einsum("eq,q,qa,qb->eab", 1.0 / speed, rule.weights, dchi, dchi)
    return mass, stiff


def _interface_scalar(mesh: CurvedMesh, sys: FeSystem, which):
    mass, stiff = edge_matrices(mesh.nodes[mesh.interface_edges], mesh.k)
    loc = mass if which == "mass" else stiff
    el = sys.iface_edges_local
    n = len(sys.iface_nodes)
    rows = np.broadcast_to(el[:, :, None], loc.shape)
    cols = np.broadcast_to(el[:, None, :], loc.shape)
    return _coo(rows, cols, loc, (n, n))


def assemble_interface_mass(mesh: CurvedMesh, sys: FeSystem):
    """Componentwise interface mass on S_h^k(Gamma_h)^2: kappa . eta integrated over Gamma_h.

    The coupling to velocity test functions is ``M @ sys.trace``.
    """
    m = _interface_scalar(mesh, sys, "mass")
    return sp.block_diag([m, m], format="csr")


def assemble_interface_stiffness(mesh: CurvedMesh, sys: FeSystem):
    """Componentwise Laplace-Beltrami stiffness S and the load g = S X^m of the current interface."""
    s = _interface_scalar(mesh, sys, "stiff")
    S = sp.block_diag([s, s], format="csr")
    X = sys.interface_flat(mesh.nodes[sys.iface_nodes])
    return S, S @ X


def is_symmetric(A, tol=1e-12):
    d = abs(A - A.T)
    return (d.max() if d.nnz else 0.0) <= tol


def export_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
