"""Degree-of-freedom maps for the velocity, pressure and interface spaces."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..mesh.curved import CurvedMesh, lagrange_numbering
from ..mesh.mesher import MINUS, PLUS
from .reference import basis


@dataclass
class ScalarSpace:
    """Scalar iso-parametric Lagrange space of degree ``degree`` on a P^k mesh.

    ``elements[m]`` holds the global dof ids of element ``m`` in reference
    node order.  For broken spaces, dofs on interface entities are
    duplicated: plus-phase elements get their own copies, so functions are
    continuous within each phase and double-valued across the interface.
    """

    degree: int
    elements: np.ndarray
    ndof: int
    broken: bool
    dof_phase: np.ndarray  # MINUS / PLUS for broken spaces, 0 otherwise

    @property
    def basis(self):
        return basis(self.degree)

    def node_coords(self, mesh: CurvedMesh):
        """Physical positions of the dofs (images of reference nodes under F_K)."""
        xy = mesh.map_points(self.basis.nodes)  # (M, nb, 2)
        out = np.empty((self.ndof, 2))
        out[self.elements.ravel()] = xy.reshape(-1, 2)
        return out


def velocity_scalar_space(mesh: CurvedMesh) -> ScalarSpace:
    """Continuous P^k space whose dofs are exactly the mesh nodes."""
    return ScalarSpace(mesh.k, mesh.elements, mesh.n_nodes, False, np.zeros(mesh.n_nodes, dtype=np.int8))


def scalar_space(mesh: CurvedMesh, degree: int, broken: bool = False) -> ScalarSpace:
    if degree == mesh.k and not broken:
        return velocity_scalar_space(mesh)
    top = mesh.topology
    el, ndof, entity = lagrange_numbering(top.tri_vertices, top.n_vertices, top.edges, top.tri_edges, degree)
    el = el.copy()
    phase = np.zeros(ndof, dtype=np.int8)
    if broken and degree > 0:
        on_iface = np.zeros(ndof, dtype=bool)
        v_if = np.zeros(top.n_vertices, dtype=bool)
        v_if[top.interface_vertices] = True
        e_if = np.zeros(len(top.edges), dtype=bool)
        e_if[top.interface_edge_ids] = True
        on_iface |= (entity[:, 0] == 0) & v_if[np.minimum(entity[:, 1], top.n_vertices - 1)]
        on_iface |= (entity[:, 0] == 1) & e_if[np.minimum(entity[:, 1], len(top.edges) - 1)]
        dup = np.nonzero(on_iface)[0]
        new_id = np.full(ndof, -1, dtype=np.int64)
        new_id[dup] = ndof + np.arange(len(dup))
        plus = mesh.phase == PLUS
        sub = el[plus]
        remap = new_id[sub]
        el[plus] = np.where(remap >= 0, remap, sub)
        ndof += len(dup)
        phase = np.zeros(ndof, dtype=np.int8)
        phase[el[mesh.phase == MINUS].ravel()] = MINUS
        phase[el[plus].ravel()] = PLUS
    elif broken:
        phase = mesh.phase.copy()
    return ScalarSpace(degree, el, ndof, broken, phase)


@dataclass
class FeSystem:
    """Velocity V_h^k (zero on the outer boundary), broken pressure Q_h^{k-1}, interface S_h^k.

    Velocity unknowns are laid out component-blocked over the free
    (non-boundary) nodes: ``[u_x(free), u_y(free)]``.  Interface unknowns
    are ``[k_x(iface), k_y(iface)]`` over :attr:`iface_nodes`.
    """

    mesh: CurvedMesh
    V: ScalarSpace
    Q: ScalarSpace
    free_nodes: np.ndarray
    iface_nodes: np.ndarray  # mesh node ids, cycle order
    iface_edges_local: np.ndarray  # (E, k+1) indices into iface_nodes

    @property
    def k(self):
        return self.mesh.k

    @property
    def n_velocity(self):
        return 2 * len(self.free_nodes)

    @property
    def n_pressure(self):
        return self.Q.ndof

    @property
    def n_interface(self):
        return 2 * len(self.iface_nodes)

    @cached_property
    def free_index(self):
        """Indices of the free velocity dofs in the full component-blocked node vector."""
        N = self.mesh.n_nodes
        return np.concatenate([self.free_nodes, N + self.free_nodes])

    @cached_property
    def node_to_free(self):
        m = np.full(self.mesh.n_nodes, -1, dtype=np.int64)
        m[self.free_nodes] = np.arange(len(self.free_nodes))
        return m

    def velocity_full(self, u):
        """Free-dof velocity vector -> nodal array (N, 2), zero on the boundary."""
        out = np.zeros((self.mesh.n_nodes, 2))
        nf = len(self.free_nodes)
        out[self.free_nodes, 0] = u[:nf]
        out[self.free_nodes, 1] = u[nf:]
        return out

    def velocity_free(self, nodal):
        nodal = np.asarray(nodal)
        return np.concatenate([nodal[self.free_nodes, 0], nodal[self.free_nodes, 1]])

    def interface_full(self, kappa):
        n = len(self.iface_nodes)
        return np.column_stack([kappa[:n], kappa[n:]])

    def interface_flat(self, nodal):
        nodal = np.asarray(nodal)
        return np.concatenate([nodal[:, 0], nodal[:, 1]])

    @cached_property
    def trace(self):
        """Sparse trace operator: free velocity dofs -> interface dofs."""
        n = len(self.iface_nodes)
        nf = len(self.free_nodes)
        cols = self.node_to_free[self.iface_nodes]
        if np.any(cols < 0):
            raise ValueError("interface touches the Dirichlet boundary")
        rows = np.arange(2 * n)
        cols = np.concatenate([cols, nf + cols])
        return sp.csr_matrix((np.ones(2 * n), (rows, cols)), shape=(2 * n, 2 * nf))


def build_fe_system(mesh: CurvedMesh) -> FeSystem:
    if mesh.k < 2:
        raise ValueError("the P^k / P^{k-1} pair needs k >= 2")
    V = velocity_scalar_space(mesh)
    Q = scalar_space(mesh, mesh.k - 1, broken=True)
    bmask = np.zeros(mesh.n_nodes, dtype=bool)
    bmask[mesh.boundary_nodes] = True
    free = np.nonzero(~bmask)[0]
    inodes = mesh.interface_nodes
    lookup = np.full(mesh.n_nodes, -1, dtype=np.int64)
    lookup[inodes] = np.arange(len(inodes))
    return FeSystem(mesh, V, Q, free, inodes, lookup[mesh.interface_edges])
