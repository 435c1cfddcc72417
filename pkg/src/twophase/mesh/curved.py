"""Order-k iso-parametric fitted meshes.

A :class:`CurvedMesh` stores all Lagrange nodes of the P^k element maps.
Global node ids 0..nv-1 are the triangle vertices; edge and interior nodes
follow.  ``interface_edges`` lists the k+1 node ids of each interface edge,
oriented so the minus phase lies on the left; the edges form one cycle
traversed counterclockwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ..errors import JacobianFlip, MeshFormatError
from ..femspace.quadrature import line_rule, triangle_rule
from ..femspace.reference import EDGE_VERTICES, basis, edge_basis, edge_local_nodes, gauss_lobatto
from ..geometry import InterfaceDescriptor
from .mesher import MINUS, PLUS, FlatFittedMesh, Rectangle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    """Vertex/edge connectivity recovered from the element vertex ids."""

    vertex_nodes: np.ndarray  # compact vertex index -> global node id
    tri_vertices: np.ndarray  # (M, 3) compact vertex indices
    edges: np.ndarray  # (ne, 2) compact vertex pairs, sorted
    tri_edges: np.ndarray  # (M, 3) edge id of local edge i
    interface_edge_ids: np.ndarray  # edge ids of interface edges
    interface_vertices: np.ndarray  # compact ids of vertices on the interface

    @property
    def n_vertices(self):
        return len(self.vertex_nodes)


@dataclass
class CurvedMesh:
    k: int
    nodes: np.ndarray  # (N, 2)
    elements: np.ndarray  # (M, (k+1)(k+2)/2)
    phase: np.ndarray  # (M,) MINUS / PLUS
    interface_edges: np.ndarray  # (E, k+1)
    boundary_nodes: np.ndarray
    domain: Rectangle | None = None
    interface_tris: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.phase = np.asarray(self.phase, dtype=np.int8)
        self.interface_edges = np.asarray(self.interface_edges, dtype=np.int64)
        self.boundary_nodes = np.asarray(self.boundary_nodes, dtype=np.int64)
        if self.interface_tris is None:
            self.interface_tris = _interface_adjacency(self.elements, self.phase, self.interface_edges, self.k)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def element_coords(self):
        return self.nodes[self.elements]

    def with_nodes(self, nodes):
        """Same topology, new node positions."""
        m = replace(self, nodes=np.asarray(nodes, dtype=float))
        for name in ("topology", "curved_elements", "interface_nodes"):
            if name in self.__dict__:
                m.__dict__[name] = self.__dict__[name]
        return m

    @cached_property
    def topology(self) -> Topology:
        return build_topology(self.elements, self.interface_edges)

    @cached_property
    def curved_elements(self):
        """Boolean mask of elements with an edge on the interface."""
        mask = np.zeros(self.n_elements, dtype=bool)
        mask[self.interface_tris.ravel()] = True
        return mask

    @cached_property
    def interface_nodes(self):
        """Distinct interface node ids in cycle order."""
        ids = self.interface_edges[:, :-1].ravel()
        _, first = np.unique(ids, return_index=True)
        return ids[np.sort(first)]

    # -- geometry --------------------------------------------------------------

    def jacobians(self, points):
        """Element-map Jacobians J[m, q, i, j] = d x_i / d xi_j at reference ``points``."""
        G = basis(self.k).grads(points)  # (nq, nb, 2)
        nq, nb, _ = G.shape
        Xt = self.element_coords().transpose(0, 2, 1)  # (M, 2, nb)
        J = Xt @ G.transpose(1, 0, 2).reshape(nb, 2 * nq)  # (M, 2, nq*2)
        return J.reshape(-1, 2, nq, 2).transpose(0, 2, 1, 3)

    def map_points(self, points):
        return basis(self.k).values(points) @ self.element_coords()

    def det_jacobian(self, points):
        J = self.jacobians(points)
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]

    def check_jacobians(self, degree=None):
        """Raise JacobianFlip unless every element has det J > 0 at quadrature points and nodes."""
        rule = triangle_rule(degree if degree is not None else 2 * self.k + 2)
        pts = np.vstack([rule.points, basis(self.k).nodes])
        det = self.det_jacobian(pts)
        bad = np.nonzero((det <= 0).any(axis=1))[0]
        if len(bad):
            raise JacobianFlip(f"{len(bad)} element(s) inverted, first {bad[0]}", bad)
        return det

    def element_areas(self):
        rule = triangle_rule(2 * self.k)
        return self.det_jacobian(rule.points) @ rule.weights

    def phase_areas(self):
        a = self.element_areas()
        return float(a[self.phase == MINUS].sum()), float(a[self.phase == PLUS].sum())

    def interface_geometry(self, rule=None):
        """Quadrature data on the interface: points (E,nq,2), tangents X' (E,nq,2), weights (nq,)."""
        rule = rule or line_rule(2 * self.k + 3)
        eb = edge_basis(self.k)
        s = rule.points[:, 0]
        P = self.nodes[self.interface_edges]  # (E, k+1, 2)
        x = np.einsum("qa,eai->eqi", eb.values(s), P)
        dx = np.einsum("qa,eai->eqi", eb.derivative(s, 1), P)
        return x, dx, rule.weights

    def perimeter(self):
        _, dx, w = self.interface_geometry()
        return float((np.linalg.norm(dx, axis=-1) @ w).sum())

    def interface_samples(self, per_edge=64):
        """Dense ordered samples of the discrete interface curve."""
        s = np.linspace(0, 1, per_edge, endpoint=False)
        eb = edge_basis(self.k)
        return np.einsum("qa,eai->eqi", eb.values(s), self.nodes[self.interface_edges]).reshape(-1, 2)

    @cached_property
    def metrics(self):
        from .metrics import shape_metrics

        return shape_metrics(self)


def build_topology(elements, interface_edges) -> Topology:
    vids = elements[:, :3]
    vertex_nodes, inv = np.unique(vids, return_inverse=True)
    tri_v = inv.reshape(-1, 3)
    loc = np.array(EDGE_VERTICES)
    pairs = np.sort(tri_v[:, loc], axis=-1).reshape(-1, 2)
    edges, einv = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = einv.reshape(-1, 3)
    iv = np.searchsorted(vertex_nodes, interface_edges[:, [0, -1]])
    ipairs = np.sort(iv, axis=1)
    key = edges[:, 0] * (len(vertex_nodes) + 1) + edges[:, 1]
    ikey = ipairs[:, 0] * (len(vertex_nodes) + 1) + ipairs[:, 1]
    order = np.argsort(key)
    pos = np.searchsorted(key[order], ikey)
    if np.any(pos >= len(key)) or np.any(key[order][np.minimum(pos, len(key) - 1)] != ikey):
        raise MeshFormatError("interface edge does not match any element edge")
    iedge = order[pos]
    return Topology(vertex_nodes, tri_v, edges, tri_edges, iedge, np.unique(iv))


def _interface_adjacency(elements, phase, interface_edges, k):
    """(minus, plus) element ids adjacent to each interface edge."""
    lookup = {}
    for e, tri in enumerate(elements[:, :3]):
        for a, b in EDGE_VERTICES:
            lookup[(int(tri[a]), int(tri[b]))] = e
    out = np.empty((len(interface_edges), 2), dtype=np.int64)
    for i, ed in enumerate(interface_edges):
        a, b = int(ed[0]), int(ed[-1])
        try:
            em, ep = lookup[(a, b)], lookup[(b, a)]
        except KeyError as exc:
            raise MeshFormatError(f"interface edge {a}-{b} is not shared by two elements") from exc
        if phase[em] != MINUS or phase[ep] != PLUS:
            raise MeshFormatError(f"interface edge {a}-{b}: minus phase must lie on its left")
        out[i] = em, ep
    return out


def _local_edge(tri, a, b):
    for i, (p, q) in enumerate(EDGE_VERTICES):
        if tri[p] == a and tri[q] == b:
            return i
    raise ValueError("edge not in triangle")


def lagrange_numbering(tri_v, n_vertices, edges, tri_edges, q):
    """Global ids of a continuous P^q Lagrange space on a vertex topology.

    Returns ``(elements (M, nb), ndof, entity)`` where ``entity[j] =
    (type, id)`` with type 0 vertex, 1 edge, 2 element interior.
    """
    M = len(tri_v)
    ne = len(edges)
    nb = (q + 1) * (q + 2) // 2
    ni = nb - 3 - 3 * (q - 1) if q >= 1 else 0
    if q == 0:
        return np.arange(M)[:, None], M, np.column_stack([np.full(M, 2), np.arange(M)])
    el = np.empty((M, nb), dtype=np.int64)
    el[:, :3] = tri_v
    off = n_vertices
    for i, (a, b) in enumerate(EDGE_VERTICES):
        base = off + tri_edges[:, i] * (q - 1)
        forward = tri_v[:, a] < tri_v[:, b]
        j = np.arange(q - 1)
        ids = np.where(forward[:, None], base[:, None] + j, base[:, None] + (q - 2 - j))
        el[:, 3 + i * (q - 1): 3 + (i + 1) * (q - 1)] = ids
    off += ne * (q - 1)
    if ni:
        el[:, nb - ni:] = off + np.arange(M)[:, None] * ni + np.arange(ni)
    ndof = off + M * ni
    entity = np.empty((ndof, 2), dtype=np.int64)
    entity[:n_vertices] = np.column_stack([np.zeros(n_vertices), np.arange(n_vertices)])
    eidx = np.repeat(np.arange(ne), q - 1)
    entity[n_vertices:n_vertices + ne * (q - 1)] = np.column_stack([np.ones_like(eidx), eidx])
    tidx = np.repeat(np.arange(M), ni)
    entity[off:] = np.column_stack([np.full_like(tidx, 2), tidx])
    return el, ndof, entity


def flat_to_order_k(flat: FlatFittedMesh, k: int) -> CurvedMesh:
    """Straight-sided order-k mesh: all higher-order nodes affinely placed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tri = flat.triangles
    nv = len(flat.vertices)
    loc = np.array(EDGE_VERTICES)
    pairs = np.sort(tri[:, loc], axis=-1).reshape(-1, 2)
    edges, einv = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = einv.reshape(-1, 3)
    el, ndof, entity = lagrange_numbering(tri, nv, edges, tri_edges, k)
    # affine placement of every node
    ref = basis(k).nodes
    P = flat.vertices[tri]
    lam = np.column_stack([1 - ref.sum(1), ref[:, 0], ref[:, 1]])  # barycentric (nb, 3)
    xy = np.einsum("bv,mvi->mbi", lam, P)
    nodes = np.empty((ndof, 2))
    nodes[el.ravel()] = xy.reshape(-1, 2)
    # interface edge node lists, oriented as the flat interface edges
    e_lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    s_ids = np.empty((len(flat.interface_edges), k + 1), dtype=np.int64)
    for r, (a, b) in enumerate(flat.interface_edges):
        e = e_lookup[(min(a, b), max(a, b))]
        inner = nv + e * (k - 1) + np.arange(k - 1)
        if a > b:
            inner = inner[::-1]
        s_ids[r] = np.concatenate([[a], inner, [b]])
    # boundary nodes: vertices on the rectangle plus nodes of edges between them
    bset = np.zeros(nv, dtype=bool)
    bset[flat.boundary_vertices] = True
    counts = np.bincount(einv, minlength=len(edges))
    bedges = np.nonzero((counts == 1))[0]
    bnodes = [flat.boundary_vertices]
    for e in bedges:
        bnodes.append(nv + e * (k - 1) + np.arange(k - 1))
    boundary = np.unique(np.concatenate(bnodes)).astype(np.int64)
    return CurvedMesh(k, nodes, el, flat.phase.copy(), s_ids, boundary, flat.domain,
                      interface_tris=flat.interface_tris.copy())


def blend_map(ref_pts, vertex_xy, edge_xy, edge, k):
    """Polynomial blend of a triangle with one curved edge, evaluated at ``ref_pts``.

    ``edge_xy`` are the k+1 Gauss-Lobatto nodes of local ``edge`` from its
    start vertex a to its end vertex b.  Writing the deviation of the edge
    from its chord as ``d(s) = s (1 - s) q(s)``, the map is the affine vertex
    map plus ``l_a l_b q((1 + l_b - l_a) / 2)``: a degree-k polynomial that
    reproduces the curved edge and vanishes on the two straight edges.  A
    rational transfinite blend would put O(h^2) into the top-degree
    coefficients and spoil the h^j scaling of the j-th derivatives.
    """
    a, b = EDGE_VERTICES[edge]
    lam = np.column_stack([1 - ref_pts.sum(1), ref_pts[:, 0], ref_pts[:, 1]])
    affine = lam @ vertex_xy
    s_nodes = gauss_lobatto(k)
    chord = vertex_xy[a] + s_nodes[:, None] * (vertex_xy[b] - vertex_xy[a])
    inner = s_nodes[1:-1]
    qv = (edge_xy - chord)[1:-1] / (inner * (1 - inner))[:, None]  # q at k-1 inner nodes
    la, lb = lam[:, a], lam[:, b]
    t = (1 + lb - la) / 2
    # Lagrange interpolation of q through the inner nodes
    L = np.ones((len(t), len(inner)))
    for i, si in enumerate(inner):
        for j, sj in enumerate(inner):
            if i != j:
                L[:, i] *= (t - sj) / (si - sj)
    return affine + (la * lb)[:, None] * (L @ qv)


def lenoir_curve(flat: FlatFittedMesh, desc: InterfaceDescriptor, k: int) -> CurvedMesh:
    """Curve the interface edges of ``flat`` onto ``desc`` with order-k iso-parametric elements."""
    if k < 2:
        raise ValueError("lenoir_curve needs k >= 2")
    mesh = flat_to_order_k(flat, k)
    nodes = mesh.nodes.copy()
    inner = mesh.interface_edges[:, 1:-1].ravel()
    nodes[inner] = desc.closest_point(nodes[inner])
    ref = basis(k).nodes
    n_int = len(ref) - 3 - 3 * (k - 1)
    if n_int:
        for e_row, (a, b) in enumerate(flat.interface_edges):
            for t in mesh.interface_tris[e_row]:
                tri = mesh.elements[t]
                li = _local_edge(tri[:3], a, b) if t == mesh.interface_tris[e_row][0] else _local_edge(tri[:3], b, a)
                edge_ids = tri[edge_local_nodes(k, li)]
                nodes[tri[-n_int:]] = blend_map(ref[-n_int:], nodes[tri[:3]], nodes[edge_ids], li, k)
    curved = mesh.with_nodes(nodes)
    curved.check_jacobians()
    return curved


def displace(mesh: CurvedMesh, d, allow_boundary=False) -> CurvedMesh:
    """Move every node by ``d`` (N, 2); topology is shared with ``mesh``.

    Boundary displacements must vanish unless ``allow_boundary`` is set.
    Quality loss is logged, not repaired; an inverted element raises
    :class:`JacobianFlip`.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != mesh.nodes.shape:
        raise ValueError(f"displacement shape {d.shape} != node shape {mesh.nodes.shape}")
    if not allow_boundary and np.any(d[mesh.boundary_nodes] != 0):
        raise ValueError("boundary nodes must not move")
    moved = mesh.with_nodes(mesh.nodes + d)
    moved.check_jacobians()
    q = moved.metrics.min_scaled_jacobian
    if q < 0.1:
        log.warning("mesh quality degraded: min scaled Jacobian %.3g", q)
    return moved


def invert_element_map(mesh: CurvedMesh, elements, points, iters=30, tol=1e-13):
    """Reference coordinates xi with F_K(xi) = x for each (element, point) pair (Newton)."""
    b = basis(mesh.k)
    X = mesh.nodes[mesh.elements[elements]]  # (n, nb, 2)
    xi = np.full((len(points), 2), 1.0 / 3.0)
    for _ in range(iters):
        F = np.einsum("nb,nbi->ni", b.values(xi), X)
        J = np.einsum("nbi,nbj->nij", X, b.grads(xi))
        step = np.linalg.solve(J, (points - F)[..., None])[..., 0]
        xi = xi + step
        if np.abs(step).max(initial=0.0) < tol:
            break
    return xi


def _outside(xi):
    return np.max(np.column_stack([-xi[:, 0], -xi[:, 1], xi.sum(1) - 1]), axis=1)


def locate_points(mesh: CurvedMesh, points, phase=None, candidates=12):
    """Element ids and reference coordinates of ``points`` in ``mesh``.

    Candidates are the elements with the nearest centroids (KD-tree); each
    is inverted by Newton and the one the point lies in (or is least
    outside of) is kept.  ``phase`` (scalar or per point) restricts the
    search to elements of that phase.  Returns ``(elements, xi, outside)``
    where ``outside`` is 0 for points inside their element.
    """
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    cent = mesh.map_points(np.array([[1 / 3, 1 / 3]]))[:, 0]
    phases = np.broadcast_to(np.asarray(phase if phase is not None else 0), (n,))
    best_el = np.zeros(n, dtype=np.int64)
    best_xi = np.zeros((n, 2))
    best_out = np.full(n, np.inf)
    for ph in np.unique(phases):
        sel = np.nonzero(phases == ph)[0]
        pool = np.nonzero(mesh.phase == ph)[0] if ph != 0 else np.arange(mesh.n_elements)
        tree = cKDTree(cent[pool])
        nc = min(candidates, len(pool))
        _, idx = tree.query(points[sel], k=nc)
        idx = idx.reshape(len(sel), nc)
        for c in range(nc):
            el = pool[idx[:, c]]
            xi = invert_element_map(mesh, el, points[sel])
            out = np.clip(_outside(xi), 0.0, None)
            out[~np.isfinite(out)] = np.inf
            better = out < best_out[sel] - 1e-14
            best_el[sel[better]] = el[better]
            best_xi[sel[better]] = xi[better]
            best_out[sel[better]] = out[better]
    return best_el, best_xi, best_out


def evaluate_at(mesh: CurvedMesh, space_elements, degree, coeffs, elements, xi):
    """Evaluate a (possibly vector) field with element dof map ``space_elements`` at located points."""
    c = np.asarray(coeffs)[space_elements[elements]]  # (n, nb[, c])
    phi = basis(degree).values(xi)  # (n, nb)
    return np.einsum("nb,nb...->n...", phi, c)
