"""Flat triangulation of a rectangle fitted to a star-shaped interface.

Vertices are arranged on nested star-shaped rings about the interface
center: scaled copies of the interface inside, blends between the
interface and the rectangle outside.  Consecutive rings are stitched by a
shortest-diagonal zipper, which keeps interface vertices exactly on the
curve and never puts two edges of one triangle on the interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ClearanceTooSmall, MeshGenerationError, NotStarShaped
from ..geometry import InterfaceDescriptor

MINUS = -1
PLUS = 1


@dataclass(frozen=True)
class Rectangle:
    xmin: float = -1.0
    xmax: float = 1.0
    ymin: float = -1.0
    ymax: float = 1.0

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def ray_radius(self, center, theta):
        """Distance from ``center`` to the rectangle boundary along direction ``theta``."""
        c, s = np.cos(theta), np.sin(theta)
        cx, cy = center
        with np.errstate(divide="ignore"):
            tx = np.where(c > 0, (self.xmax - cx) / c, np.where(c < 0, (self.xmin - cx) / c, np.inf))
            ty = np.where(s > 0, (self.ymax - cy) / s, np.where(s < 0, (self.ymin - cy) / s, np.inf))
        return np.minimum(tx, ty)


@dataclass
class FlatFittedMesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) counterclockwise
    phase: np.ndarray  # (nt,) MINUS or PLUS
    interface_edges: np.ndarray  # (ne, 2), oriented with the minus triangle on the left
    interface_tris: np.ndarray  # (ne, 2) adjacent (minus, plus) triangle ids
    boundary_vertices: np.ndarray
    domain: Rectangle = field(default_factory=Rectangle)

    def areas(self):
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self):
        p = self.vertices[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=-1)


def _equidistributed_angles(radius_fn, n, offset=0.0, dense=4096):
    """n polar angles spaced uniformly in arclength of the curve r(theta)."""
    th = np.linspace(0, 2 * np.pi, dense + 1)
    r = radius_fn(th)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    target = (np.arange(n) + offset) / n * s[-1]
    return np.interp(target, s, th)


def _rectangle_ring(rect: Rectangle, h):
    """Boundary points counterclockwise from the corner (xmax, ymin), corners included."""
    corners = [(rect.xmax, rect.ymin), (rect.xmax, rect.ymax), (rect.xmin, rect.ymax), (rect.xmin, rect.ymin)]
    pts = []
    for i in range(4):
        a, b = np.array(corners[i]), np.array(corners[(i + 1) % 4])
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h - 1e-9)))
        for j in range(n):
            pts.append(a + (b - a) * j / n)
    return np.array(pts)


def _zip_rings(ia, pa, ib, pb, center):
    """Triangulate the annulus between inner ring ``a`` and outer ring ``b``.

    ``ia``/``ib`` are global vertex ids, ``pa``/``pb`` coordinates, both
    ordered counterclockwise.
    """
    ang_a = np.unwrap(np.arctan2(pa[:, 1] - center[1], pa[:, 0] - center[0]))
    ang_b_raw = np.arctan2(pb[:, 1] - center[1], pb[:, 0] - center[0])
    # start b at the vertex closest in angle to a[0]
    j0 = int(np.argmin(np.abs(np.angle(np.exp(1j * (ang_b_raw - ang_a[0]))))))
    order_b = np.roll(np.arange(len(ib)), -j0)
    ib, pb = ib[order_b], pb[order_b]
    na, nb = len(ia), len(ib)
    tris = []
    i = j = 0

    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    while i < na or j < nb:
        a0, a1 = i % na, (i + 1) % na
        b0, b1 = j % nb, (j + 1) % nb
        can_a = i < na
        can_b = j < nb
        if can_a and can_b:
            da = np.linalg.norm(pa[a1] - pb[b0])
            db = np.linalg.norm(pa[a0] - pb[b1])
            advance_a = da < db
            tri_a = (ia[a0], ib[b0], ia[a1])
            tri_b = (ia[a0], ib[b0], ib[b1])
            oa = orient(pa[a0], pb[b0], pa[a1])
            ob = orient(pa[a0], pb[b0], pb[b1])
            if advance_a and oa <= 0 < ob:
                advance_a = False
            elif not advance_a and ob <= 0 < oa:
                advance_a = True
        else:
            advance_a = can_a
            tri_a = (ia[a0], ib[b0], ia[a1])
            tri_b = (ia[a0], ib[b0], ib[b1])
        if advance_a:
            tris.append(tri_a)
            i += 1
        else:
            tris.append(tri_b)
            j += 1
    return tris


def generate_fitted_mesh(domain: Rectangle, desc: InterfaceDescriptor, target_h: float) -> FlatFittedMesh:
    h = float(target_h)
    if not h > 0:
        raise ValueError("target_h must be positive")
    c = np.asarray(desc.center)
    th = np.linspace(0, 2 * np.pi, 2048, endpoint=False)
    rg = desc.radius(th)
    if np.any(rg <= 0):
        raise NotStarShaped("interface radial function is not positive about its center")
    pg = desc.point_at_angle(th)
    # the radial mesher needs a single-valued r(theta): the curve must be monotone in angle
    ang = np.unwrap(np.arctan2(pg[:, 1] - c[1], pg[:, 0] - c[0]))
    if np.any(np.diff(ang) <= 0):
        raise NotStarShaped("interface is not star-shaped about its center")
    clearance = min((pg[:, 0] - domain.xmin).min(), (domain.xmax - pg[:, 0]).min(),
                    (pg[:, 1] - domain.ymin).min(), (domain.ymax - pg[:, 1]).min())
    if clearance < 2 * h - 1e-12:
        raise ClearanceTooSmall(f"interface clearance {clearance:.4g} < 2*target_h = {2 * h:.4g}")

    rG = desc.radius
    n0 = max(6, int(np.ceil(desc.perimeter / h - 1e-9)))
    theta0 = _equidistributed_angles(rG, n0)
    gamma = desc.point_at_angle(theta0)
    if desc.kind == "circle":
        gamma = c + desc.R * np.column_stack([np.cos(theta0), np.sin(theta0)])

    verts = [c[None, :]]
    nverts = 1
    rings = []  # (ids, coords)

    n_in = max(1, int(round(rg.max() / h)))
    for i in range(1, n_in):
        s = i / n_in
        n = max(5, int(round(n0 * s)))
        tt = _equidistributed_angles(rG, n, offset=0.5 * (i % 2))
        p = c + s * (desc.point_at_angle(tt) - c)
        rings.append((np.arange(nverts, nverts + n), p))
        verts.append(p)
        nverts += n
    g_ids = np.arange(nverts, nverts + n0)
    rings.append((g_ids, gamma))
    verts.append(gamma)
    nverts += n0
    n_inner_rings = len(rings)

    bnd = _rectangle_ring(domain, h)
    gap = domain.ray_radius(c, th) - rg
    n_out = max(1, int(np.ceil(gap.max() / h - 1e-9)))
    for j in range(1, n_out):
        s = j / n_out
        n = int(round(n0 + (len(bnd) - n0) * s))

        def ring_r(t, s=s):
            return (1 - s) * rG(t) + s * domain.ray_radius(c, t)

        tt = _equidistributed_angles(ring_r, n, offset=0.5 * (j % 2))
        rr = ring_r(tt)
        p = c + np.column_stack([rr * np.cos(tt), rr * np.sin(tt)])
        rings.append((np.arange(nverts, nverts + n), p))
        verts.append(p)
        nverts += n
    b_ids = np.arange(nverts, nverts + len(bnd))
    rings.append((b_ids, bnd))
    verts.append(bnd)
    nverts += len(bnd)

    vertices = np.vstack(verts)
    tris, phase = [], []
    first_ids, first_p = rings[0]
    for q in range(len(first_ids)):
        tris.append((0, first_ids[q], first_ids[(q + 1) % len(first_ids)]))
        phase.append(MINUS)
    for r in range(len(rings) - 1):
        t = _zip_rings(*rings[r], *rings[r + 1], c)
        tris.extend(t)
        phase.extend([MINUS if r + 1 < n_inner_rings else PLUS] * len(t))
    triangles = np.array(tris, dtype=np.int64)
    phase = np.array(phase, dtype=np.int8)

    iface = np.column_stack([g_ids, np.roll(g_ids, -1)])
    edge_tri = {}
    for t, tri in enumerate(triangles):
        for a in range(3):
            edge_tri[(int(tri[a]), int(tri[(a + 1) % 3]))] = t
    itris = np.array([[edge_tri[(a, b)], edge_tri[(b, a)]] for a, b in iface], dtype=np.int64)

    mesh = FlatFittedMesh(vertices, triangles, phase, iface, itris, b_ids.copy(), domain)
    areas = mesh.areas()
    if np.any(areas <= 0):
        raise MeshGenerationError(f"mesher produced {int((areas <= 0).sum())} non-positive triangles; "
                                  "reduce target_h")
    if not (np.all(phase[itris[:, 0]] == MINUS) and np.all(phase[itris[:, 1]] == PLUS)):
        raise MeshGenerationError("interface edge adjacency inconsistent with phase tags")
    return mesh
