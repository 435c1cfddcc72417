"""Lagrange interpolation, evaluation and norms of finite element fields."""
from __future__ import annotations

import numpy as np

from ..mesh.curved import CurvedMesh
from ..mesh.mesher import MINUS, PLUS
from .assembly import BulkGeometry
from .quadrature import line_rule
from .reference import edge_basis
from .spaces import ScalarSpace

NORMS = ("L2", "H1", "H1_semi", "broken_L2", "L2_interface", "H1_interface")


def _call(f, x, phase, broken):
    return f(x, phase) if broken else f(x)


def lagrange_interpolate(f, space: ScalarSpace, mesh: CurvedMesh):
    """Nodal coefficients of I_h f.

    ``f`` maps points (..., 2) to values (...) or (..., c).  On a broken
    space it is called as ``f(x, phase)`` so each side of the interface can
    be given its own smooth branch.
    """
    xy = space.node_coords(mesh)
    return np.asarray(_call(f, xy, space.dof_phase, space.broken), dtype=float)


def interpolate_interface(f, mesh: CurvedMesh):
    """I_h f on S_h^k(Gamma_h), nodal values in ``mesh.interface_nodes`` order."""
    return np.asarray(f(mesh.nodes[mesh.interface_nodes]), dtype=float)


def evaluate(space: ScalarSpace, coeffs, geo: BulkGeometry, grad=False):
    """Values (M, nq[, c]) at the quadrature points of ``geo``; optionally gradients (M, nq[, c], 2)."""
    c = np.asarray(coeffs)[space.elements]  # (M, nb[, c])
    phi = geo.values(space.degree)
    if c.ndim == 2:
        vals = c @ phi.T
    else:
        vals = phi @ c
    if not grad:
        return vals
    g = geo.grads(space.degree)  # (M, nq, nb, 2)
    gt = g.transpose(0, 1, 3, 2)  # (M, nq, 2, nb)
    if c.ndim == 2:
        return vals, (gt @ c[:, None, :, None])[..., 0]
    return vals, (gt @ c[:, None]).transpose(0, 1, 3, 2)


def _element_phase_at_qp(mesh, shape):
    return np.broadcast_to(mesh.phase[:, None], shape)


def norms(field, space: ScalarSpace, mesh: CurvedMesh, which="L2", exact=None, exact_grad=None,
          geo: BulkGeometry | None = None, per_phase=False):
    """Bulk norm of ``field - exact`` (``exact`` optional).

    ``which`` is one of L2, H1, H1_semi, broken_L2.  Exact callables follow
    the calling convention of :func:`lagrange_interpolate`.  With
    ``per_phase=True`` a dict {MINUS: value, PLUS: value} is returned.
    """
    if which not in ("L2", "H1", "H1_semi", "broken_L2"):
        raise ValueError(f"bulk norm {which!r} not supported here; use interface_norm")
    geo = geo or BulkGeometry(mesh)
    need_grad = which in ("H1", "H1_semi")
    out = evaluate(space, field, geo, grad=need_grad)
    vals, grads = out if need_grad else (out, None)
    ph = _element_phase_at_qp(mesh, geo.W.shape)
    if exact is not None:
        vals = vals - _call(exact, geo.x, ph, space.broken)
    if need_grad and exact_grad is not None:
        grads = grads - _call(exact_grad, geo.x, ph, space.broken)
    dens = np.zeros(geo.W.shape)
    if which != "H1_semi":
        dens += vals**2 if vals.ndim == 2 else (vals**2).sum(-1)
    if need_grad:
        dens += (grads**2).reshape(*geo.W.shape, -1).sum(-1)
    per_el = (dens * geo.W).sum(axis=1)
    if per_phase:
        return {p: float(np.sqrt(per_el[mesh.phase == p].sum())) for p in (MINUS, PLUS)}
    return float(np.sqrt(per_el.sum()))


def interface_norm(values, mesh: CurvedMesh, which="L2_interface", exact=None, rule=None):
    """L2 or H1 norm over Gamma_h of an interface field given at ``mesh.interface_nodes``.

    ``values`` has shape (n_iface,) or (n_iface, c).  ``exact`` (L2 only) is
    evaluated at the physical quadrature points of Gamma_h.
    """
    if which not in ("L2_interface", "H1_interface"):
        raise ValueError(which)
    rule = rule or line_rule(2 * mesh.k + 3)
    eb = edge_basis(mesh.k)
    s = rule.points[:, 0]
    lookup = np.full(mesh.n_nodes, -1, dtype=np.int64)
    lookup[mesh.interface_nodes] = np.arange(len(mesh.interface_nodes))
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    ve = v[lookup[mesh.interface_edges]]  # (E, k+1, c)
    P = mesh.nodes[mesh.interface_edges]
    x = np.einsum("qa,eai->eqi", eb.values(s), P)
    dx = np.einsum("qa,eai->eqi", eb.derivative(s, 1), P)
    speed = np.linalg.norm(dx, axis=-1)
    f = np.einsum("qa,eac->eqc", eb.values(s), ve)
    if exact is not None:
        ex = np.asarray(exact(x), dtype=float)
        f = f - (ex[..., None] if ex.ndim == 2 else ex)
    dens = (f**2).sum(-1)
    if which == "H1_interface":
        df = np.einsum("qa,eac->eqc", eb.derivative(s, 1), ve)
        dens = dens + (df**2).sum(-1) / speed**2
    return float(np.sqrt(((dens * speed) @ rule.weights).sum()))
