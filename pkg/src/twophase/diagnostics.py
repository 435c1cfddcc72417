"""Error measurement: projection errors, error norms against exact or reference
solutions, Laplace-Young balance, EOC tables and the moving-domain identity suite."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ReferenceMismatch
from .femspace.assembly import BulkGeometry
from .femspace.functions import interface_norm, norms
from .femspace.quadrature import line_rule, triangle_rule
from .femspace.reference import basis, edge_basis
from .geometry import InterfaceDescriptor
from .mesh.curved import CurvedMesh, evaluate_at, locate_points
from .mesh.mesher import MINUS
from .output import write_table
from .scheme import StateSnapshot, pressure_means

ERROR_COLUMNS = ("u_H1_err", "p_L2_err", "x_H1_err", "kappa_L2_err", "pressure_jump_err")
SOURCES = ("exact_circle", "reference_run")


# -- projection error ---------------------------------------------------------------


def projection_error(state: StateSnapshot | CurvedMesh, desc: InterfaceDescriptor):
    """Nodal e_x = X_h - closest_point(X_h) on the interface and its H^1(Gamma_h) norm."""
    mesh = state.mesh if isinstance(state, StateSnapshot) else state
    X = mesh.nodes[mesh.interface_nodes]
    e = X - desc.closest_point(X)
    return e, interface_norm(e, mesh, "H1_interface")


# -- error records ----------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorRecord:
    h: float
    tau: float
    u_H1_err: float
    p_L2_err: float
    x_H1_err: float
    kappa_L2_err: float
    pressure_jump_err: float
    source: str = "exact_circle"

    def __post_init__(self):
        if not (self.h > 0 and self.tau > 0):
            raise ValueError("h and tau must be positive")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if any(not getattr(self, c) >= 0 for c in ERROR_COLUMNS):
            raise ValueError("errors must be nonnegative")


@dataclass
class EocTable:
    records: list
    rates: dict = field(default_factory=dict)  # column -> list of len(records) - 1

    COLUMNS = ("h", "tau") + ERROR_COLUMNS

    def rows(self):
        out = []
        for i, r in enumerate(self.records):
            row = {c: getattr(r, c) for c in self.COLUMNS}
            row["source"] = r.source
            for c in ERROR_COLUMNS:
                row[f"rate_{c}"] = self.rates[c][i - 1] if i else None
            out.append(row)
        return out

    @property
    def header(self):
        return list(self.COLUMNS) + ["source"] + [f"rate_{c}" for c in ERROR_COLUMNS]

    def to_csv(self, path):
        write_table(path, self.rows(), self.header)

    def to_text(self):
        """Aligned plain-text table."""
        head = self.header
        body = [[("" if v is None else v if isinstance(v, str) else f"{v:.4e}" if not c.startswith("rate")
                  else f"{v:.3f}") for c, v in ((c, row[c]) for c in head)] for row in self.rows()]
        widths = [max(len(h), *(len(r[j]) for r in body)) for j, h in enumerate(head)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
        if any(r.source == "reference_run" for r in self.records):
            lines.append("(reference_run rows are self-convergence estimates against an overkill reference)")
        return "\n".join(lines) + "\n"


def eoc_rates(h, errors):
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for successive levels."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))


def eoc(records) -> EocTable:
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two levels")
    hs = [r.h for r in records]
    if any(a <= b for a, b in zip(hs, hs[1:])):
        raise ValueError("levels must be strictly decreasing in h")
    return EocTable(records, {c: eoc_rates(hs, [getattr(r, c) for r in records]) for c in ERROR_COLUMNS})


# -- Laplace-Young --------------------------------------------------------------------


def pressure_jump(state: StateSnapshot):
    pm, pp = pressure_means(state)
    return pm - pp


def laplace_young_check(state: StateSnapshot, R: float) -> float:
    """|(mean p_minus - mean p_plus) - 1/R| * R for a circular interface at rest."""
    return abs(pressure_jump(state) - 1.0 / R) * R


# -- error norms ------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactCircle:
    """Stationary circle: u = 0, p piecewise constant with jump 1/R, kappa = H n = n / R."""

    R: float
    center: tuple = (0.0, 0.0)

    @property
    def descriptor(self):
        return InterfaceDescriptor.circle(self.R, self.center)


def exact_circle_pressure(state: StateSnapshot, R: float):
    """Mean-zero (on Omega_h) piecewise constant pressure with p_minus - p_plus = 1/R."""
    area_m, area_p = state.mesh.phase_areas()
    p_plus = -area_m / (R * (area_m + area_p))
    return np.where(state.fe.Q.dof_phase == MINUS, p_plus + 1.0 / R, p_plus)


def theorem_errors(state: StateSnapshot, comparison, tau: float) -> ErrorRecord:
    """The four error norms plus the pressure-jump error of a solved state.

    ``comparison`` is an :class:`ExactCircle` or a solved reference
    :class:`StateSnapshot` at the same time.  Comparison fields are taken
    at the physical node positions of ``state``.
    """
    if not state.solved:
        raise ValueError("state has no fields; solve it first")
    mesh, fe = state.mesh, state.fe
    geo = BulkGeometry(mesh)
    h = _mesh_size(mesh)
    if isinstance(comparison, ExactCircle):
        R, desc = comparison.R, comparison.descriptor
        u_err = norms(state.u, fe.V, mesh, "H1", geo=geo)
        p_err = norms(state.p - exact_circle_pressure(state, R), fe.Q, mesh, "broken_L2", geo=geo)
        _, x_err = projection_error(state, desc)
        X = mesh.nodes[mesh.interface_nodes]
        n, H = desc.normal_and_curvature(desc.closest_point(X))
        k_err = interface_norm(state.kappa - H[:, None] * n, mesh, "L2_interface")
        jump_err = laplace_young_check(state, R)
        return ErrorRecord(h, tau, u_err, p_err, x_err, k_err, jump_err, "exact_circle")
    ref = comparison
    if not ref.solved:
        raise ValueError("reference state has no fields")
    if abs(ref.t - state.t) > 1e-9 * max(1.0, abs(state.t)):
        raise ReferenceMismatch(f"reference time {ref.t!r} differs from {state.t!r}")
    # velocity at coarse nodes
    el, xi, out = locate_points(ref.mesh, mesh.nodes)
    if out.max() > 1e-8:
        raise ReferenceMismatch("coarse mesh nodes outside the reference domain")
    u_ref = evaluate_at(ref.mesh, ref.mesh.elements, ref.mesh.k, ref.u, el, xi)
    u_err = norms(state.u - u_ref, fe.V, mesh, "H1", geo=geo)
    # pressure at coarse pressure dofs, within the same phase
    qxy = fe.Q.node_coords(mesh)
    el, xi, _ = locate_points(ref.mesh, qxy, phase=fe.Q.dof_phase)
    p_ref = evaluate_at(ref.mesh, ref.fe.Q.elements, ref.fe.Q.degree, ref.p, el, xi)
    p_err = norms(state.p - p_ref, fe.Q, mesh, "broken_L2", geo=geo)
    # interface: projection onto the reference curve
    X = mesh.nodes[mesh.interface_nodes]
    proj, kap = _project_on_discrete_curve(ref, X)
    x_err = interface_norm(X - proj, mesh, "H1_interface")
    k_err = interface_norm(state.kappa - kap, mesh, "L2_interface")
    jr = pressure_jump(ref)
    jump_err = abs(pressure_jump(state) - jr) / abs(jr) if jr != 0 else abs(pressure_jump(state))
    return ErrorRecord(h, tau, u_err, p_err, x_err, k_err, jump_err, "reference_run")


def _mesh_size(mesh):
    v = mesh.nodes[mesh.elements[:, :3]]
    return float(np.linalg.norm(v - np.roll(v, -1, axis=1), axis=-1).max())


def _project_on_discrete_curve(ref: StateSnapshot, X, per_edge=32):
    """Closest points of X on the reference interface curve and the reference kappa there.

    Seeds from dense samples, then Newton on the edge parameter of the
    nearest edge.  Raises ReferenceMismatch when a point is farther than
    half the reach estimated from the reference curvature.
    """
    mesh = ref.mesh
    k = mesh.k
    eb = edge_basis(k)
    P = mesh.nodes[mesh.interface_edges]  # (E, k+1, 2)
    s = np.linspace(0.0, 1.0, per_edge + 1)
    samples = np.einsum("qa,eai->eqi", eb.values(s), P).reshape(-1, 2)
    d2 = ((X[:, None, :] - samples[None]) ** 2).sum(-1)
    j = d2.argmin(axis=1)
    e, t = j // (per_edge + 1), s[j % (per_edge + 1)]
    for _ in range(30):
        c0 = np.einsum("na,nai->ni", eb.values(t), P[e])
        c1 = np.einsum("na,nai->ni", eb.derivative(t, 1), P[e])
        c2 = np.einsum("na,nai->ni", eb.derivative(t, 2), P[e])
        r = c0 - X
        f = (r * c1).sum(1)
        df = (c1 * c1).sum(1) + (r * c2).sum(1)
        dt = -f / df
        t = np.clip(t + dt, 0.0, 1.0)
        if np.abs(dt).max(initial=0.0) < 1e-14:
            break
    proj = np.einsum("na,nai->ni", eb.values(t), P[e])
    lookup = np.full(mesh.n_nodes, -1, dtype=np.int64)
    lookup[mesh.interface_nodes] = np.arange(len(mesh.interface_nodes))
    kap_edges = ref.kappa[lookup[mesh.interface_edges]]  # (E, k+1, 2)
    kap = np.einsum("na,nai->ni", eb.values(t), kap_edges[e])
    reach = 1.0 / max(np.linalg.norm(ref.kappa, axis=1).max(), 1e-12)
    dist = np.linalg.norm(X - proj, axis=1)
    if dist.max() >= 0.5 * reach:
        raise ReferenceMismatch(f"interface deviates {dist.max():.3e} from reference, tube {0.5 * reach:.3e}")
    return proj, kap


# -- identity suite -------------------------------------------------------------------


@dataclass
class IdentityCheck:
    name: str
    residuals: list  # residual per delta (or a single residual)
    passed: bool
    detail: str = ""

    def line(self):
        res = ", ".join(f"{r:.3e}" for r in self.residuals)
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: residuals [{res}] {self.detail}".rstrip()


@dataclass
class IdentityReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_text(self):
        lines = [c.line() for c in self.checks]
        lines.append(f"{'PASS' if self.passed else 'FAIL'}  overall ({sum(c.passed for c in self.checks)}/"
                     f"{len(self.checks)})")
        return "\n".join(lines) + "\n"


DELTAS = (1e-3, 1e-4)
RATIO_MIN = 50.0


def _decay_check(name, fd_minus_exact, scale, exact_floor=False):
    res = [abs(r) for r in fd_minus_exact]
    floor = 1e-10 * max(1.0, scale)
    ratio = res[0] / res[1] if res[1] > 0 else math.inf
    if exact_floor and max(res) <= floor:
        return IdentityCheck(name, res, True, f"(finite difference exact up to roundoff, floor {floor:.1e})")
    return IdentityCheck(name, res, ratio >= RATIO_MIN, f"ratio {ratio:.1f} (need >= {RATIO_MIN:g})")


def _smooth_fields(x):
    f = 1.0 + x[..., 0] ** 2 + 0.5 * x[..., 1]
    g = np.cos(x[..., 1]) + 0.3 * x[..., 0] * x[..., 1]
    e = 0.1 * np.stack([np.sin(2 * x[..., 1] + 1.0), np.cos(3 * x[..., 0]) * (1 + x[..., 1])], axis=-1)
    return f, g, e


def interface_transport_residuals(mesh: CurvedMesh, constant=False, deltas=DELTAS):
    """Central differences of theta -> int_{Gamma + theta e} f_h g_h minus int_Gamma f_h g_h div_Gamma e.

    f_h, g_h are held by their nodal values; div_Gamma e = X'.e' / |X'|^2
    per edge.  Returns (residual per delta, magnitude scale).
    """
    rule = line_rule(2 * mesh.k + 3)
    eb = edge_basis(mesh.k)
    s = rule.points[:, 0]
    chi, dchi = eb.values(s), eb.derivative(s, 1)
    P = mesh.nodes[mesh.interface_edges]
    f, g, e = _smooth_fields(P)
    fq = np.ones((len(P), len(s))) if constant else (f @ chi.T) * (g @ chi.T)

    def integral(PP):
        speed = np.linalg.norm(np.einsum("qa,eai->eqi", dchi, PP), axis=-1)
        return float(((fq * speed) @ rule.weights).sum())

    dX = np.einsum("qa,eai->eqi", dchi, P)
    dE = np.einsum("qa,eai->eqi", dchi, e)
    exact = float(((fq * (dX * dE).sum(-1) / np.linalg.norm(dX, axis=-1)) @ rule.weights).sum())
    fd = [(integral(P + d * e) - integral(P - d * e)) / (2 * d) for d in deltas]
    return [v - exact for v in fd], abs(exact) + abs(integral(P))


def bulk_transport_residuals(mesh: CurvedMesh, constant=False, deltas=DELTAS):
    """Same check for theta -> int_{Omega_theta} f_h g_h against int f_h g_h div e.

    det(J + theta E) is quadratic in theta on a 2D element, so the central
    difference is exact and the residual sits at roundoff.
    """
    rule = triangle_rule(2 * mesh.k + 2)
    f, g, e = _smooth_fields(mesh.nodes)
    b = basis(mesh.k).values(rule.points)
    fq = np.ones((mesh.n_elements, len(rule.weights))) if constant else \
        (f[mesh.elements] @ b.T) * (g[mesh.elements] @ b.T)
    G = basis(mesh.k).grads(rule.points)

    def integral(nodes):
        J = np.einsum("mbi,qbj->mqij", nodes[mesh.elements], G)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        return float(((fq * det) @ rule.weights).sum())

    geo = BulkGeometry(mesh, rule.degree)
    div = np.einsum("mqbi,mbi->mq", geo.grads(mesh.k), e[mesh.elements])
    exact = float((fq * div * geo.W).sum())
    fd = [(integral(mesh.nodes + d * e) - integral(mesh.nodes - d * e)) / (2 * d) for d in deltas]
    return [v - exact for v in fd], abs(exact) + abs(integral(mesh.nodes))


def circle_ibp_residual(R=0.5, center=(0.0, 0.0), n=256):
    """max over test pairs and i of |int f d_i g + int (d_i f) g - int f g H n_i| on the exact circle.

    Tangential gradients of ambient functions, H = 1/R, periodic trapezoid rule.
    """
    th = 2 * np.pi * np.arange(n) / n
    nrm = np.column_stack([np.cos(th), np.sin(th)])
    x = np.asarray(center) + R * nrm
    w = np.full(n, 2 * np.pi * R / n)
    H = 1.0 / R
    X, Y = x[:, 0], x[:, 1]
    pairs = [
        (X, np.column_stack([np.ones(n), np.zeros(n)]), np.ones(n), np.zeros((n, 2))),
        (X * Y, np.column_stack([Y, X]), np.sin(X) + Y**2, np.column_stack([np.cos(X), 2 * Y])),
        (np.exp(X), np.column_stack([np.exp(X), np.zeros(n)]), np.cos(2 * Y), np.column_stack([np.zeros(n), -2 * np.sin(2 * Y)])),
    ]
    worst = 0.0
    for f, df, g, dg in pairs:
        tf = df - (df * nrm).sum(1)[:, None] * nrm
        tg = dg - (dg * nrm).sum(1)[:, None] * nrm
        for i in range(2):
            lhs = (f * tg[:, i] + tf[:, i] * g) @ w
            rhs = (f * g * H * nrm[:, i]) @ w
            worst = max(worst, abs(lhs - rhs))
    return worst


IBP_TOL = 1e-8


def identity_suite(mesh: CurvedMesh, circle: InterfaceDescriptor | None = None, deltas=DELTAS) -> IdentityReport:
    """Finite-difference transport checks on ``mesh`` and the closed-curve integration by parts check."""
    circle = circle or InterfaceDescriptor.circle(0.5)
    checks = []
    for constant in (True, False):
        tag = "f=g=1" if constant else "smooth f,g"
        res, scale = interface_transport_residuals(mesh, constant, deltas)
        checks.append(_decay_check(f"interface transport ({tag})", res, scale))
        res, scale = bulk_transport_residuals(mesh, constant, deltas)
        checks.append(_decay_check(f"bulk transport ({tag})", res, scale, exact_floor=True))
    r = circle_ibp_residual(circle.R, circle.center)
    checks.append(IdentityCheck("closed-curve integration by parts (exact circle)", [r], r <= IBP_TOL,
                                f"(tol {IBP_TOL:g})"))
    return IdentityReport(checks)


def write_identity_report(path, report: IdentityReport):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(report.to_text())
