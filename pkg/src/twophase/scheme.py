"""Fully discrete two-phase Stokes flow with surface tension on a moving fitted mesh.

One step on Omega^m with nodes X^m solves for velocity u, broken pressure p
(mean zero via a multiplier lambda) and interface curvature vector kappa::

    A u - B^T p + T^T M kappa = 0
    B u + c lambda            = 0,     c^T p = 0
    tau S T u - M kappa       = -S X^m

where T is the trace onto interface nodes, M and S the interface mass and
Laplace-Beltrami stiffness on Gamma^m.  The last row is the weak curvature
equation for X^{m+1} = X^m + tau u (nodal); afterwards every mesh node is
moved by tau u.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import JacobianFlip, SingularSystem
from .femspace.assembly import (
    BulkGeometry,
    assemble_divergence,
    assemble_interface_mass,
    assemble_interface_stiffness,
    assemble_mean,
    assemble_viscous,
)
from .femspace.functions import interface_norm, norms
from .femspace.spaces import FeSystem, build_fe_system
from .mesh.curved import CurvedMesh, displace, lenoir_curve
from .mesh.io import import_mesh
from .mesh.mesher import MINUS, PLUS, generate_fitted_mesh
from .mesh.metrics import ShapeMetrics

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10

DIAGNOSTIC_COLUMNS = ("step", "t", "perimeter", "area_minus", "dissipation", "energy_residual", "u_H1",
                      "p_L2", "kappa_L2", "min_scaled_jacobian", "kappa_mesh", "kappa_star_mesh")


@dataclass(frozen=True)
class Viscosity:
    minus: float = 1.0
    plus: float = 1.0

    def __post_init__(self):
        if not (self.minus > 0 and self.plus > 0):
            raise ValueError("viscosities must be positive")


@dataclass
class StateSnapshot:
    """Mesh X^m at time t and, once solved, the fields computed on it.

    ``u`` is nodal (N, 2) and vanishes on the outer boundary; ``p`` holds
    the broken pressure coefficients; ``kappa`` is (n_iface, 2) in
    ``mesh.interface_nodes`` order.
    """

    m: int
    t: float
    mesh: CurvedMesh
    u: np.ndarray | None = None
    p: np.ndarray | None = None
    kappa: np.ndarray | None = None

    @property
    def metrics(self) -> ShapeMetrics:
        return self.mesh.metrics

    @property
    def solved(self):
        return self.u is not None

    @cached_property
    def fe(self) -> FeSystem:
        return build_fe_system(self.mesh)


@dataclass
class SaddleSystem:
    """Blocks of one step; unknown layout ``[u (free dofs) | p | lambda | kappa]``."""

    fe: FeSystem
    tau: float
    A: sp.csr_matrix
    B: sp.csr_matrix
    c: np.ndarray
    M: sp.csr_matrix
    S: sp.csr_matrix
    SX: np.ndarray  # S X^m on the interface
    geo: BulkGeometry = field(repr=False)

    @property
    def sizes(self):
        return self.fe.n_velocity, self.fe.n_pressure, 1, self.fe.n_interface

    @cached_property
    def matrix(self):
        T = self.fe.trace
        MT = (self.M @ T).tocsr()
        c = sp.csr_matrix(self.c[:, None])
        return sp.bmat([
            [self.A, -self.B.T, None, MT.T],
            [self.B, None, c, None],
            [None, c.T, None, None],
            [self.tau * (self.S @ T), None, None, -self.M],
        ], format="csc")

    @cached_property
    def pinned_matrix(self):
        """System without the multiplier and with the first pressure dof removed."""
        T = self.fe.trace
        MT = (self.M @ T).tocsr()
        B1 = self.B[1:]
        return sp.bmat([
            [self.A, -B1.T, MT.T],
            [B1, None, None],
            [self.tau * (self.S @ T), None, -self.M],
        ], format="csc")

    @property
    def pinned_rhs(self):
        nu, npr, _, _ = self.sizes
        return np.concatenate([np.zeros(nu + npr - 1), -self.SX])

    def unpin(self, x):
        """Pinned solution -> full ``[u | p | lambda | kappa]`` with mean-zero p, lambda = 0."""
        nu, npr, _, _ = self.sizes
        p = np.concatenate([[0.0], x[nu:nu + npr - 1]])
        p -= (self.c @ p) / self.c.sum()
        return np.concatenate([x[:nu], p, [0.0], x[nu + npr - 1:]])

    @cached_property
    def rhs(self):
        nu, npr, _, _ = self.sizes
        return np.concatenate([np.zeros(nu + npr + 1), -self.SX])

    def split(self, x):
        nu, npr, _, nk = self.sizes
        return x[:nu], x[nu:nu + npr], x[nu + npr], x[nu + npr + 1:]

    def residual(self, x):
        return float(np.linalg.norm(self.matrix @ x - self.rhs))


def build_step_system(state: StateSnapshot, tau: float, nu: Viscosity = Viscosity()) -> SaddleSystem:
    if not tau > 0:
        raise ValueError("tau must be positive")
    mesh, fe = state.mesh, state.fe
    geo = BulkGeometry(mesh)
    A = assemble_viscous(mesh, nu.minus, nu.plus, fe, geo)
    B = assemble_divergence(mesh, fe, geo)
    c = assemble_mean(mesh, fe.Q, geo)
    M = assemble_interface_mass(mesh, fe)
    S, SX = assemble_interface_stiffness(mesh, fe)
    return SaddleSystem(fe, float(tau), A, B, c, M, S, SX, geo)


class LinearSolver:
    """Direct solver for the step systems, optionally recycling factorizations.

    The mean-value multiplier row and column are dense, which ruins LU
    fill.  Since constants lie in the kernel of B^T, the same solution is
    obtained by fixing the first pressure dof to zero, solving the sparse
    remainder and shifting p to zero mean afterwards (lambda = 0).  With
    ``reuse=True`` the last LU factorization preconditions GMRES on the next
    step's matrix, which changes only by the small mesh motion; a fresh
    factorization is made whenever GMRES needs more than ``max_iter``
    iterations.  Every returned solution is checked against the full
    system residual.
    """

    def __init__(self, reuse=False, max_iter=20):
        self.reuse = reuse
        self.max_iter = max_iter
        self._lu = None
        self.factorizations = 0
        self.iterations = 0

    def _factor(self, K):
        try:
            self._lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:
            self._lu = None
            raise SingularSystem(f"LU factorization failed: {exc}") from exc
        self.factorizations += 1

    def _recycled(self, K, b):
        if self._lu is None or self._lu.shape != K.shape:
            return None
        its = [0]

        def count(_):
            its[0] += 1

        pre = spla.LinearOperator(K.shape, self._lu.solve)
        x, info = spla.gmres(K, b, M=pre, rtol=1e-2 * RESIDUAL_TOL, atol=0.0, restart=self.max_iter,
                             maxiter=3, callback=count, callback_type="pr_norm")
        self.iterations += its[0]
        return x if info == 0 and its[0] <= self.max_iter else None

    def solve(self, system: SaddleSystem):
        K, b = system.pinned_matrix, system.pinned_rhs
        x = self._recycled(K, b) if self.reuse else None
        if x is None:
            self._factor(K)
            x = self._lu.solve(b)
            if np.linalg.norm(K @ x - b) > 1e-2 * RESIDUAL_TOL * np.linalg.norm(b):
                x = x + self._lu.solve(b - K @ x)  # one step of iterative refinement
        full = system.unpin(x)
        bnorm = np.linalg.norm(system.rhs)
        res = system.residual(full)
        if not np.all(np.isfinite(full)) or res > RESIDUAL_TOL * bnorm:
            raise SingularSystem(f"residual {res:.3e} exceeds {RESIDUAL_TOL:g} x |rhs| = {RESIDUAL_TOL * bnorm:.3e}")
        if not self.reuse:
            self._lu = None
        return full


def solve_step(system: SaddleSystem, solver: LinearSolver | None = None):
    """Returns free-dof u, pressure p and flat kappa ``[k_x; k_y]``; raises SingularSystem."""
    u, p, _, kappa = system.split((solver or LinearSolver()).solve(system))
    return u, p, kappa


def solve_state(state: StateSnapshot, tau: float, nu: Viscosity = Viscosity(), solver: LinearSolver | None = None):
    """Solve on ``state.mesh``; returns the filled snapshot and its system."""
    system = build_step_system(state, tau, nu)
    u, p, kappa = solve_step(system, solver)
    fe = state.fe
    solved = replace(state, u=fe.velocity_full(u), p=p, kappa=fe.interface_full(kappa))
    solved.__dict__["fe"] = fe
    return solved, system


def advance(state: StateSnapshot, tau: float, nu: Viscosity = Viscosity()) -> StateSnapshot:
    """Move every node by tau * u and return the unsolved snapshot m+1.

    Solves first if ``state`` carries no fields.  Raises JacobianFlip if an
    element inverts.
    """
    if not state.solved:
        state, _ = solve_state(state, tau, nu)
    mesh = displace(state.mesh, tau * state.u)
    return StateSnapshot(state.m + 1, state.t + tau, mesh)


# -- diagnostics of a solved step -----------------------------------------------


def dissipation(system: SaddleSystem, state: StateSnapshot):
    """int 2 nu |D(u)|^2 = u^T A u."""
    u = system.fe.velocity_free(state.u)
    return float(u @ (system.A @ u))


def divergence_residual(system: SaddleSystem, state: StateSnapshot):
    """max over pressure basis functions psi of |int div(u) psi|."""
    return float(np.abs(system.B @ system.fe.velocity_free(state.u)).max(initial=0.0))


def pressure_means(state: StateSnapshot, geo: BulkGeometry | None = None):
    """Mean pressure over the minus and plus phase."""
    mesh = state.mesh
    geo = geo or BulkGeometry(mesh)
    vals = np.einsum("qb,mb->mq", geo.values(state.fe.Q.degree), state.p[state.fe.Q.elements])
    integ = (vals * geo.W).sum(axis=1)
    area = geo.W.sum(axis=1)
    return tuple(float(integ[mesh.phase == ph].sum() / area[mesh.phase == ph].sum()) for ph in (MINUS, PLUS))


def step_diagnostics(state: StateSnapshot, system: SaddleSystem) -> dict:
    mesh, fe, geo, tau = state.mesh, system.fe, system.geo, system.tau
    perimeter = mesh.perimeter()
    next_perimeter = mesh.with_nodes(mesh.nodes + tau * state.u).perimeter()
    diss = dissipation(system, state)
    met = mesh.metrics
    return {
        "step": state.m,
        "t": state.t,
        "perimeter": perimeter,
        "area_minus": mesh.phase_areas()[0],
        "dissipation": diss,
        "energy_residual": (next_perimeter - perimeter) / tau + diss,
        "u_H1": norms(state.u, fe.V, mesh, "H1", geo=geo),
        "p_L2": norms(state.p, fe.Q, mesh, "broken_L2", geo=geo),
        "kappa_L2": interface_norm(state.kappa, mesh),
        "min_scaled_jacobian": met.min_scaled_jacobian,
        "kappa_mesh": met.kappa,
        "kappa_star_mesh": met.kappa_star,
    }


# -- time loop ---------------------------------------------------------------------


def initial_mesh(config) -> CurvedMesh:
    if config.mesh_file:
        mesh = import_mesh(config.mesh_file)
        if mesh.k != config.k:
            raise ValueError(f"mesh file has order {mesh.k}, config asks for k={config.k}")
        return mesh
    flat = generate_fitted_mesh(config.domain, config.interface, config.h)
    return lenoir_curve(flat, config.interface, config.k)


@dataclass
class RunResult:
    snapshots: list  # solved StateSnapshots kept at the snapshot cadence (and the last one)
    diagnostics: list  # one dict per solve, DIAGNOSTIC_COLUMNS keys
    tau: float
    n_steps: int


def run(config, out_dir=None, progress=None, on_solve=None) -> RunResult:
    """Run ceil(T / tau) steps plus a final solve on the last mesh.

    With ``out_dir`` the diagnostics CSV is written row by row and VTK
    snapshots every ``config.snapshot_every`` steps (and at the end), so a
    JacobianFlip or SingularSystem leaves every completed row on disk
    before propagating.  ``on_solve(solved, system)`` is called after
    every solve.
    """
    from .output import DiagnosticsWriter, write_vtk

    tau = config.time_step()
    n_steps = config.n_steps()
    nu = Viscosity(config.nu_minus, config.nu_plus)
    out = Path(out_dir) if out_dir is not None else None
    writer = DiagnosticsWriter(out / "diagnostics.csv") if out is not None else None
    solver = LinearSolver(reuse=True)
    kept, rows = [], []
    state = None
    try:
        state = StateSnapshot(0, 0.0, initial_mesh(config))
        for m in range(n_steps + 1):
            solved, system = solve_state(state, tau, nu, solver)
            row = step_diagnostics(solved, system)
            if on_solve:
                on_solve(solved, system)
            rows.append(row)
            if writer:
                writer.write(row)
            if m % config.snapshot_every == 0 or m == n_steps:
                kept.append(solved)
                if out is not None:
                    write_vtk(out / f"snapshot_{m:06d}.vtk", solved)
            if progress:
                progress(row)
            if m < n_steps:
                state = advance(solved, tau, nu)
    except (JacobianFlip, SingularSystem) as exc:
        if out is not None:
            where = f"step {state.m} t={state.t!r}" if state is not None else "initial mesh"
            (out / "abort.txt").write_text(f"{where}: {type(exc).__name__}: {exc}\n")
        raise
    finally:
        if writer:
            writer.close()
    return RunResult(kept, rows, tau, n_steps)


def isoperimetric_ratio(perimeter, area):
    return perimeter**2 / (4 * math.pi * area)
