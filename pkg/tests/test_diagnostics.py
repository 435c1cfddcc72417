from dataclasses import replace

import numpy as np
import pytest

from twophase.config import RunConfig
from twophase.diagnostics import (
    ERROR_COLUMNS, ErrorRecord, ExactCircle, _decay_check, circle_ibp_residual, eoc, eoc_rates,
    exact_circle_pressure, identity_suite, interface_transport_residuals, laplace_young_check, projection_error,
    theorem_errors, write_identity_report,
)
from twophase.errors import ReferenceMismatch
from twophase.femspace.functions import norms
from twophase.geometry import InterfaceDescriptor
from twophase.scheme import StateSnapshot, run, solve_state

from conftest import CIRCLE, ELLIPSE, curved_mesh


# -- projection error -------------------------------------------------------------------


def test_projection_error_zero_on_exact_nodes():
    e, norm = projection_error(curved_mesh("circle", 0.1, 2), CIRCLE)
    assert np.abs(e).max() <= 1e-12
    assert norm <= 1e-10


def _moved(mesh, node, d):
    nodes = mesh.nodes.copy()
    nodes[node] += d
    return mesh.with_nodes(nodes)


def test_projection_error_radial_and_tangential():
    mesh = curved_mesh("circle", 0.1, 2)
    node = mesh.interface_nodes[5]
    x = mesh.nodes[node]
    n = x / np.linalg.norm(x)
    t = np.array([-n[1], n[0]])
    delta = 1e-3
    e, _ = projection_error(_moved(mesh, node, delta * n), CIRCLE)
    assert np.linalg.norm(e[5]) == pytest.approx(delta, abs=1e-14)
    e, _ = projection_error(_moved(mesh, node, delta * t), CIRCLE)
    gap = np.linalg.norm(e[5])
    assert gap == pytest.approx(np.hypot(0.5, delta) - 0.5, abs=1e-15)
    assert gap <= delta**2 / (2 * 0.5) * (1 + 1e-3)
    # error is radial at the moved node
    y = x + delta * t
    assert abs(e[5, 0] * y[1] - e[5, 1] * y[0]) <= 1e-16


# -- error records and EOC ----------------------------------------------------------------


def test_eoc_arithmetic():
    assert eoc_rates([0.2, 0.1], [1.0, 0.25]) == [pytest.approx(2.0)]
    assert eoc_rates([0.3, 0.1], [9.0, 1.0]) == [pytest.approx(2.0)]
    recs = [ErrorRecord(h, h * h, 8 * h**2, h, h**3, h, h, "exact_circle") for h in (0.2, 0.1, 0.05)]
    table = eoc(recs)
    np.testing.assert_allclose(table.rates["u_H1_err"], [2, 2])
    np.testing.assert_allclose(table.rates["x_H1_err"], [3, 3])
    with pytest.raises(ValueError):
        eoc(recs[:1])
    with pytest.raises(ValueError):
        eoc(recs[::-1])


def test_eoc_table_outputs(tmp_path):
    recs = [ErrorRecord(h, h, h, h, h, h, h, "reference_run") for h in (0.4, 0.2)]
    table = eoc(recs)
    table.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",") == table.header
    assert "rate_u_H1_err" in lines[0]
    text = table.to_text()
    assert "self-convergence" in text
    assert len({len(line) for line in text.splitlines()[:3]}) == 1  # aligned


def test_error_record_invariants():
    with pytest.raises(ValueError):
        ErrorRecord(0.1, 0.01, -1.0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        ErrorRecord(0.0, 0.01, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        ErrorRecord(0.1, 0.01, 0, 0, 0, 0, 0, "guess")


# -- exact-circle errors ------------------------------------------------------------------


@pytest.fixture(scope="module")
def circle_state():
    state, _ = solve_state(StateSnapshot(0, 0.0, curved_mesh("circle", 0.1, 2)), 0.01)
    return state


def test_exact_circle_velocity_error_is_velocity_norm(circle_state):
    rec = theorem_errors(circle_state, ExactCircle(0.5), 0.01)
    assert rec.u_H1_err == norms(circle_state.u, circle_state.fe.V, circle_state.mesh, "H1")
    assert rec.x_H1_err <= 1e-10  # no motion at step 0
    assert rec.source == "exact_circle"
    assert all(getattr(rec, c) >= 0 for c in ERROR_COLUMNS)


def test_injected_exact_fields_give_zero_errors(circle_state):
    mesh = circle_state.mesh
    X = mesh.nodes[mesh.interface_nodes]
    exact = replace(circle_state, u=np.zeros_like(circle_state.u),
                    p=exact_circle_pressure(circle_state, 0.5),
                    kappa=X / np.linalg.norm(X, axis=1, keepdims=True) / 0.5)
    rec = theorem_errors(exact, ExactCircle(0.5), 0.01)
    for c in ERROR_COLUMNS:
        assert getattr(rec, c) <= 1e-10, c
    assert laplace_young_check(exact, 0.5) <= 1e-12


def test_laplace_young_improves_with_h():
    errs = []
    for h in (0.2, 0.1):
        state, _ = solve_state(StateSnapshot(0, 0.0, curved_mesh("circle", h, 2)), h * h)
        errs.append(laplace_young_check(state, 0.5))
    assert errs[0] / errs[1] >= 1.5


def test_unsolved_state_rejected():
    with pytest.raises(ValueError):
        theorem_errors(StateSnapshot(0, 0.0, curved_mesh("circle", 0.2, 2)), ExactCircle(0.5), 0.04)


# -- reference-run errors -----------------------------------------------------------------


@pytest.fixture(scope="module")
def ellipse_reference():
    return run(RunConfig(ELLIPSE, h=0.05, tau_rule="fixed", tau=0.01)).snapshots[-1]


def test_reference_errors_decrease(ellipse_reference):
    recs = []
    for h in (0.2, 0.1):
        state = run(RunConfig(ELLIPSE, h=h, tau_rule="fixed", tau=0.01)).snapshots[-1]
        recs.append(theorem_errors(state, ellipse_reference, 0.01))
    print(recs)
    for c in ("u_H1_err", "p_L2_err", "x_H1_err", "kappa_L2_err"):
        assert getattr(recs[1], c) < getattr(recs[0], c), c
    assert all(r.source == "reference_run" for r in recs)


def test_reference_self_comparison_is_zero(ellipse_reference):
    rec = theorem_errors(ellipse_reference, ellipse_reference, 0.01)
    for c in ("u_H1_err", "p_L2_err", "x_H1_err", "kappa_L2_err", "pressure_jump_err"):
        assert getattr(rec, c) <= 1e-9, c


def test_reference_mismatch(ellipse_reference):
    state = run(RunConfig(ELLIPSE, h=0.2, tau_rule="fixed", tau=0.01)).snapshots[-1]
    with pytest.raises(ReferenceMismatch):
        theorem_errors(replace(state, t=0.5), ellipse_reference, 0.01)
    shifted = InterfaceDescriptor.ellipse(0.6, 0.4, (0.2, 0.0))
    other = run(RunConfig(shifted, h=0.05, tau_rule="fixed", tau=0.01)).snapshots[-1]
    with pytest.raises(ReferenceMismatch):
        theorem_errors(other, ellipse_reference, 0.01)


# -- identity suite -----------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("kind", ["circle", "ellipse", "star"])
def test_identity_suite_passes(kind, k, tmp_path):
    report = identity_suite(curved_mesh(kind, 0.1, k))
    text = report.to_text()
    assert report.passed, text
    assert text.count("PASS") == len(report.checks) + 1
    write_identity_report(tmp_path / "id.txt", report)
    assert (tmp_path / "id.txt").read_text() == text


def test_interface_transport_decays_quadratically():
    res, _ = interface_transport_residuals(curved_mesh("ellipse", 0.1, 2), deltas=(1e-2, 1e-3))
    assert abs(res[0] / res[1]) == pytest.approx(100, rel=0.1)


def test_decay_check_rejects_first_order_residuals():
    assert not _decay_check("x", [1e-3, 1e-4], 1.0).passed
    assert _decay_check("x", [1e-4, 1e-6], 1.0).passed


def test_circle_integration_by_parts():
    assert circle_ibp_residual(0.5) <= 1e-12
    assert circle_ibp_residual(0.3, (0.1, -0.2)) <= 1e-12
    # f = x, g = 1: int tangential d_1 x = int (1 - n_1^2) = pi R, which equals int H n_1 x
    R = 0.5
    th = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    w = 2 * np.pi * R / len(th)
    assert (1 - np.cos(th) ** 2).sum() * w == pytest.approx(np.pi * R, abs=1e-12)
    assert (np.cos(th) * R * np.cos(th) / R).sum() * w == pytest.approx(np.pi * R, abs=1e-12)
