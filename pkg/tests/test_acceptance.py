"""Acceptance criteria, each at its stated tolerance.

Every test appends one PASS/FAIL line to the acceptance summary printed at
the end of the pytest run.  Run directly (``python3 tests/test_acceptance.py``)
to execute only this module.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse.linalg as spla

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, CIRCLE, ELLIPSE, curved_mesh, rates  # noqa: E402
from twophase.cli import main  # noqa: E402
from twophase.config import RunConfig  # noqa: E402
from twophase.diagnostics import identity_suite, laplace_young_check  # noqa: E402
from twophase.femspace.assembly import assemble_interface_mass, assemble_interface_stiffness  # noqa: E402
from twophase.femspace.functions import interface_norm, lagrange_interpolate, norms  # noqa: E402
from twophase.femspace.spaces import build_fe_system, velocity_scalar_space  # noqa: E402
from twophase.mesh.io import format_mesh, parse_mesh  # noqa: E402
from twophase.scheme import StateSnapshot, Viscosity, divergence_residual, run, solve_state  # noqa: E402


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {number} ({title}): {detail}")


def fmt_rates(r):
    return "[" + ", ".join(f"{v:.2f}" for v in r) + "]"


# criterion 6 is checked on every solve of criteria 1 and 4
DIVERGENCE = {"worst": 0.0, "solves": 0}


def record_divergence(solved, system):
    u_h1 = norms(solved.u, solved.fe.V, solved.mesh, "H1", geo=system.geo)
    ratio = divergence_residual(system, solved) / max(u_h1, np.finfo(float).tiny)
    DIVERGENCE["worst"] = max(DIVERGENCE["worst"], ratio)
    DIVERGENCE["solves"] += 1


# -- 1. stationary circle ---------------------------------------------------------------------

C1_LEVELS = (0.2, 0.1, 0.05)


@pytest.fixture(scope="module")
def stationary_circle():
    t0 = time.perf_counter()
    out = {}
    for nu in ((1.0, 1.0), (1.0, 10.0)):
        u_h1, ly = [], []
        for h in C1_LEVELS:
            state = StateSnapshot(0, 0.0, curved_mesh("circle", h, 2))
            solved, system = solve_state(state, h * h, Viscosity(*nu))
            record_divergence(solved, system)
            u_h1.append(norms(solved.u, solved.fe.V, solved.mesh, "H1", geo=system.geo))
            ly.append(laplace_young_check(solved, 0.5))
        out[nu] = (u_h1, ly)
    return out, time.perf_counter() - t0


def test_criterion_1_stationary_circle(stationary_circle):
    results, elapsed = stationary_circle
    ok, parts = elapsed <= 120, []
    for nu, (u_h1, ly) in results.items():
        r = rates(C1_LEVELS, u_h1)
        gains = [ly[i] / ly[i + 1] for i in range(len(ly) - 1)]
        ok &= bool(np.all(np.diff(u_h1) < 0) and r.min() >= 1.5 and ly[-1] <= 0.05 and min(gains) >= 1.5)
        parts.append(f"nu={nu}: u_H1 EOC {fmt_rates(r)}, LY err {ly[-1]:.2e} gains {fmt_rates(gains)}")
    report(1, "stationary circle", ok, "; ".join(parts) + f"; {elapsed:.1f} s")
    assert ok


# -- 2. curvature operator --------------------------------------------------------------------


def test_criterion_2_curvature():
    t0 = time.perf_counter()
    hs = (0.2, 0.1, 0.05)
    ok, parts = True, []
    for k in (2, 3):
        err = []
        for h in hs:
            mesh = curved_mesh("circle", h, k)
            fe = build_fe_system(mesh)
            _, g = assemble_interface_stiffness(mesh, fe)
            kappa = fe.interface_full(spla.spsolve(assemble_interface_mass(mesh, fe).tocsc(), g))
            err.append(interface_norm(kappa, mesh, exact=lambda x: x / np.linalg.norm(x, axis=-1,
                                                                                     keepdims=True) / 0.5))
        r = rates(hs, err)
        ok &= bool(r.min() >= k - 1)
        parts.append(f"k={k} EOC {fmt_rates(r)} (need >= {k - 1})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 30
    report(2, "curvature operator", ok, "; ".join(parts) + f"; {elapsed:.1f} s")
    assert ok


# -- 3. interpolation -------------------------------------------------------------------------


def _f(x):
    return np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])


def _df(x):
    a, b = np.pi * x[..., 0], np.pi * x[..., 1]
    return np.stack([np.pi * np.cos(a) * np.cos(b), -np.pi * np.sin(a) * np.sin(b)], axis=-1)


def test_criterion_3_interpolation():
    t0 = time.perf_counter()
    hs = (0.1, 0.05, 0.025)
    ok, parts = True, []
    for k in (2, 3):
        l2, h1 = [], []
        for h in hs:
            mesh = curved_mesh("ellipse", h, k)
            V = velocity_scalar_space(mesh)
            c = lagrange_interpolate(_f, V, mesh)
            l2.append(norms(c, V, mesh, "L2", exact=_f))
            h1.append(norms(c, V, mesh, "H1_semi", exact_grad=_df))
        rl, rh = rates(hs, l2), rates(hs, h1)
        ok &= bool(np.all(np.abs(rl - (k + 1)) <= 0.3) and np.all(np.abs(rh - k) <= 0.3))
        parts.append(f"k={k} L2 {fmt_rates(rl)} H1 {fmt_rates(rh)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 30
    report(3, "interpolation orders", ok, "; ".join(parts) + f"; {elapsed:.1f} s")
    assert ok


# -- 4. ellipse relaxation --------------------------------------------------------------------


@pytest.fixture(scope="module")
def ellipse_relaxation():
    t0 = time.perf_counter()
    out = []
    for h in (0.1, 0.05):
        cfg = RunConfig(ELLIPSE, k=2, h=h, tau_rule="h2", tau_c=0.25, T=0.5, snapshot_every=10**9)
        res = run(cfg, on_solve=record_divergence)
        d = res.diagnostics
        P = np.array([r["perimeter"] for r in d])
        A = np.array([r["area_minus"] for r in d])
        E = np.array([r["energy_residual"] for r in d])
        out.append({"h": h, "steps": res.n_steps, "dP": np.diff(P).max(),
                    "drift": np.abs(A - A[0]).max() / A[0], "energy": np.abs(E).max()})
    return out, time.perf_counter() - t0


def test_criterion_4_ellipse_relaxation(ellipse_relaxation):
    (c, f), elapsed = ellipse_relaxation
    drift_gain, energy_gain = c["drift"] / f["drift"], c["energy"] / f["energy"]
    ok = (c["dP"] <= 1e-10 and f["dP"] <= 1e-10 and c["drift"] <= 1e-2 and f["drift"] <= 1e-2
          and drift_gain >= 1.5 and energy_gain >= 1.5 and elapsed <= 600)
    report(4, "ellipse relaxation", ok,
           f"max dP {c['dP']:.2e}/{f['dP']:.2e}, area drift {c['drift']:.2e}/{f['drift']:.2e} "
           f"(gain {drift_gain:.2f}), max |energy residual| {c['energy']:.2e}/{f['energy']:.2e} "
           f"(gain {energy_gain:.2f}), {c['steps']}+{f['steps']} steps, {elapsed:.0f} s")
    assert ok


# -- 5. identity suite ------------------------------------------------------------------------


def test_criterion_5_identities():
    t0 = time.perf_counter()
    reports = {k: identity_suite(curved_mesh("circle", 0.1, k), CIRCLE) for k in (2, 3)}
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in reports.values()) and elapsed <= 10
    worst = {k: min((c.residuals[0] / c.residuals[1]) for c in r.checks
                    if len(c.residuals) == 2 and "interface" in c.name) for k, r in reports.items()}
    ibp = reports[2].checks[-1].residuals[0]
    report(5, "identity suite", ok, f"interface transport ratio k=2 {worst[2]:.0f}, k=3 {worst[3]:.0f}; "
           f"bulk transport at roundoff; IBP residual {ibp:.1e}; {elapsed:.1f} s")
    for r in reports.values():
        print(r.to_text())
    assert ok


# -- 6. discrete divergence -------------------------------------------------------------------


def test_criterion_6_divergence_free(stationary_circle, ellipse_relaxation):
    ok = DIVERGENCE["solves"] > 0 and DIVERGENCE["worst"] <= 1e-9
    report(6, "discrete divergence-free", ok,
           f"max |B u| / |u|_H1 = {DIVERGENCE['worst']:.2e} over {DIVERGENCE['solves']} solves")
    assert ok


# -- 7. determinism ---------------------------------------------------------------------------


def test_criterion_7_determinism(tmp_path):
    ini = tmp_path / "ellipse.ini"
    ini.write_text("[interface]\nkind = ellipse\na = 0.6\nb = 0.4\n\n[discretization]\nh = 0.1\n"
                   "tau_rule = h2\ntau_c = 0.25\n\n[physics]\nT = 0.05\nnu_plus = 10\n")
    files = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--config", str(ini), "--out", str(out), "--quiet"]) == 0
        files.append((out / "diagnostics.csv").read_bytes())
    ok = files[0] == files[1]
    report(7, "determinism", ok, f"two runs, {len(files[0].splitlines()) - 1} rows, bit-identical CSV: {ok}")
    assert ok


# -- 8. mesh pipeline -------------------------------------------------------------------------


def test_criterion_8_mesh_pipeline():
    hs = (0.1, 0.05, 0.025)
    ok, parts = True, []
    for k in (2, 3):
        text = format_mesh(curved_mesh("ellipse", 0.1, k))
        same = format_mesh(parse_mesh(text)) == text
        haus = [np.abs(ELLIPSE.signed_distance(curved_mesh("ellipse", h, k).interface_samples(32))).max()
                for h in hs]
        r = rates(hs, haus)
        ok &= bool(same and np.all(np.abs(r - (k + 1)) <= 0.3))
        parts.append(f"k={k} round trip {'identical' if same else 'DIFFERS'}, Hausdorff EOC {fmt_rates(r)}")
    report(8, "mesh pipeline", ok, "; ".join(parts))
    assert ok


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
