import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophase.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, convergence_check, main
from twophase.config import RunConfig, parse_config, serialize_config
from twophase.errors import ParseError, ValidationError
from twophase.geometry import InterfaceDescriptor

CIRCLE_INI = """\
[interface]
kind = circle
R = 0.5
"""

ELLIPSE_INI = """\
[interface]
kind = ellipse   # relaxes to a circle
a = 0.6
b = 0.4

[discretization]
k = 2
h = 0.2
"""


# -- configuration ----------------------------------------------------------------------


def test_minimal_config_defaults():
    cfg = parse_config(CIRCLE_INI)
    assert cfg.interface == InterfaceDescriptor.circle(0.5)
    assert (cfg.k, cfg.h, cfg.T, cfg.snapshot_every) == (2, 0.1, 0.0, 10)
    assert (cfg.nu_minus, cfg.nu_plus, cfg.gamma0, cfg.force) == (1.0, 1.0, 1.0, 0.0)
    assert cfg.tau_rule == "hk" and cfg.time_step() == pytest.approx(0.01)


def test_time_step_rules():
    base = RunConfig(InterfaceDescriptor.circle(0.5), k=3, h=0.1, tau_c=2.0)
    assert base.time_step() == pytest.approx(2e-3)
    assert RunConfig(base.interface, h=0.1, tau_rule="h2", tau_c=0.25).time_step() == pytest.approx(0.0025)
    fixed = RunConfig(base.interface, tau_rule="fixed", tau=0.03, T=0.1)
    assert fixed.time_step() == 0.03 and fixed.n_steps() == 4
    assert RunConfig(base.interface, tau_rule="fixed", tau=0.025, T=0.1).n_steps() == 4
    assert base.refined(2).h == pytest.approx(0.025)


def test_k1_is_rejected():
    with pytest.raises(ValidationError, match=r"k must be ≥ 2 \(inf-sup\)"):
        parse_config(CIRCLE_INI + "[discretization]\nk = 1\n")


def test_every_problem_is_listed():
    text = CIRCLE_INI + "[physics]\nnu_minus = 0\nnu_plus = -1\nT = -1\n"
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert {"nu_minus must be > 0", "nu_plus must be > 0", "T must be ≥ 0"} <= set(info.value.problems)


@pytest.mark.parametrize("text, line", [
    ("kind = circle\n", 1),
    ("[interface]\nkind circle\n", 2),
    ("[interface]\nkind = circle\nR = 0.5\nR = 0.6\n", 4),
    ("[interface]\nkind = circle\n\n[discretization]\nh = fine\n", 5),
    ("[interface]\nkind = circle\ncolour = red\n", 3),
])
def test_parse_errors_are_line_numbered(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}:")


def test_unknown_section_and_kind():
    with pytest.raises(ParseError):
        parse_config(CIRCLE_INI + "[solver]\nx = 1\n")
    with pytest.raises(ValidationError, match="kind"):
        parse_config("[interface]\nkind = square\n")
    with pytest.raises(ValidationError, match="fixed"):
        parse_config(CIRCLE_INI + "[discretization]\ntau_rule = fixed\n")


def test_overrides():
    cfg = parse_config(CIRCLE_INI, ["k=3", "physics.T=0.5", "interface.R=0.25"])
    assert (cfg.k, cfg.T, cfg.interface.R) == (3, 0.5, 0.25)
    with pytest.raises(ParseError):
        parse_config(CIRCLE_INI, ["nonsense=1"])
    with pytest.raises(ParseError):
        parse_config(CIRCLE_INI, ["k"])


finite = st.floats(0.05, 0.4, allow_nan=False)


@st.composite
def configs(draw):
    kind = draw(st.sampled_from(["circle", "ellipse", "star"]))
    c = (draw(st.floats(-0.1, 0.1)), draw(st.floats(-0.1, 0.1)))
    if kind == "circle":
        desc = InterfaceDescriptor.circle(draw(finite), c)
    elif kind == "ellipse":
        desc = InterfaceDescriptor.ellipse(draw(finite), draw(finite), c)
    else:
        desc = InterfaceDescriptor.star(draw(finite), draw(st.floats(0, 0.5)), draw(st.integers(1, 7)), c)
    rule = draw(st.sampled_from(["fixed", "hk", "h2"]))
    return RunConfig(
        desc, k=draw(st.integers(2, 4)), h=draw(st.floats(1e-3, 0.5)), tau_rule=rule,
        tau_c=draw(st.floats(1e-3, 10)), tau=draw(st.floats(1e-6, 1)) if rule == "fixed" else None,
        T=draw(st.floats(0, 5)), nu_minus=draw(st.floats(1e-3, 1e3)), nu_plus=draw(st.floats(1e-3, 1e3)),
        output_dir=draw(st.sampled_from(["out", "runs/a b", "/tmp/x"])), snapshot_every=draw(st.integers(1, 50)),
    )


@settings(max_examples=150, deadline=None)
@given(configs())
def test_config_round_trip(cfg):
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text


# -- commands ---------------------------------------------------------------------------


@pytest.fixture
def ellipse_ini(tmp_path):
    p = tmp_path / "ellipse.ini"
    p.write_text(ELLIPSE_INI)
    return p


def test_run_with_zero_final_time(tmp_path, ellipse_ini):
    out = tmp_path / "run"
    assert main(["run", "--config", str(ellipse_ini), "--out", str(out), "--quiet"]) == EXIT_OK
    rows = list(csv.DictReader((out / "diagnostics.csv").open()))
    assert len(rows) == 1 and rows[0]["step"] == "0"
    vtk = (out / "snapshot_000000.vtk").read_text()
    assert vtk.startswith("# vtk DataFile Version")
    assert "UNSTRUCTURED_GRID" in vtk and "velocity" in vtk
    assert parse_config((out / "config.ini").read_text()).output_dir == str(out)


def test_run_invocations_are_deterministic(tmp_path, ellipse_ini):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--config", str(ellipse_ini), "--set", "T=0.06", "--set", "tau_rule=fixed",
                     "--set", "tau=0.02", "--out", str(out), "--quiet"]) == EXIT_OK
        outs.append(out)
    for f in ("diagnostics.csv", "snapshot_000000.vtk", "snapshot_000003.vtk"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_converge_on_stationary_circle(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(CIRCLE_INI + "[discretization]\nh = 0.2\n")
    out = tmp_path / "conv"
    assert main(["converge", "--config", str(ini), "--levels", "3", "--out", str(out), "--quiet"]) == EXIT_OK
    rows = list(csv.DictReader((out / "eoc.csv").open()))
    assert len(rows) == 3
    assert rows[0]["rate_u_H1_err"] == "" and float(rows[2]["rate_u_H1_err"]) >= 1.0
    assert [float(r["h"]) for r in rows] == [0.2, 0.1, 0.05]
    assert "rate_u_H1_err" in (out / "eoc.txt").read_text()


def test_converge_needs_two_levels(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(CIRCLE_INI)
    assert main(["converge", "--config", str(ini), "--levels", "1", "--quiet"]) == EXIT_CONFIG


def test_check_mesh_round_trip(tmp_path, ellipse_ini):
    first = tmp_path / "first"
    assert main(["check-mesh", "--config", str(ellipse_ini), "--out", str(first), "--quiet"]) == EXIT_OK
    second = tmp_path / "second"
    assert main(["check-mesh", str(first / "mesh.txt"), "--config", str(ellipse_ini), "--out", str(second),
                 "--quiet"]) == EXIT_OK
    assert (first / "mesh.txt").read_bytes() == (second / "mesh.txt").read_bytes()
    report = (second / "mesh_report.txt").read_text()
    assert "FAIL" not in report and "kappa_star" in report


def test_check_mesh_bad_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("MESH2D k=2\nNODES 1\n0 0 0\n")
    assert main(["check-mesh", str(bad), "--quiet"]) == EXIT_CONFIG


def test_identities_command(tmp_path, ellipse_ini):
    out = tmp_path / "id"
    assert main(["identities", "--config", str(ellipse_ini), "--out", str(out), "--quiet"]) == EXIT_OK
    assert "PASS  overall" in (out / "identities.txt").read_text()


def test_config_errors_exit_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text(CIRCLE_INI + "[discretization]\nk = 1\n[physics]\nnu_minus = 0\n")
    assert main(["run", "--config", str(ini), "--quiet"]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config failed" in err and "inf-sup" in err and "nu_minus" in err
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--quiet"]) == EXIT_CONFIG
    assert main(["run", "--config", str(ini.parent / "bad.ini"), "--set", "h=0.4", "--quiet"]) == EXIT_CONFIG


def test_clearance_error_exit_2(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(CIRCLE_INI + "[discretization]\nh = 0.3\n")
    assert main(["run", "--config", str(ini), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_CONFIG


STAR_INI = """\
[interface]
kind = star
r0 = 0.5
amplitude = 0.25
lobes = 5

[discretization]
h = 0.1
tau_rule = fixed
tau = 5.0

[physics]
T = 20
"""


def test_solver_abort_keeps_partial_outputs(tmp_path, capsys):
    """A huge time step on a five-lobed star folds an element during the first mesh update."""
    ini = tmp_path / "star.ini"
    ini.write_text(STAR_INI)
    out = tmp_path / "flip"
    code = main(["run", "--config", str(ini), "--out", str(out), "--quiet"])
    assert code == EXIT_SOLVER
    assert "run failed: JacobianFlip" in capsys.readouterr().err
    rows = list(csv.DictReader((out / "diagnostics.csv").open()))
    assert len(rows) >= 1
    assert (out / "snapshot_000000.vtk").exists()
    assert "JacobianFlip" in (out / "abort.txt").read_text()


def test_initial_curving_failure_exits_3(tmp_path):
    ini = tmp_path / "star.ini"
    ini.write_text(STAR_INI.replace("amplitude = 0.25\nlobes = 5", "amplitude = 0.3\nlobes = 4"))
    out = tmp_path / "o"
    assert main(["run", "--config", str(ini), "--out", str(out), "--quiet"]) == EXIT_SOLVER
    assert (out / "abort.txt").read_text().startswith("initial mesh")


def test_mesher_failure_exits_2(tmp_path):
    ini = tmp_path / "star.ini"
    ini.write_text(STAR_INI.replace("r0 = 0.5\namplitude = 0.25\nlobes = 5", "r0 = 0.45\namplitude = 0.5\nlobes = 6"))
    assert main(["run", "--config", str(ini), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_CONFIG


def test_convergence_check_reference_mode():
    from twophase.diagnostics import ErrorRecord, eoc

    good = eoc([ErrorRecord(h, h, h, h, h, h, h, "reference_run") for h in (0.2, 0.1)])
    bad = eoc([ErrorRecord(h, h, 1.0, h, h, h, h, "reference_run") for h in (0.2, 0.1)])
    assert convergence_check(good, 2)[0]
    assert not convergence_check(bad, 2)[0]
    assert EXIT_CHECK == 4
