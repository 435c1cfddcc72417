"""Command line: run, converge, check-mesh, identities.

Exit codes: 0 ok, 2 configuration/input error, 3 solver abort
(JacobianFlip / SingularSystem), 4 a check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config, serialize_config
from .diagnostics import ExactCircle, eoc, identity_suite, theorem_errors
from .errors import (
    ClearanceTooSmall,
    JacobianFlip,
    MeshFormatError,
    MeshGenerationError,
    NotStarShaped,
    ParseError,
    ReferenceMismatch,
    SingularSystem,
    ValidationError,
)
from .mesh.io import format_mesh, import_mesh, parse_mesh
from .scheme import initial_mesh, run

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("twophase")


class Stage(Exception):
    """Failure of a named stage, carrying the exit code."""

    def __init__(self, stage, code, cause):
        super().__init__(f"{stage} failed: {type(cause).__name__}: {cause}")
        self.code = code


def _say(args, msg):
    if not args.quiet:
        print(msg, flush=True)


def load_config(args) -> RunConfig:
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, args.set)
    except (OSError, ParseError, ValidationError) as exc:
        raise Stage("config", EXIT_CONFIG, exc) from exc
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _run_stage(stage, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (JacobianFlip, SingularSystem) as exc:
        raise Stage(stage, EXIT_SOLVER, exc) from exc
    except (ClearanceTooSmall, NotStarShaped, MeshGenerationError, MeshFormatError, ValueError) as exc:
        raise Stage(stage, EXIT_CONFIG, exc) from exc


def _progress(args):
    if args.quiet:
        return None
    return lambda row: print(f"step {row['step']:6d}  t={row['t']:.6f}  perimeter={row['perimeter']:.12f}  "
                             f"u_H1={row['u_H1']:.3e}", flush=True)


# -- commands ------------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(cfg))
    result = _run_stage("run", run, cfg, out, _progress(args))
    _say(args, f"{result.n_steps} step(s), tau={result.tau!r}; outputs in {out}")
    return EXIT_OK


def converge(cfg: RunConfig, levels: int, out: Path | None = None, progress=None):
    """Run ``levels`` levels (h halved each time) and measure errors at the final time.

    Circle interfaces are compared with the exact stationary solution;
    other shapes with a reference run at h/4 and tau/16 of the finest level.
    """
    finals, records = [], []
    for i in range(levels):
        lv = cfg.refined(i)
        lv_out = out / f"level_{i}" if out is not None else None
        res = run(lv, lv_out, progress)
        finals.append((lv, res.snapshots[-1], res.tau))
    if cfg.interface.kind == "circle":
        comparison = ExactCircle(cfg.interface.R, cfg.interface.center)
    else:
        fine = cfg.refined(levels - 1)
        ref_cfg = replace(fine, h=fine.h / 4, tau_rule="fixed", tau=fine.time_step() / 16)
        ref = run(ref_cfg, out / "reference" if out is not None else None, progress)
        comparison = ref.snapshots[-1]
        if abs(comparison.t - finals[-1][1].t) > 1e-9:
            raise ReferenceMismatch("reference final time differs; choose T as a multiple of every tau")
    for lv, state, tau in finals:
        # nominal level size, so successive rates are plain log2 ratios
        records.append(replace(theorem_errors(state, comparison, tau), h=lv.h))
    return eoc(records)


def convergence_check(table, k):
    """Exact circle: velocity EOC >= k - 1 on the last pair.  Reference: every error decreases."""
    if table.records[0].source == "exact_circle":
        rate = table.rates["u_H1_err"][-1]
        return rate >= k - 1, f"velocity H1 EOC {rate:.3f} (floor {k - 1})"
    ok = all(np.all(np.diff([getattr(r, c) for r in table.records]) < 0)
             for c in ("u_H1_err", "p_L2_err", "x_H1_err", "kappa_L2_err"))
    return ok, "all errors decrease" if ok else "some error does not decrease"


def cmd_converge(args) -> int:
    cfg = load_config(args)
    if args.levels < 2:
        raise Stage("converge", EXIT_CONFIG, ValueError("--levels must be >= 2"))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(cfg))
    try:
        table = _run_stage("converge", converge, cfg, args.levels, out, None if args.quiet else _progress(args))
    except ReferenceMismatch as exc:
        raise Stage("converge", EXIT_CHECK, exc) from exc
    table.to_csv(out / "eoc.csv")
    text = table.to_text()
    (out / "eoc.txt").write_text(text)
    _say(args, text.rstrip())
    ok, msg = convergence_check(table, cfg.k)
    _say(args, f"{'PASS' if ok else 'FAIL'}  {msg}")
    return EXIT_OK if ok else EXIT_CHECK


def mesh_report(mesh, desc=None):
    """Invariant checks and shape metrics as (lines, all_ok)."""
    lines, ok = [], True

    def check(name, cond, detail):
        nonlocal ok
        ok &= bool(cond)
        lines.append(f"{'PASS' if cond else 'FAIL'}  {name}: {detail}")

    areas = mesh.element_areas()
    dom = mesh.domain
    total = float(areas.sum())
    check("positive Jacobians", True, f"{mesh.n_elements} elements of order {mesh.k}")
    if dom is not None:
        ref_area = (dom.xmax - dom.xmin) * (dom.ymax - dom.ymin)
        check("area partition", abs(total - ref_area) <= 1e-12 * max(1.0, ref_area),
              f"sum of element areas {total!r} vs domain {ref_area!r}")
    am, ap = mesh.phase_areas()
    lines.append(f"INFO  phase areas: minus {am!r}, plus {ap!r}")
    lines.append(f"INFO  interface: {len(mesh.interface_edges)} edges, perimeter {mesh.perimeter()!r}")
    if desc is not None:
        sd = np.abs(desc.signed_distance(mesh.nodes[mesh.interface_nodes])).max()
        check("interface nodes on the interface", sd <= 1e-9, f"max |signed distance| {sd:.3e}")
    exported = format_mesh(mesh)
    check("export/import round trip", format_mesh(parse_mesh(exported)) == exported, "byte-identical re-export")
    met = mesh.metrics
    lines.append(f"INFO  kappa {met.kappa!r}")
    lines.append(f"INFO  kappa_star {met.kappa_star!r}")
    lines.append(f"INFO  min_scaled_jacobian {met.min_scaled_jacobian!r}")
    check("shape metrics", np.isfinite(met.kappa) and met.kappa > 0 and 0 < met.min_scaled_jacobian <= 1,
          "finite and positive")
    return lines, ok


def cmd_check_mesh(args) -> int:
    desc = None
    if args.mesh:
        try:
            mesh = import_mesh(args.mesh)
        except (OSError, MeshFormatError) as exc:
            raise Stage("check-mesh", EXIT_CONFIG, exc) from exc
        if args.config:
            desc = load_config(args).interface
        out = Path(args.out) if args.out else None
    else:
        cfg = load_config(args)
        desc = cfg.interface
        mesh = _run_stage("mesh", initial_mesh, cfg)
        out = Path(cfg.output_dir)
    lines, ok = mesh_report(mesh, desc)
    text = "\n".join(lines) + "\n"
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "mesh.txt").write_text(format_mesh(mesh))
        (out / "mesh_report.txt").write_text(text)
    _say(args, text.rstrip())
    return EXIT_OK if ok else EXIT_CHECK


def cmd_identities(args) -> int:
    cfg = load_config(args)
    mesh = _run_stage("mesh", initial_mesh, cfg)
    circle = cfg.interface if cfg.interface.kind == "circle" else None
    report = identity_suite(mesh, circle)
    text = report.to_text()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "identities.txt").write_text(text)
    _say(args, text.rstrip())
    return EXIT_OK if report.passed else EXIT_CHECK


# -- entry point ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file ([section] key = value)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (section.key=value or key=value); repeatable")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--quiet", action="store_true", help="no progress output")
    p = argparse.ArgumentParser(prog="twophase", description="Two-phase Stokes flow with surface tension "
                                "on moving fitted iso-parametric meshes.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="time-step a configuration").set_defaults(func=cmd_run)
    c = sub.add_parser("converge", parents=[common], help="error table over refinement levels")
    c.add_argument("--levels", type=int, default=3)
    c.set_defaults(func=cmd_converge)
    m = sub.add_parser("check-mesh", parents=[common], help="validate a mesh file or the configured mesh")
    m.add_argument("mesh", nargs="?", help="mesh file; without it the mesh is generated from --config")
    m.set_defaults(func=cmd_check_mesh)
    sub.add_parser("identities", parents=[common], help="finite-difference identity checks"
                   ).set_defaults(func=cmd_identities)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Stage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
