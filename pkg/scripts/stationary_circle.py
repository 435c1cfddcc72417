"""Stationary circle: velocity norm, Laplace-Young error and divergence residual per level."""
import argparse
from dataclasses import replace

import numpy as np

from twophase.diagnostics import ExactCircle, eoc, laplace_young_check, theorem_errors
from twophase.geometry import InterfaceDescriptor
from twophase.mesh.curved import lenoir_curve
from twophase.mesh.mesher import Rectangle, generate_fitted_mesh
from twophase.scheme import StateSnapshot, Viscosity, divergence_residual, solve_state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--R", type=float, default=0.5)
    ap.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--nu", type=float, nargs=2, default=[1.0, 1.0], metavar=("MINUS", "PLUS"))
    args = ap.parse_args()

    desc = InterfaceDescriptor.circle(args.R)
    records = []
    print(f"{'h':>8} {'u_H1':>12} {'LY err':>12} {'div res':>12}")
    for h in args.levels:
        mesh = lenoir_curve(generate_fitted_mesh(Rectangle(), desc, h), desc, args.k)
        state, system = solve_state(StateSnapshot(0, 0.0, mesh), h * h, Viscosity(*args.nu))
        rec = replace(theorem_errors(state, ExactCircle(args.R), h * h), h=h)
        records.append(rec)
        print(f"{h:8.4f} {rec.u_H1_err:12.4e} {laplace_young_check(state, args.R):12.4e} "
              f"{divergence_residual(system, state):12.4e}")
    print()
    print(eoc(records).to_text())
    print("velocity EOC", np.round(eoc(records).rates["u_H1_err"], 3), f"(target k - 1/2 = {args.k - 0.5})")


if __name__ == "__main__":
    main()
