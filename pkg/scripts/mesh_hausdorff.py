"""Distance between the curved discrete interface and the exact curve, and enclosed-area error."""
import argparse

import numpy as np

from twophase.diagnostics import eoc_rates
from twophase.geometry import InterfaceDescriptor
from twophase.mesh.curved import lenoir_curve
from twophase.mesh.mesher import Rectangle, generate_fitted_mesh

SHAPES = {
    "circle": (InterfaceDescriptor.circle(0.5), np.pi * 0.25),
    "ellipse": (InterfaceDescriptor.ellipse(0.6, 0.4), np.pi * 0.24),
    "star": (InterfaceDescriptor.star(0.5, 0.1, 3), np.pi * 0.25 * (1 + 0.1**2 / 2)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shapes", nargs="+", default=list(SHAPES), choices=list(SHAPES))
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    args = ap.parse_args()
    for name in args.shapes:
        desc, area = SHAPES[name]
        for k in args.degrees:
            dist, aerr = [], []
            for h in args.levels:
                mesh = lenoir_curve(generate_fitted_mesh(Rectangle(), desc, h), desc, k)
                dist.append(np.abs(desc.signed_distance(mesh.interface_samples(32))).max())
                aerr.append(abs(mesh.phase_areas()[0] - area))
            print(f"{name:8s} k={k}  distance EOC {np.round(eoc_rates(args.levels, dist), 2)}  "
                  f"area EOC {np.round(eoc_rates(args.levels, aerr), 2)}")


if __name__ == "__main__":
    main()
