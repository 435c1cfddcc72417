"""Lagrange interpolation errors of sin(pi x) cos(pi y) on curved meshes."""
import argparse

import numpy as np

from twophase.diagnostics import eoc_rates
from twophase.femspace.functions import lagrange_interpolate, norms
from twophase.femspace.spaces import velocity_scalar_space
from twophase.geometry import InterfaceDescriptor
from twophase.mesh.curved import lenoir_curve
from twophase.mesh.mesher import Rectangle, generate_fitted_mesh


def f(x):
    return np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])


def df(x):
    a, b = np.pi * x[..., 0], np.pi * x[..., 1]
    return np.stack([np.pi * np.cos(a) * np.cos(b), -np.pi * np.sin(a) * np.sin(b)], axis=-1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    args = ap.parse_args()
    desc = InterfaceDescriptor.ellipse(0.6, 0.4)
    for k in args.degrees:
        l2, h1 = [], []
        for h in args.levels:
            mesh = lenoir_curve(generate_fitted_mesh(Rectangle(), desc, h), desc, k)
            V = velocity_scalar_space(mesh)
            c = lagrange_interpolate(f, V, mesh)
            l2.append(norms(c, V, mesh, "L2", exact=f))
            h1.append(norms(c, V, mesh, "H1_semi", exact_grad=df))
        print(f"k={k}  L2 {np.round(l2, 10)}  EOC {np.round(eoc_rates(args.levels, l2), 2)} (target {k + 1})")
        print(f"      H1 {np.round(h1, 10)}  EOC {np.round(eoc_rates(args.levels, h1), 2)} (target {k})")


if __name__ == "__main__":
    main()
