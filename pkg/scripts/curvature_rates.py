"""Discrete curvature M kappa = S X on curved circle meshes against kappa = n / R."""
import argparse

import numpy as np
import scipy.sparse.linalg as spla

from twophase.diagnostics import eoc_rates
from twophase.femspace.assembly import assemble_interface_mass, assemble_interface_stiffness
from twophase.femspace.functions import interface_norm
from twophase.femspace.spaces import build_fe_system
from twophase.geometry import InterfaceDescriptor
from twophase.mesh.curved import lenoir_curve
from twophase.mesh.mesher import Rectangle, generate_fitted_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--R", type=float, default=0.5)
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    args = ap.parse_args()
    desc = InterfaceDescriptor.circle(args.R)
    for k in args.degrees:
        err = []
        for h in args.levels:
            mesh = lenoir_curve(generate_fitted_mesh(Rectangle(), desc, h), desc, k)
            fe = build_fe_system(mesh)
            _, g = assemble_interface_stiffness(mesh, fe)
            kappa = fe.interface_full(spla.spsolve(assemble_interface_mass(mesh, fe).tocsc(), g))
            err.append(interface_norm(kappa, mesh, exact=lambda x: x / np.linalg.norm(x, axis=-1, keepdims=True)
                                      / args.R))
        print(f"k={k}  L2 errors {np.round(err, 10)}  EOC {np.round(eoc_rates(args.levels, err), 2)}")


if __name__ == "__main__":
    main()
