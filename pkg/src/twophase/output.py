"""File writers: per-step diagnostics CSV and legacy ASCII VTK snapshots."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .femspace.reference import basis, lattice_points, lattice_triangles


def fmt(x):
    """Deterministic shortest round-trip text for numbers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class DiagnosticsWriter:
    def __init__(self, path, columns=None):
        from .scheme import DIAGNOSTIC_COLUMNS

        self.columns = tuple(columns or DIAGNOSTIC_COLUMNS)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(self.columns)
        self._fh.flush()

    def write(self, row):
        self._csv.writerow([fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_table(path, rows, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r[c] is None else (r[c] if isinstance(r[c], str) else fmt(r[c])) for c in columns])


def write_vtk(path, state):
    """Each curved element becomes k^2 flat triangles on its node lattice.

    Point data: velocity and pressure (discontinuous across elements, so
    points are not shared); cell data: phase.
    """
    mesh = state.mesh
    k = mesh.k
    lat = lattice_points(k)
    tris = lattice_triangles(k)
    M = mesh.n_elements
    npts = len(lat)
    xy = mesh.map_points(lat).reshape(-1, 2)
    lines = ["# vtk DataFile Version 3.0", f"two-phase Stokes step {state.m} t={state.t!r}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(xy)} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in xy.tolist()]
    cells = (np.arange(M)[:, None, None] * npts + tris[None]).reshape(-1, 3)
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in cells.tolist()]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["5"] * len(cells)
    lines.append(f"CELL_DATA {len(cells)}")
    lines += ["SCALARS phase int 1", "LOOKUP_TABLE default"]
    lines += [str(int(v)) for v in np.repeat(mesh.phase, len(tris))]
    if state.u is not None:
        u = np.einsum("qb,mbi->mqi", basis(k).values(lat), state.u[mesh.elements]).reshape(-1, 2)
        fe = state.fe
        p = np.einsum("qb,mb->mq", basis(fe.Q.degree).values(lat), state.p[fe.Q.elements]).ravel()
        lines.append(f"POINT_DATA {len(xy)}")
        lines.append("VECTORS velocity double")
        lines += [f"{a!r} {b!r} 0.0" for a, b in u.tolist()]
        lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in p.tolist()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
