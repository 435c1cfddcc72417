"""Plain-text import/export of curved meshes.

Format::

    MESH2D k=<k>
    NODES <n>
    x y                      (n lines, shortest round-trip float repr)
    ELEMENTS <m>
    id id ... id -|+         (m lines, reference node order, phase tag)
    INTERFACE_EDGES <e>
    id ... id                (e lines, k+1 node ids, minus phase on the left)
    BOUNDARY <b>
    id                       (b lines)
"""
from __future__ import annotations

from collections import Counter
from pathlib import Path

import numpy as np

from ..errors import JacobianFlip, MeshFormatError
from .curved import CurvedMesh
from .mesher import MINUS, PLUS, Rectangle

_TAG = {MINUS: "-", PLUS: "+"}


def format_mesh(mesh: CurvedMesh) -> str:
    out = [f"MESH2D k={mesh.k}", f"NODES {mesh.n_nodes}"]
    out += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.nodes]
    out.append(f"ELEMENTS {mesh.n_elements}")
    out += [" ".join(map(str, el)) + " " + _TAG[int(ph)] for el, ph in zip(mesh.elements.tolist(), mesh.phase)]
    out.append(f"INTERFACE_EDGES {len(mesh.interface_edges)}")
    out += [" ".join(map(str, e)) for e in mesh.interface_edges.tolist()]
    out.append(f"BOUNDARY {len(mesh.boundary_nodes)}")
    out += [str(b) for b in mesh.boundary_nodes.tolist()]
    return "\n".join(out) + "\n"


def export_mesh(mesh: CurvedMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.i = 0

    def next(self):
        while self.i < len(self.lines):
            self.i += 1
            line = self.lines[self.i - 1].strip()
            if line:
                return line
        raise MeshFormatError("unexpected end of file")

    def fail(self, msg):
        raise MeshFormatError(f"line {self.i}: {msg}")

    def header(self, name):
        parts = self.next().split()
        if len(parts) != 2 or parts[0] != name or not parts[1].isdigit():
            self.fail(f"expected '{name} <count>'")
        return int(parts[1])


def parse_mesh(text: str) -> CurvedMesh:
    """Parse and validate the text format; raises :class:`MeshFormatError`."""
    src = _Lines(text)
    head = src.next().split()
    if len(head) != 2 or head[0] != "MESH2D" or not head[1].startswith("k="):
        src.fail("expected 'MESH2D k=<int>'")
    try:
        k = int(head[1][2:])
    except ValueError:
        src.fail("bad order")
    if k < 1:
        src.fail("order must be >= 1")
    nb = (k + 1) * (k + 2) // 2

    n = src.header("NODES")
    nodes = np.empty((n, 2))
    for j in range(n):
        parts = src.next().split()
        try:
            if len(parts) != 2:
                raise ValueError
            nodes[j] = float(parts[0]), float(parts[1])
        except ValueError:
            src.fail("expected 'x y'")
    if not np.all(np.isfinite(nodes)):
        raise MeshFormatError("non-finite node coordinate")

    m = src.header("ELEMENTS")
    elements = np.empty((m, nb), dtype=np.int64)
    phase = np.empty(m, dtype=np.int8)
    for j in range(m):
        parts = src.next().split()
        if len(parts) != nb + 1 or parts[-1] not in ("-", "+"):
            src.fail(f"expected {nb} node ids and a phase tag")
        try:
            elements[j] = [int(v) for v in parts[:-1]]
        except ValueError:
            src.fail("bad node id")
        phase[j] = MINUS if parts[-1] == "-" else PLUS

    e = src.header("INTERFACE_EDGES")
    iedges = np.empty((e, k + 1), dtype=np.int64)
    for j in range(e):
        parts = src.next().split()
        if len(parts) != k + 1:
            src.fail(f"expected {k + 1} node ids")
        try:
            iedges[j] = [int(v) for v in parts]
        except ValueError:
            src.fail("bad node id")

    b = src.header("BOUNDARY")
    boundary = np.empty(b, dtype=np.int64)
    for j in range(b):
        line = src.next()
        if not line.lstrip("-").isdigit():
            src.fail("bad boundary node id")
        boundary[j] = int(line)
    if any(line.strip() for line in src.lines[src.i:]):
        raise MeshFormatError(f"line {src.i + 1}: trailing content")

    for name, ids in (("element", elements), ("interface", iedges), ("boundary", boundary)):
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise MeshFormatError(f"{name} node id out of range")
    return _validated(k, nodes, elements, phase, iedges, boundary)


def _validated(k, nodes, elements, phase, iedges, boundary):
    lo, hi = nodes[boundary].min(axis=0), nodes[boundary].max(axis=0)
    mesh = CurvedMesh(k, nodes, elements, phase, iedges, np.unique(boundary),
                      Rectangle(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])))
    # single closed cycle
    starts, ends = iedges[:, 0], iedges[:, -1]
    nxt = dict(zip(starts.tolist(), range(len(iedges))))
    if len(nxt) != len(iedges) or Counter(ends.tolist()) != Counter(starts.tolist()):
        raise MeshFormatError("interface edges do not form a closed cycle")
    seen, cur = 0, 0
    while True:
        cur = nxt[int(ends[cur])]
        seen += 1
        if cur == 0:
            break
    if seen != len(iedges):
        raise MeshFormatError("interface consists of more than one cycle")
    # at most one interface edge per triangle
    counts = np.bincount(mesh.interface_tris.ravel(), minlength=mesh.n_elements)
    if counts.max(initial=0) > 1:
        raise MeshFormatError("a triangle has more than one interface edge")
    try:
        mesh.check_jacobians()
    except JacobianFlip as exc:
        raise MeshFormatError(f"invalid element maps: {exc}") from exc
    return mesh


def import_mesh(path) -> CurvedMesh:
    return parse_mesh(Path(path).read_text())
