"""Legacy ASCII VTK output.

Each Q2 element is written as four bilinear quads built from its corner,
midside and center nodes, so every Q2 node is a VTK point.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import StructuredGrid

HEADER = "# vtk DataFile Version 3.0"
# local Q2 order: corners (CCW from bottom-left), midsides (bottom, right, top, left), center
SUBCELLS = np.array([[0, 4, 8, 7], [4, 1, 5, 8], [8, 5, 2, 6], [7, 8, 6, 3]])
VTK_QUAD = 9


def pressure_on_q2(grid: StructuredGrid, p) -> np.ndarray:
    """Bilinear Q1 pressure sampled at every Q2 node."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(grid.n_nodes)
    # local Q2 nodes at parametric (+-1, 0) positions: weights of the 4 corner values
    w = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
                  [.5, .5, 0, 0], [0, .5, .5, 0], [0, 0, .5, .5], [.5, 0, 0, .5], [.25, .25, .25, .25]])
    vals = np.einsum("ab,eb->ea", w, p[grid.pconn])
    out[grid.conn.ravel()] = vals.ravel()
    return out


def write_vtk(path, grid: StructuredGrid, coords=None, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "tofsi") -> Path:
    """Write an unstructured grid; element cell data are repeated on the 4 sub-cells.

    Point data arrays of shape (n_nodes,) are scalars, (n_nodes, 2) vectors.
    """
    path = Path(path)
    X = grid.nodes if coords is None else np.asarray(coords, dtype=float).reshape(-1, 2)
    cells = grid.conn[:, SUBCELLS].reshape(-1, 4)
    lines = [HEADER, title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {grid.n_nodes} double"]
    lines += [f"{x:.12g} {y:.12g} 0" for x, y in X]
    lines.append(f"CELLS {len(cells)} {5 * len(cells)}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_QUAD)] * len(cells)
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, vals in cell_data.items():
            vals = np.repeat(np.real(np.asarray(vals, dtype=complex)), 4)
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.12g}" for v in vals]
    if point_data:
        lines.append(f"POINT_DATA {grid.n_nodes}")
        for name, vals in point_data.items():
            vals = np.real(np.asarray(vals, dtype=complex))
            if vals.size == 2 * grid.n_nodes:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.12g} {b:.12g} 0" for a, b in vals.reshape(-1, 2)]
            elif vals.size == grid.n_nodes:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.12g}" for v in vals]
            else:
                raise ValueError(f"point data {name!r} has {vals.size} values for {grid.n_nodes} points")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk_counts(path) -> dict:
    """Point/cell counts and array lengths from a file written by :func:`write_vtk`."""
    counts = {}
    section = None
    with open(path) as fh:
        lines = fh.read().splitlines()
    counts["header"] = lines[0]
    for line in lines:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "POINTS":
            counts["points"] = int(tok[1])
        elif tok[0] == "CELLS":
            counts["cells"] = int(tok[1])
        elif tok[0] in ("CELL_DATA", "POINT_DATA"):
            section = tok[0]
            counts[section] = int(tok[1])
        elif tok[0] in ("SCALARS", "VECTORS"):
            counts.setdefault("arrays", {})[tok[1]] = (section, tok[0])
    return counts
