"""Legacy ASCII VTK output (unstructured grid, point data)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["write_vtk"]

_CELL_TYPE = {2: 5, 3: 10}   # triangle, tetrahedron


def write_vtk(path, mesh, fields: dict, title="biphasic fields") -> Path:
    """Write vertex values of ``fields`` (name -> FieldFunction).

    Vectors are padded to three components, as VTK expects.
    """
    path = Path(path)
    n, d = mesh.n_vertices, mesh.dim
    pts = np.zeros((n, 3))
    pts[:, :d] = mesh.vertices
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [" ".join("%.17g" % v for v in p) for p in pts]
    M, k = mesh.cells.shape
    lines.append(f"CELLS {M} {M * (k + 1)}")
    lines += [f"{k} " + " ".join(map(str, c)) for c in mesh.cells]
    lines.append(f"CELL_TYPES {M}")
    lines += [str(_CELL_TYPE[d])] * M
    lines.append(f"POINT_DATA {n}")
    for name, f in fields.items():
        vals = f.nodal_values()[:n]
        if vals.shape[1] == 1:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += ["%.17g" % v for v in vals[:, 0]]
        else:
            pad = np.zeros((n, 3))
            pad[:, : vals.shape[1]] = vals
            lines.append(f"VECTORS {name} double")
            lines += [" ".join("%.17g" % v for v in row) for row in pad]
    path.write_text("\n".join(lines) + "\n")
    return path
