"""Legacy ASCII VTK writer for tetrahedral meshes with point and cell data."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from hygrohom.mesh import Mesh

__all__ = ["write_vtk"]

_VTK_TETRA = 10


def _fmt(a: np.ndarray) -> str:
    return "\n".join(" ".join(f"{v:.9g}" for v in row) for row in np.atleast_2d(a))


def _attribute(name: str, data: np.ndarray, n: int) -> str:
    data = np.asarray(data, dtype=float)
    key = name.replace(" ", "_")
    if data.shape == (n,):
        return f"SCALARS {key} double 1\nLOOKUP_TABLE default\n" + "\n".join(f"{v:.9g}" for v in data)
    if data.shape == (n, 3):
        return f"VECTORS {key} double\n" + _fmt(data)
    if data.ndim == 2 and data.shape[0] == n:
        return f"FIELD {key}_field 1\n{key} {data.shape[1]} {n} double\n" + _fmt(data)
    raise ValueError(f"data {name!r} has shape {data.shape}; expected ({n},), ({n}, 3) or ({n}, k)")


def write_vtk(
    path: str | Path,
    mesh: Mesh,
    point_data: Mapping[str, np.ndarray] | None = None,
    cell_data: Mapping[str, np.ndarray] | None = None,
    title: str = "hygrohom output",
) -> Path:
    """Write an unstructured grid; phases are always added as cell data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, m = mesh.n_nodes, mesh.n_elements
    parts = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
        _fmt(mesh.nodes),
        f"CELLS {m} {5 * m}",
        "\n".join(f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.tets.tolist()),
        f"CELL_TYPES {m}",
        "\n".join([str(_VTK_TETRA)] * m),
    ]
    cells = {"phase": mesh.phases.astype(float)}
    cells.update(cell_data or {})
    parts.append(f"CELL_DATA {m}")
    parts.extend(_attribute(k, v, m) for k, v in cells.items())
    if point_data:
        parts.append(f"POINT_DATA {n}")
        parts.extend(_attribute(k, v, n) for k, v in point_data.items())
    path.write_text("\n".join(parts) + "\n")
    return path
