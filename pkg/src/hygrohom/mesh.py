"""Tetrahedral meshes with material phases and named boundary face sets.

Meshes are read from and written to a subset of the Gmsh ASCII 2.2 format:

* ``$MeshFormat`` must declare version 2.2, ASCII (file-type 0).
* ``$PhysicalNames`` (optional) names 3D phases and 2D face sets.
* ``$Nodes`` holds ``id x y z`` records; ids may be arbitrary positive ints.
* ``$Elements`` holds 4-node tetrahedra (type 4) whose first tag is the phase
  and 3-node triangles (type 2) whose first tag names a boundary face set.
  Other element types (points, lines) are skipped.

The structured generators split every hexahedral cell into six tetrahedra
along its main diagonal (Kuhn split).  Because every cell uses the same
diagonal, the triangulations of opposite box faces are translates of each
other, which is what the periodic boundary conditions rely on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Mesh",
    "MeshParseError",
    "MeshValidationError",
    "PairingError",
    "PeriodicPairing",
    "parse_mesh",
    "write_mesh",
    "generate_box_mesh",
    "generate_laminate_rve",
    "generate_cylinder_rve",
    "generate_l_prism",
    "detect_periodic_pairs",
    "TET_FACES",
    "TET_EDGES",
]

# face i is opposite local vertex i
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])

GMSH_TRIANGLE = 2
GMSH_TET = 4
# number of nodes for element types we skip over
_GMSH_NODE_COUNT = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 6: 6, 7: 5, 8: 3, 9: 6, 11: 10, 15: 1}


class MeshParseError(ValueError):
    """Raised for a malformed mesh file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshValidationError(ValueError):
    """Raised when a mesh violates a structural invariant."""


class PairingError(ValueError):
    """Raised when boundary nodes of a box mesh cannot be paired periodically."""

    def __init__(self, message: str, unmatched: Sequence[int]):
        self.unmatched = list(unmatched)
        super().__init__(message)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _face_keys(tri: np.ndarray, n_nodes: int) -> np.ndarray:
    s = np.sort(tri, axis=1).astype(np.int64)
    return (s[:, 0] * n_nodes + s[:, 1]) * n_nodes + s[:, 2]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh.

    Parameters
    ----------
    nodes : (n, 3) float array
        Node coordinates in mm.
    tets : (m, 4) int array
        0-based connectivity with positive orientation.
    phases : (m,) int array
        Positive phase tag per tetrahedron.
    phase_names : dict
        Optional tag -> name map (e.g. ``{1: "matrix", 2: "yarn1"}``).
    face_sets : dict
        Face-set name -> (k, 3) array of boundary triangles.
    """

    nodes: np.ndarray
    tets: np.ndarray
    phases: np.ndarray
    phase_names: Mapping[int, str] = field(default_factory=dict)
    face_sets: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        nodes = _readonly(np.array(self.nodes, dtype=float).reshape(-1, 3))
        tets = _readonly(np.array(self.tets, dtype=np.int64).reshape(-1, 4))
        phases = _readonly(np.array(self.phases, dtype=np.int64).reshape(-1))
        sets = {
            str(k): _readonly(np.array(v, dtype=np.int64).reshape(-1, 3))
            for k, v in self.face_sets.items()
        }
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "tets", tets)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "phase_names", {int(k): str(v) for k, v in self.phase_names.items()})
        object.__setattr__(self, "face_sets", sets)
        self._validate()

    def _validate(self):
        n = len(self.nodes)
        if len(self.tets) == 0:
            raise MeshValidationError("mesh has no tetrahedra")
        if len(self.phases) != len(self.tets):
            raise MeshValidationError(
                f"{len(self.phases)} phase tags for {len(self.tets)} tetrahedra"
            )
        if not np.all(np.isfinite(self.nodes)):
            raise MeshValidationError("non-finite node coordinates")
        bad = np.nonzero((self.tets < 0).any(axis=1) | (self.tets >= n).any(axis=1))[0]
        if len(bad):
            e = int(bad[0])
            raise MeshValidationError(
                f"element {e} references node(s) {self.tets[e].tolist()} outside 0..{n - 1}"
            )
        s = np.sort(self.tets, axis=1)
        bad = np.nonzero((np.diff(s, axis=1) == 0).any(axis=1))[0]
        if len(bad):
            e = int(bad[0])
            raise MeshValidationError(f"element {e} has repeated nodes {self.tets[e].tolist()}")
        bad = np.nonzero(self.phases <= 0)[0]
        if len(bad):
            raise MeshValidationError(f"element {int(bad[0])} has no phase tag")
        vol = self.signed_volumes
        scale = np.max(np.ptp(self.nodes, axis=0)) ** 3
        bad = np.nonzero(vol <= 1e-14 * scale)[0]
        if len(bad):
            e = int(bad[0])
            raise MeshValidationError(f"element {e} has nonpositive volume {vol[e]:.3e}")
        if self.face_sets:
            faces = self.tets[:, TET_FACES].reshape(-1, 3)
            keys, counts = np.unique(_face_keys(faces, n), return_counts=True)
            for name, tris in self.face_sets.items():
                if len(tris) == 0:
                    continue
                if (tris < 0).any() or (tris >= n).any():
                    raise MeshValidationError(f"face set {name!r} references nodes outside the mesh")
                tk = _face_keys(tris, n)
                pos = np.searchsorted(keys, tk)
                pos = np.minimum(pos, len(keys) - 1)
                ok = (keys[pos] == tk) & (counts[pos] == 1)
                if not ok.all():
                    i = int(np.nonzero(~ok)[0][0])
                    raise MeshValidationError(
                        f"triangle {tris[i].tolist()} of face set {name!r} is not a boundary face of exactly one element"
                    )

    # -- geometry ---------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.tets)

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        x = self.nodes[self.tets]
        d = x[:, 1:] - x[:, :1]
        return _readonly(np.linalg.det(d) / 6.0)

    @property
    def volume(self) -> float:
        return float(self.signed_volumes.sum())

    @cached_property
    def bounding_box(self) -> np.ndarray:
        """(2, 3) array of min and max corners."""
        return _readonly(np.vstack([self.nodes.min(axis=0), self.nodes.max(axis=0)]))

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    # -- topology ---------------------------------------------------------

    @cached_property
    def boundary(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward-oriented boundary triangles and their owning element."""
        faces = self.tets[:, TET_FACES].reshape(-1, 3)
        keys = _face_keys(faces, self.n_nodes)
        _, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        on_bnd = counts[inv] == 1
        owner = np.repeat(np.arange(self.n_elements), 4)[on_bnd]
        return _readonly(faces[on_bnd].copy()), _readonly(owner)

    @property
    def boundary_faces(self) -> np.ndarray:
        return self.boundary[0]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return _readonly(np.unique(self.boundary_faces))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges (sorted node pairs), lexicographically ordered."""
        e = np.sort(self.tets[:, TET_EDGES].reshape(-1, 2), axis=1)
        return _readonly(np.unique(e, axis=0))

    @cached_property
    def element_edges(self) -> np.ndarray:
        """(m, 6) global edge ids in local TET_EDGES order."""
        e = np.sort(self.tets[:, TET_EDGES].reshape(-1, 2), axis=1)
        return _readonly(self.edge_ids(e).reshape(-1, 6))

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        """Global ids of edges given as (k, 2) node pairs; -1 where absent."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        n = self.n_nodes
        ek = self.edges[:, 0] * n + self.edges[:, 1]
        qk = pairs[:, 0] * n + pairs[:, 1]
        pos = np.minimum(np.searchsorted(ek, qk), len(ek) - 1)
        return np.where(ek[pos] == qk, pos, -1)

    # -- phases and face sets --------------------------------------------

    def phase_tag(self, phase: int | str) -> int:
        if isinstance(phase, (int, np.integer)):
            return int(phase)
        for tag, name in self.phase_names.items():
            if name == phase:
                return tag
        try:
            return int(phase)
        except ValueError:
            raise KeyError(f"unknown phase {phase!r}; known: {sorted(self.phase_names.values())}") from None

    def phase_label(self, tag: int) -> str:
        return self.phase_names.get(int(tag), str(int(tag)))

    @property
    def phase_tags(self) -> list[int]:
        return sorted(int(t) for t in np.unique(self.phases))

    def face_set(self, name: str) -> np.ndarray:
        try:
            return self.face_sets[name]
        except KeyError:
            raise KeyError(f"unknown face set {name!r}; known: {sorted(self.face_sets)}") from None

    def submesh(self, element_mask: np.ndarray) -> tuple["Mesh", np.ndarray, np.ndarray]:
        """Mesh of the selected elements plus (node map, element ids).

        ``node_map[i]`` is the parent node of sub-mesh node ``i``.  Face sets are
        restricted to triangles that are boundary faces of the sub-mesh.
        """
        elems = np.nonzero(element_mask)[0]
        used = np.unique(self.tets[elems])
        renum = -np.ones(self.n_nodes, dtype=np.int64)
        renum[used] = np.arange(len(used))
        tets = renum[self.tets[elems]]
        sub_faces = self.tets[elems][:, TET_FACES].reshape(-1, 3)
        keys, counts = np.unique(_face_keys(sub_faces, self.n_nodes), return_counts=True)
        bkeys = keys[counts == 1]
        sets = {}
        for name, tris in self.face_sets.items():
            keep = np.isin(_face_keys(tris, self.n_nodes), bkeys) if len(tris) else np.zeros(0, bool)
            if keep.any():
                sets[name] = renum[tris[keep]]
        sub = Mesh(self.nodes[used], tets, self.phases[elems], self.phase_names, sets)
        return sub, used, elems

    def transformed(self, rotation: np.ndarray, shift=(0.0, 0.0, 0.0)) -> "Mesh":
        """Rigidly moved copy (proper rotation keeps orientation)."""
        x = self.nodes @ np.asarray(rotation, float).T + np.asarray(shift, float)
        return Mesh(x, self.tets, self.phases, self.phase_names, self.face_sets)


# ---------------------------------------------------------------------------
# Gmsh 2.2 reading / writing
# ---------------------------------------------------------------------------


def parse_mesh(path: str | Path) -> Mesh:
    """Read a Gmsh ASCII 2.2 mesh (subset described in the module docstring)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    names: dict[tuple[int, int], str] = {}
    node_ids: list[int] = []
    coords: list[tuple[float, float, float]] = []
    tets: list[list[int]] = []
    phases: list[int] = []
    tris: dict[int, list[list[int]]] = {}
    tet_lines: list[int] = []
    saw_format = saw_nodes = saw_elements = False

    i = 0

    def count_line(section: str) -> int:
        nonlocal i
        i += 1
        if i >= len(lines):
            raise MeshParseError(f"unexpected end of file in {section}", i)
        try:
            return int(lines[i].split()[0])
        except (ValueError, IndexError):
            raise MeshParseError(f"expected entry count in {section}", i + 1) from None

    def expect_end(tag: str):
        nonlocal i
        i += 1
        if i >= len(lines) or lines[i].strip() != tag:
            raise MeshParseError(f"expected {tag}", min(i, len(lines)) + 1 if i < len(lines) else i)

    while i < len(lines):
        head = lines[i].strip()
        if not head:
            i += 1
            continue
        if head == "$MeshFormat":
            i += 1
            parts = lines[i].split() if i < len(lines) else []
            if len(parts) < 2 or not parts[0].startswith("2.2"):
                raise MeshParseError("only Gmsh format 2.2 is supported", i + 1)
            if parts[1] != "0":
                raise MeshParseError("binary Gmsh files are not supported", i + 1)
            expect_end("$EndMeshFormat")
            saw_format = True
        elif head == "$PhysicalNames":
            n = count_line("$PhysicalNames")
            for _ in range(n):
                i += 1
                parts = lines[i].split(maxsplit=2) if i < len(lines) else []
                if len(parts) < 3:
                    raise MeshParseError("malformed physical name", i + 1)
                try:
                    names[(int(parts[0]), int(parts[1]))] = parts[2].strip().strip('"')
                except ValueError:
                    raise MeshParseError("malformed physical name", i + 1) from None
            expect_end("$EndPhysicalNames")
        elif head == "$Nodes":
            n = count_line("$Nodes")
            for _ in range(n):
                i += 1
                parts = lines[i].split() if i < len(lines) else []
                if len(parts) != 4:
                    raise MeshParseError("node record needs 'id x y z'", i + 1)
                try:
                    node_ids.append(int(parts[0]))
                    coords.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise MeshParseError("malformed node record", i + 1) from None
            expect_end("$EndNodes")
            saw_nodes = True
        elif head == "$Elements":
            n = count_line("$Elements")
            for _ in range(n):
                i += 1
                try:
                    parts = [int(p) for p in lines[i].split()] if i < len(lines) else []
                except ValueError:
                    raise MeshParseError("malformed element record", i + 1) from None
                if len(parts) < 3:
                    raise MeshParseError("element record too short", i + 1)
                etype, ntags = parts[1], parts[2]
                conn = parts[3 + ntags:]
                want = _GMSH_NODE_COUNT.get(etype)
                if want is None:
                    raise MeshParseError(f"unsupported element type {etype}", i + 1)
                if len(conn) != want:
                    raise MeshParseError(
                        f"element type {etype} needs {want} nodes, got {len(conn)}", i + 1
                    )
                tag = parts[3] if ntags >= 1 else 0
                if etype == GMSH_TET:
                    tets.append(conn)
                    phases.append(tag)
                    tet_lines.append(i + 1)
                elif etype == GMSH_TRIANGLE:
                    tris.setdefault(tag, []).append(conn)
            expect_end("$EndElements")
            saw_elements = True
        elif head.startswith("$"):
            # skip unknown sections
            end = "$End" + head[1:]
            while i < len(lines) and lines[i].strip() != end:
                i += 1
        else:
            raise MeshParseError(f"unexpected content {head[:30]!r}", i + 1)
        i += 1

    if not (saw_format and saw_nodes and saw_elements):
        raise MeshParseError("missing $MeshFormat, $Nodes or $Elements section")

    ids = np.asarray(node_ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise MeshParseError("duplicate node ids")
    lookup = dict(zip(node_ids, range(len(node_ids))))
    n = len(node_ids)

    def renumber(conn: list[int], line: int, what: str) -> list[int]:
        try:
            return [lookup[c] for c in conn]
        except KeyError as exc:
            raise MeshValidationError(
                f"{what} on line {line} references node {exc.args[0]}, "
                f"which is not among the {n} nodes"
            ) from None

    t = np.array(
        [renumber(c, ln, "element") for c, ln in zip(tets, tet_lines)], dtype=np.int64
    ).reshape(-1, 4)
    phase_names = {tag: nm for (dim, tag), nm in names.items() if dim == 3}
    face_sets = {}
    for tag, conn in tris.items():
        nm = names.get((2, tag), str(tag))
        face_sets[nm] = np.array([renumber(c, 0, "triangle") for c in conn], dtype=np.int64)
    mesh = Mesh(np.array(coords, dtype=float), t, np.array(phases), phase_names, face_sets)
    return mesh


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write ``mesh`` in the Gmsh 2.2 subset read by :func:`parse_mesh`."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    phase_tags = mesh.phase_tags
    set_names = list(mesh.face_sets)
    first = max(phase_tags) + 1
    set_tag = {name: first + k for k, name in enumerate(set_names)}
    named = [(3, t, mesh.phase_label(t)) for t in phase_tags]
    named += [(2, set_tag[s], s) for s in set_names]
    out += ["$PhysicalNames", str(len(named))]
    out += [f'{d} {t} "{nm}"' for d, t, nm in named]
    out.append("$EndPhysicalNames")
    out += ["$Nodes", str(mesh.n_nodes)]
    out += [
        f"{k + 1} {x!r} {y!r} {z!r}"
        for k, (x, y, z) in enumerate(mesh.nodes.tolist())
    ]
    out.append("$EndNodes")
    n_tri = sum(len(v) for v in mesh.face_sets.values())
    out += ["$Elements", str(mesh.n_elements + n_tri)]
    eid = 1
    for conn, tag in zip((mesh.tets + 1).tolist(), mesh.phases.tolist()):
        out.append(f"{eid} {GMSH_TET} 2 {tag} {tag} " + " ".join(map(str, conn)))
        eid += 1
    for name in set_names:
        tag = set_tag[name]
        for conn in (mesh.face_sets[name] + 1).tolist():
            out.append(f"{eid} {GMSH_TRIANGLE} 2 {tag} {tag} " + " ".join(map(str, conn)))
            eid += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# structured generators
# ---------------------------------------------------------------------------


def _kuhn_cells(nx: int, ny: int, nz: int):
    """Six tets per cell; returns (tets, cell index per tet) with grid node ids."""
    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(order="F"), J.ravel(order="F"), K.ravel(order="F")
    cells = np.arange(nx * ny * nz)
    unit = np.eye(3, dtype=np.int64)
    tets = []
    for perm in itertools.permutations(range(3)):
        a = np.zeros(3, dtype=np.int64)
        b = a + unit[perm[0]]
        c = b + unit[perm[1]]
        d = np.ones(3, dtype=np.int64)
        verts = [nid(I + v[0], J + v[1], K + v[2]) for v in (a, b, c, d)]
        tets.append(np.stack(verts, axis=1))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    cell_of = np.repeat(cells, 6)
    centres = np.stack([I + 0.5, J + 0.5, K + 0.5], axis=1)
    return tets, cell_of, centres


def _box_face_sets(nodes: np.ndarray, tets: np.ndarray, lo, hi) -> dict[str, np.ndarray]:
    faces = tets[:, TET_FACES].reshape(-1, 3)
    keys = _face_keys(faces, len(nodes))
    _, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    bf = faces[counts[inv] == 1]
    tol = 1e-9 * np.linalg.norm(np.asarray(hi) - np.asarray(lo))
    sets = {}
    for ax, label in enumerate("xyz"):
        for side, val in (("min", lo[ax]), ("max", hi[ax])):
            on = np.all(np.abs(nodes[bf][:, :, ax] - val) <= tol, axis=1)
            sets[f"{label}{side}"] = bf[on]
    return sets


def generate_box_mesh(
    divisions: Sequence[int],
    lengths: Sequence[float] = (1.0, 1.0, 1.0),
    origin: Sequence[float] = (0.0, 0.0, 0.0),
    cell_phase: Callable[[np.ndarray], np.ndarray] | None = None,
    keep: Callable[[np.ndarray], np.ndarray] | None = None,
    phase_names: Mapping[int, str] | None = None,
) -> Mesh:
    """Structured tetrahedral mesh of a box.

    ``cell_phase`` and ``keep`` receive the (ncells, 3) array of cell centres
    in physical coordinates and return a phase tag / keep flag per cell, so
    whole hexahedral cells share a phase.  Face sets ``xmin`` ... ``zmax``
    collect boundary triangles lying on the bounding planes of the box.
    """
    nx, ny, nz = (int(d) for d in divisions)
    if min(nx, ny, nz) < 1:
        raise ValueError(f"divisions must be >= 1 per axis, got {tuple(divisions)}")
    lengths = np.asarray(lengths, dtype=float)
    origin = np.asarray(origin, dtype=float)
    if np.any(lengths <= 0):
        raise ValueError("box lengths must be positive")
    h = lengths / np.array([nx, ny, nz])
    gi, gj, gk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    grid = np.stack([gi.ravel(order="F"), gj.ravel(order="F"), gk.ravel(order="F")], axis=1)
    nodes = origin + grid * h
    # exact end coordinates so opposite faces match bit-for-bit
    for ax, n_ax in enumerate((nx, ny, nz)):
        nodes[grid[:, ax] == n_ax, ax] = origin[ax] + lengths[ax]
    tets, cell_of, centres = _kuhn_cells(nx, ny, nz)
    centres = origin + centres * h
    phase = np.ones(len(centres), dtype=np.int64)
    if cell_phase is not None:
        phase = np.asarray(cell_phase(centres), dtype=np.int64)
    mask = np.ones(len(centres), dtype=bool)
    if keep is not None:
        mask = np.asarray(keep(centres), dtype=bool)
    tet_keep = mask[cell_of]
    tets = tets[tet_keep]
    phases = phase[cell_of][tet_keep]
    # orient positively
    x = nodes[tets]
    neg = np.linalg.det(x[:, 1:] - x[:, :1]) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    used = np.unique(tets)
    renum = -np.ones(len(nodes), dtype=np.int64)
    renum[used] = np.arange(len(used))
    nodes = nodes[used]
    tets = renum[tets]
    lo, hi = origin, origin + lengths
    sets = _box_face_sets(nodes, tets, lo, hi)
    if phase_names is None:
        phase_names = {1: "matrix"}
    return Mesh(nodes, tets, phases, phase_names, sets)


def generate_laminate_rve(
    n_layers_per_phase: int,
    divisions: Sequence[int],
    n_phases: int = 2,
    lengths: Sequence[float] = (1.0, 1.0, 1.0),
) -> Mesh:
    """Box RVE with alternating phase layers normal to axis 3.

    With ``n_phases=2`` the layer sequence is matrix, yarn1, matrix, ... with
    ``n_layers_per_phase`` layers of each phase (tags 1 and 2).  Layer
    interfaces coincide with mesh planes when ``divisions[2]`` is a multiple
    of ``2 * n_layers_per_phase``.
    """
    if n_layers_per_phase < 1 or n_phases not in (1, 2):
        raise ValueError("need n_layers_per_phase >= 1 and n_phases in {1, 2}")
    lz = float(lengths[2])
    n_layers = n_phases * n_layers_per_phase

    def phase(centres):
        if n_phases == 1:
            return np.ones(len(centres), dtype=np.int64)
        layer = np.floor(centres[:, 2] / lz * n_layers).astype(np.int64)
        return 1 + (layer % 2)

    names = {1: "matrix"} if n_phases == 1 else {1: "matrix", 2: "yarn1"}
    return generate_box_mesh(divisions, lengths, cell_phase=phase, phase_names=names)


def generate_cylinder_rve(
    divisions: Sequence[int],
    radius: float,
    axis: int = 2,
    lengths: Sequence[float] = (1.0, 1.0, 1.0),
) -> Mesh:
    """Box RVE with a (cell-resolved) straight cylindrical yarn along ``axis``.

    Cells whose centre lies within ``radius`` of the box's central axis line
    become phase 2 (``yarn1``).  Face sets ``yarn1_inlet`` / ``yarn1_outlet``
    hold the yarn's end caps on the min / max faces along ``axis``.
    """
    lengths = np.asarray(lengths, dtype=float)
    centre = lengths / 2.0
    others = [a for a in range(3) if a != axis]

    def phase(c):
        r = np.linalg.norm(c[:, others] - centre[others], axis=1)
        return np.where(r < radius, 2, 1)

    mesh = generate_box_mesh(divisions, lengths, cell_phase=phase, phase_names={1: "matrix", 2: "yarn1"})
    if not np.any(mesh.phases == 2):
        raise ValueError("radius too small: no cell centre falls inside the yarn")
    faces, owner = mesh.boundary
    label = "xyz"[axis]
    sets = dict(mesh.face_sets)
    for end, side in (("inlet", "min"), ("outlet", "max")):
        cand = mesh.face_sets[f"{label}{side}"]
        own = _owner_of(mesh, cand)
        sets[f"yarn1_{end}"] = cand[mesh.phases[own] == 2]
    return Mesh(mesh.nodes, mesh.tets, mesh.phases, mesh.phase_names, sets)


def _owner_of(mesh: Mesh, tris: np.ndarray) -> np.ndarray:
    faces, owner = mesh.boundary
    fk = _face_keys(faces, mesh.n_nodes)
    order = np.argsort(fk)
    pos = np.searchsorted(fk[order], _face_keys(tris, mesh.n_nodes))
    return owner[order[pos]]


def generate_l_prism(n_per_leg: int = 4, leg: float = 1.0, thickness: float = 1.0, n_thick: int = 2) -> Mesh:
    """L-shaped single-phase prism for bent-yarn checks.

    The L occupies blocks (0,0), (1,0), (1,1) of a 2x2 grid of ``leg``-sized
    squares in the x-y plane.  ``inlet`` is the x = 0 end of the first leg and
    ``outlet`` the y = 2*leg end of the second, so the path runs +x then +y.
    """
    n = int(n_per_leg)

    def keep(c):
        return ~((c[:, 0] < leg) & (c[:, 1] > leg))

    mesh = generate_box_mesh(
        (2 * n, 2 * n, n_thick), (2 * leg, 2 * leg, thickness), keep=keep, phase_names={1: "yarn1"}
    )
    sets = dict(mesh.face_sets)
    sets["inlet"] = mesh.face_sets["xmin"]
    sets["outlet"] = mesh.face_sets["ymax"]
    return Mesh(mesh.nodes, mesh.tets, mesh.phases, mesh.phase_names, sets)


# ---------------------------------------------------------------------------
# periodic pairing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicPairing:
    """Node pairs across opposite faces of an axis-aligned box RVE.

    ``pairs`` rows are ``(plus_node, minus_node, axis)``.
    """

    pairs: np.ndarray
    tolerance: float
    period: np.ndarray

    def axis_pairs(self, axis: int) -> np.ndarray:
        sel = self.pairs[:, 2] == axis
        return self.pairs[sel, :2]

    def map(self, axis: int) -> dict[int, int]:
        """Involutive node map for one axis (plus <-> minus)."""
        p = self.axis_pairs(axis)
        out = dict(zip(p[:, 0].tolist(), p[:, 1].tolist()))
        out.update(zip(p[:, 1].tolist(), p[:, 0].tolist()))
        return out


def detect_periodic_pairs(mesh: Mesh, tolerance: float | None = None) -> PeriodicPairing:
    """Pair every boundary node on ``y_i = min`` with one on ``y_i = max``.

    The default tolerance is 1e-8 times the bounding-box diagonal.  Any node
    on a min/max face without a unique partner raises :class:`PairingError`
    listing all offenders.
    """
    lo, hi = mesh.bounding_box
    if tolerance is None:
        tolerance = 1e-8 * mesh.diagonal
    x = mesh.nodes
    bnodes = mesh.boundary_nodes
    pairs = []
    unmatched: list[int] = []
    for ax in range(3):
        others = [a for a in range(3) if a != ax]
        minus = bnodes[np.abs(x[bnodes, ax] - lo[ax]) <= tolerance]
        plus = bnodes[np.abs(x[bnodes, ax] - hi[ax]) <= tolerance]
        if len(plus) == 0 or len(minus) == 0:
            unmatched.extend(minus.tolist() + plus.tolist())
            continue
        tree = cKDTree(x[plus][:, others])
        dist, idx = tree.query(x[minus][:, others], distance_upper_bound=tolerance)
        hit = np.isfinite(dist)
        matched_plus = plus[idx[hit]]
        # one-to-one check
        uniq, cnt = np.unique(matched_plus, return_counts=True)
        dup = set(uniq[cnt > 1].tolist())
        ok = hit.copy()
        if dup:
            ok[hit] = ~np.isin(matched_plus, list(dup))
            unmatched.extend(sorted(dup))
        unmatched.extend(minus[~ok].tolist())
        got = set(plus[idx[ok]].tolist())
        unmatched.extend(sorted(set(plus.tolist()) - got - dup))
        axis_pairs = np.stack([plus[idx[ok]], minus[ok], np.full(ok.sum(), ax)], axis=1)
        pairs.append(axis_pairs)
    if unmatched:
        offenders = sorted(set(unmatched))
        shown = ", ".join(map(str, offenders[:20]))
        more = "" if len(offenders) <= 20 else f" (+{len(offenders) - 20} more)"
        raise PairingError(
            f"{len(offenders)} boundary node(s) without a periodic partner: {shown}{more}",
            offenders,
        )
    return PeriodicPairing(np.vstack(pairs).astype(np.int64), float(tolerance), hi - lo)
