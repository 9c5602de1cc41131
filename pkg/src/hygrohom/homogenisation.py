"""First-order computational homogenisation of box RVEs.

The RVE problem is posed in total displacement (or total scalar field) with
constraints ``C u = D e`` that encode the boundary-condition family, where
``e`` is the macro strain (6, engineering Voigt) or macro gradient (3):

* Dirichlet: every boundary dof follows the linear field ``X(y) e``.
* Periodic: ``u(y+) - u(y-) = (X(y+) - X(y-)) e`` for paired boundary dofs,
  plus the mean translation fixed.  Redundant pair rows (corner loops) are
  removed with a union-find pass over the pairing graph.
* Neumann: one row per unit macro stress (flux) ``s_j`` weighting the
  boundary displacement by the uniform traction ``s_j n``.  These rows
  enforce the average strain; six rigid-mode rows (one for scalars) remove
  the null space.

The reactions ``lam`` then give the homogenised response ``D^T lam / V``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from hygrohom.errors import MaterialError
from hygrohom.fe.assembly import (
    VOIGT_PAIRS,
    assemble_conductivity,
    assemble_elasticity,
    material_field,
    strain_operator,
)
from hygrohom.fe.saddle import SaddleSystem
from hygrohom.fe.space import FunctionSpace, function_space
from hygrohom.materials import (
    IsotropicElastic,
    TransverselyIsotropic,
    isotropic_stiffness,
    oriented_stiffness,
    rotate_stiffness,
    transverse_isotropic_stiffness,
)
from hygrohom.mesh import Mesh, PairingError, PeriodicPairing, detect_periodic_pairs

__all__ = [
    "BcKind",
    "OrientedMaterial",
    "HomogenisedTensor",
    "RveSolution",
    "RveSolver",
    "build_X_mechanical",
    "build_X_scalar",
    "build_constraints",
    "homogenise_stress",
    "homogenise_flux",
    "homogenise_stiffness",
    "homogenise_conductivity",
    "diffusivity_from_conductivity",
    "stiffness_field",
]

log = logging.getLogger(__name__)


class BcKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value) -> "BcKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}; use dirichlet, periodic or neumann") from None


MECHANICAL = "mechanical"
SCALAR = "scalar"

# column index of (i, j) shear pairs for each supported ordering
_SHEAR_ORDER = {
    "12-23-31": {(0, 1): 3, (1, 2): 4, (0, 2): 5},
    "12-13-23": {(0, 1): 3, (0, 2): 4, (1, 2): 5},
}


def build_X_mechanical(y, ordering: str = "12-23-31") -> np.ndarray:
    """3x6 matrix with ``X(y) @ e`` the linear displacement ``eps . y``.

    ``ordering`` names the order of the engineering shear components in the
    strain vector; the default matches the package-wide Voigt convention.
    """
    y = np.asarray(y, dtype=float)
    return _x_mech(y.reshape(1, 3), ordering)[0]


def _x_mech(Y: np.ndarray, ordering: str = "12-23-31") -> np.ndarray:
    cols = _SHEAR_ORDER[ordering]
    X = np.zeros(Y.shape[:-1] + (3, 6))
    for i in range(3):
        X[..., i, i] = Y[..., i]
    for (i, j), c in cols.items():
        X[..., i, c] = 0.5 * Y[..., j]
        X[..., j, c] = 0.5 * Y[..., i]
    return X


def build_X_scalar(y) -> np.ndarray:
    """Diagonal placement of the coordinates; its row sum dotted with the
    macro gradient is the linear field ``y . grad``."""
    return np.diag(np.asarray(y, dtype=float).reshape(3))


def _x_scalar(Y: np.ndarray) -> np.ndarray:
    # row form of the scalar linear field: (..., 1, 3)
    return Y[..., None, :]


def _x_batch(Y: np.ndarray, problem: str) -> np.ndarray:
    return _x_mech(Y) if problem == MECHANICAL else _x_scalar(Y)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _boundary_edges(mesh: Mesh) -> np.ndarray:
    f = mesh.boundary_faces
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    return mesh.edge_ids(np.unique(e, axis=0))


def _outward_normals(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    faces, owner = mesh.boundary
    x = mesh.nodes[faces]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    inward = mesh.nodes[mesh.tets[owner]].mean(axis=1) - x.mean(axis=1)
    flip = np.einsum("ki,ki->k", n, inward) > 0
    n[flip] *= -1.0
    return faces, n


def _independent_rows(C: sp.csr_matrix) -> np.ndarray:
    """Indices of a maximal linearly independent subset of (few, dense) rows."""
    dense = C.toarray()
    if len(dense) == 0:
        return np.arange(0)
    _, R, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > 1e-12 * d.max()))
    return np.sort(piv[:rank])


class _Rows:
    """Accumulates constraint rows as COO triplets with their D rows."""

    def __init__(self, n: int, k: int):
        self.n, self.k = n, k
        self.rows, self.cols, self.vals = [], [], []
        self.D: list[np.ndarray] = []
        self.groups: dict[str, int] = {}
        self.m = 0

    def add(self, cols: np.ndarray, vals: np.ndarray, D: np.ndarray, group: str):
        """cols/vals (r, w) entries for r new rows; D (r, k)."""
        cols = np.atleast_2d(cols)
        vals = np.atleast_2d(vals)
        r = cols.shape[0]
        if r == 0:
            return
        self.rows.append(np.repeat(np.arange(self.m, self.m + r), cols.shape[1]))
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())
        self.D.append(np.asarray(D, dtype=float).reshape(r, self.k))
        self.groups[group] = self.groups.get(group, 0) + r
        self.m += r

    def build(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self.m == 0:
            return sp.csr_matrix((0, self.n)), np.zeros((0, self.k))
        C = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.m, self.n),
        ).tocsr()
        C.sum_duplicates()
        C.eliminate_zeros()
        return C, np.vstack(self.D)


def _vertex_rigid_rows(out: _Rows, mesh: Mesh, problem: str, rotations: bool):
    x = mesh.nodes
    nn = mesh.n_nodes
    X = _x_batch(x, problem)  # (nn, ncomp, k)
    if problem == SCALAR:
        out.add(np.arange(nn)[None, :], np.ones((1, nn)), X[:, 0, :].sum(axis=0), "rigid")
        return
    for c in range(3):
        out.add((3 * np.arange(nn) + c)[None, :], np.ones((1, nn)), X[:, c, :].sum(axis=0), "rigid")
    if rotations:
        y = x - x.mean(axis=0)
        for a in range(3):
            r = np.cross(np.eye(3)[a], y)  # (nn, 3) rigid rotation mode
            cols = (3 * np.arange(nn)[:, None] + np.arange(3)).ravel()
            out.add(cols[None, :], r.ravel()[None, :], np.einsum("ac,ack->k", r, X), "rigid")


def build_constraints(
    mesh: Mesh,
    bc,
    problem: str = MECHANICAL,
    pairing: PeriodicPairing | None = None,
    order: int = 1,
    return_groups: bool = False,
):
    """Constraint operator ``C`` (m x n) and right-hand-side builder ``D`` (m x k).

    ``problem`` is ``"mechanical"`` (3 dofs per function, k = 6) or
    ``"scalar"`` (1 dof, k = 3).  With ``return_groups`` a dict of row counts
    per constraint group is returned as a third item.
    """
    bc = BcKind.parse(bc)
    if problem not in (MECHANICAL, SCALAR):
        raise ValueError(f"problem must be 'mechanical' or 'scalar', got {problem!r}")
    V = function_space(mesh, order)
    ncomp = 3 if problem == MECHANICAL else 1
    k = 6 if problem == MECHANICAL else 3
    out = _Rows(ncomp * V.n_dofs, k)
    nn = mesh.n_nodes
    x = mesh.nodes
    comps = np.arange(ncomp)
    if len(mesh.boundary_faces) == 0:
        raise ValueError("mesh has an empty boundary")

    if bc is BcKind.DIRICHLET:
        bn = mesh.boundary_nodes
        X = _x_batch(x[bn], problem)  # (b, ncomp, k)
        cols = (ncomp * bn[:, None] + comps).ravel()
        out.add(cols[:, None], np.ones((len(cols), 1)), X.reshape(-1, k), "boundary")
        if order == 2:
            be = nn + _boundary_edges(mesh)
            cols = (ncomp * be[:, None] + comps).ravel()
            out.add(cols[:, None], np.ones((len(cols), 1)), np.zeros((len(cols), k)), "boundary")

    elif bc is BcKind.PERIODIC:
        if pairing is None:
            pairing = detect_periodic_pairs(mesh)
        uf = _UnionFind(nn)
        kept = []
        for ax in range(3):
            for p, q in pairing.axis_pairs(ax).tolist():
                if uf.union(p, q):
                    kept.append((p, q))
        kept = np.array(kept, dtype=np.int64).reshape(-1, 2)
        Xd = _x_batch(x[kept[:, 0]], problem) - _x_batch(x[kept[:, 1]], problem)
        plus = (ncomp * kept[:, 0:1] + comps).ravel()
        minus = (ncomp * kept[:, 1:2] + comps).ravel()
        out.add(
            np.stack([plus, minus], axis=1),
            np.tile([1.0, -1.0], (len(plus), 1)),
            Xd.reshape(-1, k),
            "periodic",
        )
        if order == 2:
            edges = mesh.edges
            be = _boundary_edges(mesh)
            uf_e = _UnionFind(len(edges))
            kept_e = []
            for ax in range(3):
                to_plus = dict(pairing.axis_pairs(ax)[:, ::-1].tolist())
                for e in be.tolist():
                    a, b = edges[e]
                    if a in to_plus and b in to_plus:
                        partner = mesh.edge_ids(np.array([[to_plus[a], to_plus[b]]]))[0]
                        if partner < 0:
                            raise PairingError(
                                f"edge ({a}, {b}) has no periodic partner on axis {ax}; "
                                "opposite face triangulations differ",
                                [a, b],
                            )
                        if uf_e.union(int(partner), e):
                            kept_e.append((int(partner), e))
            kept_e = np.array(kept_e, dtype=np.int64).reshape(-1, 2) + nn
            plus = (ncomp * kept_e[:, 0:1] + comps).ravel()
            minus = (ncomp * kept_e[:, 1:2] + comps).ravel()
            out.add(
                np.stack([plus, minus], axis=1),
                np.tile([1.0, -1.0], (len(plus), 1)),
                np.zeros((len(plus), k)),
                "periodic",
            )
        _vertex_rigid_rows(out, mesh, problem, rotations=False)

    else:  # Neumann
        faces, normals = _outward_normals(mesh)
        vals, pts, jxw = V.face_quadrature(faces)
        fdofs = V.face_dofs(faces)  # (f, nbf)
        intN = np.einsum("qb,fq->fb", vals, jxw)
        Xq = _x_batch(pts, problem)  # (f, nq, ncomp, k)
        if problem == MECHANICAL:
            for j, (a, b) in enumerate(VOIGT_PAIRS):
                s = np.zeros((3, 3))
                s[a, b] = s[b, a] = 1.0
                t = normals @ s  # (f, 3) traction of unit stress j
                cols = (3 * fdofs[:, :, None] + comps).ravel()
                w = (intN[:, :, None] * t[:, None, :]).ravel()
                Dj = np.einsum("fc,fq,fqck->k", t, jxw, Xq)
                out.add(cols[None, :], w[None, :], Dj, "average")
        else:
            for j in range(3):
                t = normals[:, j]
                w = (intN * t[:, None]).ravel()
                Dj = np.einsum("f,fq,fqk->k", t, jxw, Xq[:, :, 0, :])
                out.add(fdofs.ravel()[None, :], w[None, :], Dj, "average")
        _vertex_rigid_rows(out, mesh, problem, rotations=True)

    C, D = out.build()
    groups = dict(out.groups)
    if bc is BcKind.NEUMANN:
        keep = _independent_rows(C)
        if len(keep) < C.shape[0]:
            log.info("dropping %d dependent constraint rows", C.shape[0] - len(keep))
            C, D = C[keep], D[keep]
            groups["dropped"] = out.m - len(keep)
    if return_groups:
        return C, D, groups
    return C, D


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrientedMaterial:
    """Transversely isotropic phase whose axis varies per element/point.

    ``directions`` is (n_phase_elems, 3) or (n_phase_elems, nq, 3), ordered
    as the phase's elements appear in the mesh.
    """

    material: TransverselyIsotropic
    directions: np.ndarray


def _stiffness_value(mat, n_el: int, nq: int):
    if isinstance(mat, IsotropicElastic):
        return isotropic_stiffness(mat)
    if isinstance(mat, TransverselyIsotropic):
        return rotate_stiffness(transverse_isotropic_stiffness(mat), mat.axis)
    if isinstance(mat, OrientedMaterial):
        d = np.asarray(mat.directions, dtype=float)
        if d.shape == (n_el, 3):
            d = np.repeat(d[:, None, :], nq, axis=1)
        if d.shape != (n_el, nq, 3):
            raise MaterialError(f"direction field shape {d.shape} does not match ({n_el}, {nq}, 3)")
        return oriented_stiffness(transverse_isotropic_stiffness(mat.material), d)
    return np.asarray(mat, dtype=float)


def stiffness_field(mesh: Mesh, materials: Mapping, order: int = 1) -> dict:
    """Phase mapping with material objects resolved to stiffness arrays."""
    nq = function_space(mesh, order).rule.size
    out = {}
    for key, mat in materials.items():
        tag = mesh.phase_tag(key)
        out[tag] = _stiffness_value(mat, int(np.sum(mesh.phases == tag)), nq)
    return out


# ---------------------------------------------------------------------------
# RVE solves
# ---------------------------------------------------------------------------


@dataclass
class RveSolution:
    """Converged RVE state for one macro load."""

    load: np.ndarray  # macro strain (6) or gradient (3)
    u: np.ndarray
    lam: np.ndarray
    response: np.ndarray  # homogenised stress (6) or flux (3) from reactions
    volume: float
    equilibrium_residual: float
    constraint_residual: float
    volume_average_response: np.ndarray  # quadrature-point oracle
    volume_average_strain: np.ndarray
    micro_work: float  # (1/V) integral of strain . stress

    @property
    def hill_mandel_gap(self) -> float:
        macro = float(self.load @ self.response)
        scale = max(abs(self.micro_work), abs(macro), np.finfo(float).tiny)
        return abs(macro - self.micro_work) / scale

    @property
    def strain_average_gap(self) -> float:
        scale = max(np.linalg.norm(self.load), np.finfo(float).tiny)
        return float(np.linalg.norm(self.volume_average_strain - self.load) / scale)


class RveSolver:
    """Assembled and factorised RVE problem for one BC kind and material set.

    ``material`` is a phase mapping: stiffness objects/matrices for
    ``physics="mechanical"``, conductivities (scalar or 3x3) for
    ``physics="scalar"``.
    """

    def __init__(
        self,
        mesh: Mesh,
        bc,
        physics: str,
        material: Mapping,
        order: int = 2,
        pairing: PeriodicPairing | None = None,
        strategy: str = "eliminate",
    ):
        self.mesh = mesh
        self.bc = BcKind.parse(bc)
        self.physics = physics
        self.order = order
        self.space: FunctionSpace = function_space(mesh, order)
        nq = self.space.rule.size
        if physics == MECHANICAL:
            self.tensors = material_field(mesh, stiffness_field(mesh, material, order), nq, 6, "stiffness")
            K = assemble_elasticity(mesh, self.tensors, order)
        elif physics == SCALAR:
            self.tensors = material_field(mesh, material, nq, 3, "conductivity")
            K = assemble_conductivity(mesh, self.tensors, order)
        else:
            raise ValueError(f"physics must be 'mechanical' or 'scalar', got {physics!r}")
        self.C, self.D = build_constraints(mesh, self.bc, physics, pairing, order)
        kernel = self.space.rigid_modes() if physics == MECHANICAL else self.space.constant_mode()
        points = self.space.dof_coordinates
        if physics == MECHANICAL:
            points = np.repeat(points, 3, axis=0)
        self.system = SaddleSystem(K, self.C, self.D, null_space=kernel, strategy=strategy, coordinates=points)
        self.volume = mesh.volume

    @property
    def n_load(self) -> int:
        return 6 if self.physics == MECHANICAL else 3

    def _strain(self, u: np.ndarray) -> np.ndarray:
        bs = self.space.basis
        if self.physics == MECHANICAL:
            ue = u[self.space.vector_dofs(3)]
            B = strain_operator(bs.gradients)
            return np.einsum("mqia,ma->mqi", B, ue)
        return self.space.gradient(u)

    def micro_fields(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Strain (or gradient) and stress (or flux) at every quadrature point."""
        eps = self._strain(u)
        sig = np.einsum("mqij,mqj->mqi", self.tensors, eps)
        return eps, sig

    def solve(self, loads) -> list[RveSolution]:
        """Solve for each row of ``loads``; the factorisation is shared."""
        L = np.atleast_2d(np.asarray(loads, dtype=float))
        if L.shape[1] != self.n_load:
            raise ValueError(f"expected loads with {self.n_load} components")
        results = self.system.solve(self.D @ L.T)
        jxw = self.space.basis.jxw
        out = []
        for load, res in zip(L, results):
            eps, sig = self.micro_fields(res.u)
            avg_sig = np.einsum("mqi,mq->i", sig, jxw) / self.volume
            avg_eps = np.einsum("mqi,mq->i", eps, jxw) / self.volume
            work = float(np.einsum("mqi,mqi,mq->", eps, sig, jxw) / self.volume)
            out.append(
                RveSolution(
                    load=load,
                    u=res.u,
                    lam=res.lam,
                    response=self.D.T @ res.lam / self.volume,
                    volume=self.volume,
                    equilibrium_residual=res.equilibrium_residual,
                    constraint_residual=res.constraint_residual,
                    volume_average_response=avg_sig,
                    volume_average_strain=avg_eps,
                    micro_work=work,
                )
            )
        return out


def homogenise_stress(sol: RveSolution, D: np.ndarray, V: float) -> np.ndarray:
    """Homogenised stress ``D^T lam / V`` from the constraint reactions."""
    return np.asarray(D).T @ sol.lam / V


def homogenise_flux(sol: RveSolution, D: np.ndarray, V: float) -> np.ndarray:
    """Homogenised flux ``D^T lam / V`` for a scalar RVE solve."""
    return np.asarray(D).T @ sol.lam / V


@dataclass
class HomogenisedTensor:
    """Effective 6x6 stiffness or 3x3 conductivity/diffusivity."""

    kind: str  # mechanical | thermal | moisture
    bc: BcKind
    values: np.ndarray
    order: int = 2
    solutions: list[RveSolution] = field(default_factory=list, repr=False)
    factorisations: int = 1

    @property
    def max_residual(self) -> float:
        return max(
            (max(s.equilibrium_residual, s.constraint_residual) for s in self.solutions), default=0.0
        )

    @property
    def max_hill_mandel_gap(self) -> float:
        return max((s.hill_mandel_gap for s in self.solutions), default=0.0)

    @property
    def max_strain_average_gap(self) -> float:
        return max((s.strain_average_gap for s in self.solutions), default=0.0)

    @property
    def symmetry_gap(self) -> float:
        v = self.values
        return float(np.abs(v - v.T).max() / np.abs(v).max())

    def quadratic_form(self, e: np.ndarray) -> np.ndarray:
        e = np.atleast_2d(e)
        return np.einsum("ki,ij,kj->k", e, self.values, e)

    def report(self) -> str:
        """Plain-text report, numbers to 9 significant digits."""
        lines = [f"kind: {self.kind}", f"bc: {self.bc.value}", f"order: {self.order}", "tensor:"]
        for row in self.values:
            lines.append("  " + " ".join(f"{v: .9g}" for v in row))
        lines.append(f"symmetry_gap: {self.symmetry_gap:.9g}")
        lines.append(f"max_residual: {self.max_residual:.9g}")
        lines.append(f"hill_mandel_gap: {self.max_hill_mandel_gap:.9g}")
        lines.append(f"strain_average_gap: {self.max_strain_average_gap:.9g}")
        lines.append(f"factorisations: {self.factorisations}")
        return "\n".join(lines)


def _tensor_from_solver(solver: RveSolver, kind: str) -> HomogenisedTensor:
    n = solver.n_load
    sols = solver.solve(np.eye(n))
    values = np.column_stack([s.response for s in sols])
    return HomogenisedTensor(kind, solver.bc, values, solver.order, sols, solver.system.factorisations)


def homogenise_stiffness(
    mesh: Mesh,
    bc,
    materials: Mapping,
    order: int = 2,
    pairing: PeriodicPairing | None = None,
) -> HomogenisedTensor:
    """Effective stiffness from six unit-strain solves sharing one factorisation."""
    solver = RveSolver(mesh, bc, MECHANICAL, materials, order, pairing)
    return _tensor_from_solver(solver, "mechanical")


def homogenise_conductivity(
    mesh: Mesh,
    bc,
    k_of: Mapping,
    order: int = 2,
    pairing: PeriodicPairing | None = None,
    kind: str = "thermal",
) -> HomogenisedTensor:
    """Effective conductivity (or diffusivity) from three unit-gradient solves."""
    solver = RveSolver(mesh, bc, SCALAR, k_of, order, pairing)
    return _tensor_from_solver(solver, kind)


def diffusivity_from_conductivity(K: HomogenisedTensor | np.ndarray, rho_cp: float):
    """Diffusivity ``K / (rho c_p)``; keeps the tensor wrapper if given one."""
    if rho_cp <= 0:
        raise MaterialError(f"rho*c_p must be positive, got {rho_cp}")
    if isinstance(K, HomogenisedTensor):
        return HomogenisedTensor("moisture", K.bc, K.values / rho_cp, K.order, K.solutions, K.factorisations)
    return np.asarray(K, dtype=float) / rho_cp
