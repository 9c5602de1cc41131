"""Hierarchic H1 basis on affine tetrahedra (orders 1 and 2).

Order 1 uses the four barycentric (vertex) functions.  Order 2 adds one
function ``4 * l_i * l_j`` per edge.  Edge functions vanish at every vertex,
so the vertex coefficients of any field are its nodal values and the
order-1 space is a leading block of the order-2 space.  Global scalar dofs
are numbered vertices first (``0..n_nodes-1``) then edges
(``n_nodes + edge_id``); vector dofs interleave components
(``3 * scalar_dof + component``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from hygrohom.fe.quadrature import QuadratureRule, tet_rule, triangle_rule
from hygrohom.mesh import TET_EDGES, Mesh

__all__ = ["BasisSet", "FunctionSpace", "function_space", "basis_values", "barycentric_gradients"]


def basis_values(bary: np.ndarray, order: int) -> np.ndarray:
    """(nq, nb) basis values at barycentric points of a tetrahedron."""
    bary = np.atleast_2d(bary)
    if order == 1:
        return bary.copy()
    edge = 4.0 * bary[:, TET_EDGES[:, 0]] * bary[:, TET_EDGES[:, 1]]
    return np.hstack([bary, edge])


def barycentric_gradients(mesh: Mesh) -> np.ndarray:
    """(m, 4, 3) constant gradients of the barycentric coordinates."""
    x = mesh.nodes[mesh.tets]
    J = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns are edge vectors
    Jinv = np.linalg.inv(J)  # rows are grads of l1, l2, l3
    g = np.empty((len(x), 4, 3))
    g[:, 1:] = Jinv
    g[:, 0] = -Jinv.sum(axis=1)
    return g


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Basis values and physical gradients at the quadrature points."""

    order: int
    rule: QuadratureRule
    values: np.ndarray  # (nq, nb)
    gradients: np.ndarray  # (m, nq, nb, 3)
    jxw: np.ndarray  # (m, nq) weight times |det J|

    @property
    def n_basis(self) -> int:
        return self.values.shape[1]


class FunctionSpace:
    """Scalar hierarchic space on a mesh; vector spaces replicate it."""

    def __init__(self, mesh: Mesh, order: int = 1):
        if order not in (1, 2):
            raise ValueError(f"basis order must be 1 or 2, got {order}")
        self.mesh = mesh
        self.order = order
        self.rule = tet_rule(order)

    @property
    def n_vertex_dofs(self) -> int:
        return self.mesh.n_nodes

    @cached_property
    def n_dofs(self) -> int:
        if self.order == 1:
            return self.mesh.n_nodes
        return self.mesh.n_nodes + len(self.mesh.edges)

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """(m, nb) scalar dofs per element in local basis order."""
        if self.order == 1:
            return self.mesh.tets
        return np.hstack([self.mesh.tets, self.mesh.n_nodes + self.mesh.element_edges])

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        """(n_dofs, 3) anchor point of each scalar dof (vertex or edge midpoint)."""
        if self.order == 1:
            return self.mesh.nodes
        return np.vstack([self.mesh.nodes, self.mesh.nodes[self.mesh.edges].mean(axis=1)])

    def vector_dofs(self, ncomp: int = 3) -> np.ndarray:
        d = self.element_dofs
        return (ncomp * d[:, :, None] + np.arange(ncomp)).reshape(len(d), -1)

    @cached_property
    def basis(self) -> BasisSet:
        rule = self.rule
        bg = barycentric_gradients(self.mesh)  # (m, 4, 3)
        vals = basis_values(rule.points, self.order)
        m, nq = self.mesh.n_elements, rule.size
        grads = np.broadcast_to(bg[:, None], (m, nq, 4, 3))
        if self.order == 2:
            L = rule.points
            i, j = TET_EDGES[:, 0], TET_EDGES[:, 1]
            eg = 4.0 * (
                L[None, :, i, None] * bg[:, None, j, :] + L[None, :, j, None] * bg[:, None, i, :]
            )
            grads = np.concatenate([grads, eg], axis=2)
        else:
            grads = np.ascontiguousarray(grads)
        jxw = 6.0 * self.mesh.signed_volumes[:, None] * rule.weights[None, :]
        return BasisSet(self.order, rule, vals, grads, jxw)

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        """(m, nq, 3) physical quadrature point coordinates."""
        x = self.mesh.nodes[self.mesh.tets]
        return np.einsum("qa,mai->mqi", self.rule.points, x)

    def interpolate_vertex(self, nodal: np.ndarray) -> np.ndarray:
        """Dof vector from nodal values (edge coefficients zero).

        Exact for fields that are affine over each element.
        """
        nodal = np.asarray(nodal, dtype=float)
        if nodal.ndim == 1:
            out = np.zeros(self.n_dofs)
            out[: self.mesh.n_nodes] = nodal
            return out
        ncomp = nodal.shape[1]
        out = np.zeros((self.n_dofs, ncomp))
        out[: self.mesh.n_nodes] = nodal
        return out.reshape(-1)

    def evaluate(self, dofs: np.ndarray) -> np.ndarray:
        """(m, nq) values of a scalar field at quadrature points."""
        return np.einsum("qb,mb->mq", self.basis.values, np.asarray(dofs)[self.element_dofs])

    def gradient(self, dofs: np.ndarray) -> np.ndarray:
        """(m, nq, 3) gradient of a scalar field at quadrature points."""
        return np.einsum("mqbi,mb->mqi", self.basis.gradients, np.asarray(dofs)[self.element_dofs])

    def rigid_modes(self) -> np.ndarray:
        """(3 n_dofs, 6) translations and rotations about the vertex centroid.

        Rigid motions are affine, so their edge coefficients vanish.
        """
        nn = self.mesh.n_nodes
        y = self.mesh.nodes - self.mesh.nodes.mean(axis=0)
        modes = np.zeros((self.n_dofs, 3, 6))
        for a in range(3):
            modes[:nn, a, a] = 1.0
            modes[:nn, :, 3 + a] = np.cross(np.eye(3)[a], y)
        return modes.reshape(3 * self.n_dofs, 6)

    def constant_mode(self) -> np.ndarray:
        """(n_dofs, 1) the constant field."""
        out = np.zeros((self.n_dofs, 1))
        out[: self.mesh.n_nodes] = 1.0
        return out

    # -- boundary faces ---------------------------------------------------

    def face_dofs(self, tris: np.ndarray) -> np.ndarray:
        """(k, nbf) scalar dofs of triangles: 3 vertices then edges 01, 12, 20."""
        tris = np.asarray(tris, dtype=np.int64)
        if self.order == 1:
            return tris
        e = np.stack(
            [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1
        ).reshape(-1, 2)
        ids = self.mesh.edge_ids(e)
        if np.any(ids < 0):
            raise ValueError("triangle edge not found in mesh")
        return np.hstack([tris, self.mesh.n_nodes + ids.reshape(-1, 3)])

    def face_quadrature(self, tris: np.ndarray):
        """Values (nq, nbf), points (k, nq, 3) and jxw (k, nq) on triangles."""
        tris = np.asarray(tris, dtype=np.int64)
        rule = triangle_rule(2)
        L = rule.points
        vals = L.copy()
        if self.order == 2:
            vals = np.hstack([L, 4.0 * L[:, [0, 1, 2]] * L[:, [1, 2, 0]]])
        x = self.mesh.nodes[tris]
        pts = np.einsum("qa,kai->kqi", L, x)
        area = 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)
        jxw = 2.0 * area[:, None] * rule.weights[None, :]
        return vals, pts, jxw


@lru_cache(maxsize=16)
def function_space(mesh: Mesh, order: int = 1) -> FunctionSpace:
    """Shared space per (mesh, order); meshes hash by identity."""
    return FunctionSpace(mesh, order)
