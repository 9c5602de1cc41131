"""Global operator assembly for elasticity, conduction, capacity and flux loads.

Material data may be given per phase (a constant matrix, keyed by phase tag
or name) or per quadrature point as an array of shape ``(n_phase_elems, nq,
d, d)`` for the elements of that phase in mesh order.  The latter carries
rotated yarn stiffnesses.  Element loops are vectorised in chunks.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
import scipy.sparse as sp

from hygrohom.errors import MaterialError
from hygrohom.fe.space import FunctionSpace, function_space
from hygrohom.mesh import Mesh

__all__ = [
    "VOIGT_PAIRS",
    "material_field",
    "strain_operator",
    "assemble_elasticity",
    "assemble_conductivity",
    "assemble_capacity",
    "assemble_mass",
    "assemble_flux_load",
    "assemble_traction_load",
]

# Voigt order [11, 22, 33, 12, 23, 31], engineering shear strains
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0))

_CHUNK = 2048


def _check_spd(mat: np.ndarray, label: str):
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        raise MaterialError(f"{label}: non-finite entries")
    sym = np.abs(mat - np.swapaxes(mat, -1, -2)).max()
    if sym > 1e-10 * max(np.abs(mat).max(), 1e-300):
        raise MaterialError(f"{label}: matrix is not symmetric")
    ev = np.linalg.eigvalsh(mat)
    if ev.min() <= 0:
        raise MaterialError(f"{label}: matrix is not positive definite (min eigenvalue {ev.min():.3e})")


def material_field(mesh: Mesh, spec, nq: int, dim: int, label: str = "material") -> np.ndarray:
    """Resolve material input to an (m, nq, dim, dim) array.

    ``spec`` is either a full (m, nq, dim, dim) array or a mapping from phase
    (tag or name) to a scalar, a (dim, dim) matrix, or a per-quadrature-point
    array over that phase's elements.
    """
    m = mesh.n_elements
    if isinstance(spec, np.ndarray) and spec.shape == (m, nq, dim, dim):
        _check_spd(spec, label)
        return spec
    if not isinstance(spec, Mapping):
        raise MaterialError(f"{label}: expected a phase mapping or an ({m}, {nq}, {dim}, {dim}) array")
    out = np.empty((m, nq, dim, dim))
    seen = np.zeros(m, dtype=bool)
    for key, val in spec.items():
        tag = mesh.phase_tag(key)
        sel = mesh.phases == tag
        if not sel.any():
            continue
        val = np.asarray(val, dtype=float)
        name = f"{label} of phase {mesh.phase_label(tag)}"
        if val.ndim == 0:
            if val <= 0:
                raise MaterialError(f"{name}: must be positive, got {float(val)}")
            val = val * np.eye(dim)
        if val.shape == (dim, dim):
            _check_spd(val, name)
            out[sel] = val
        elif val.shape == (int(sel.sum()), nq, dim, dim):
            _check_spd(val, name)
            out[sel] = val
        else:
            raise MaterialError(f"{name}: unsupported shape {val.shape}")
        seen |= sel
    if not seen.all():
        missing = sorted({mesh.phase_label(t) for t in np.unique(mesh.phases[~seen])})
        raise MaterialError(f"{label}: no data for phase(s) {missing}")
    return out


def strain_operator(grads: np.ndarray) -> np.ndarray:
    """B matrices (..., 6, 3 nb) from basis gradients (..., nb, 3)."""
    nb = grads.shape[-2]
    B = np.zeros(grads.shape[:-2] + (6, 3 * nb))
    gx, gy, gz = grads[..., 0], grads[..., 1], grads[..., 2]
    B[..., 0, 0::3] = gx
    B[..., 1, 1::3] = gy
    B[..., 2, 2::3] = gz
    B[..., 3, 0::3] = gy
    B[..., 3, 1::3] = gx
    B[..., 4, 1::3] = gz
    B[..., 4, 2::3] = gy
    B[..., 5, 0::3] = gz
    B[..., 5, 2::3] = gx
    return B


def _scatter(dofs: np.ndarray, ke: np.ndarray, n: int) -> sp.csr_matrix:
    nb = dofs.shape[1]
    rows = np.repeat(dofs, nb, axis=1).ravel()
    cols = np.tile(dofs, (1, nb)).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def _space(mesh: Mesh, order: int | FunctionSpace) -> FunctionSpace:
    if isinstance(order, FunctionSpace):
        return order
    return function_space(mesh, order)


def assemble_elasticity(mesh: Mesh, material_of, order: int = 1) -> sp.csr_matrix:
    """Stiffness matrix of integral B^T C B with 3 dofs per basis function."""
    V = _space(mesh, order)
    bs = V.basis
    C = material_field(mesh, material_of, bs.rule.size, 6, "stiffness")
    dofs = V.vector_dofs(3)
    nb3 = dofs.shape[1]
    ke = np.empty((mesh.n_elements, nb3, nb3))
    for s in range(0, mesh.n_elements, _CHUNK):
        sl = slice(s, s + _CHUNK)
        B = strain_operator(bs.gradients[sl])
        CB = C[sl] @ B
        # fold the quadrature sum into one batched product over (q, i)
        WB = (B * bs.jxw[sl, :, None, None]).reshape(len(B), -1, nb3)
        ke[sl] = WB.transpose(0, 2, 1) @ CB.reshape(len(B), -1, nb3)
    return _scatter(dofs, ke, 3 * V.n_dofs)


def assemble_conductivity(mesh: Mesh, k_of, order: int = 1) -> sp.csr_matrix:
    """Conduction matrix of integral grad N^T k grad N, one dof per function."""
    V = _space(mesh, order)
    bs = V.basis
    k = material_field(mesh, k_of, bs.rule.size, 3, "conductivity")
    ke = np.empty((mesh.n_elements, bs.n_basis, bs.n_basis))
    for s in range(0, mesh.n_elements, _CHUNK):
        sl = slice(s, s + _CHUNK)
        G = bs.gradients[sl]
        kG = np.einsum("mqij,mqbj->mqbi", k[sl], G)
        ke[sl] = np.einsum("mqai,mqbi,mq->mab", G, kG, bs.jxw[sl])
    return _scatter(V.element_dofs, ke, V.n_dofs)


def assemble_mass(mesh: Mesh, coefficient: np.ndarray, order: int = 1) -> sp.csr_matrix:
    """Weighted mass matrix of integral coefficient * N N^T; coefficient (m, nq)."""
    V = _space(mesh, order)
    bs = V.basis
    w = np.asarray(coefficient, dtype=float) * bs.jxw
    ke = np.einsum("qa,qb,mq->mab", bs.values, bs.values, w)
    return _scatter(V.element_dofs, ke, V.n_dofs)


def assemble_capacity(mesh: Mesh, rho_cp, order: int = 1) -> sp.csr_matrix:
    """Capacity matrix of integral rho*c_p N N^T; rho_cp maps phase -> scalar."""
    V = _space(mesh, order)
    nq = V.rule.size
    if np.isscalar(rho_cp):
        rho_cp = {t: rho_cp for t in mesh.phase_tags}
    coef = np.full(mesh.n_elements, np.nan)
    for key, val in rho_cp.items():
        val = float(val)
        tag = mesh.phase_tag(key)
        if not val > 0:
            raise MaterialError(f"rho*c_p of phase {mesh.phase_label(tag)} must be positive, got {val}")
        coef[mesh.phases == tag] = val
    if np.isnan(coef).any():
        missing = sorted({mesh.phase_label(t) for t in np.unique(mesh.phases[np.isnan(coef)])})
        raise MaterialError(f"rho*c_p: no data for phase(s) {missing}")
    return assemble_mass(mesh, np.repeat(coef[:, None], nq, axis=1), V)


def assemble_flux_load(mesh: Mesh, face_set: str, q_s: float, order: int = 1) -> np.ndarray:
    """Load vector of integral q_s N over a named face set."""
    V = _space(mesh, order)
    tris = mesh.face_set(face_set)
    f = np.zeros(V.n_dofs)
    if len(tris) == 0 or q_s == 0:
        return f
    vals, _, jxw = V.face_quadrature(tris)
    fe = float(q_s) * np.einsum("qb,kq->kb", vals, jxw)
    np.add.at(f, V.face_dofs(tris), fe)
    return f


def assemble_traction_load(mesh: Mesh, face_set: str, traction, order: int = 1) -> np.ndarray:
    """Load vector of a uniform traction vector over a named face set."""
    V = _space(mesh, order)
    t = np.asarray(traction, dtype=float).reshape(3)
    tris = mesh.face_set(face_set)
    f = np.zeros((V.n_dofs, 3))
    if len(tris):
        vals, _, jxw = V.face_quadrature(tris)
        fe = np.einsum("qb,kq->kb", vals, jxw)
        np.add.at(f, V.face_dofs(tris), fe[:, :, None] * t)
    return f.reshape(-1)
