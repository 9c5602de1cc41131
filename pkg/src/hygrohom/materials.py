"""Elastic constitutive matrices in Voigt form.

Strains use engineering shear in the order ``[e11, e22, e33, 2e12, 2e23,
2e31]`` and stresses the same index order without factors, so that
``sigma = C @ eps`` and ``eps @ sigma`` is the strain energy density times
two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hygrohom.errors import MaterialError
from hygrohom.fe.assembly import VOIGT_PAIRS

__all__ = [
    "IsotropicElastic",
    "TransverselyIsotropic",
    "isotropic_stiffness",
    "transverse_isotropic_stiffness",
    "frame_from_axis",
    "stress_rotation_matrix",
    "rotate_stiffness",
    "rotate_stiffness_by",
    "oriented_stiffness",
    "apply_degradation",
    "mandel",
]

_MANDEL = np.diag([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])


@dataclass(frozen=True)
class IsotropicElastic:
    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0:
            raise MaterialError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise MaterialError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))


@dataclass(frozen=True)
class TransverselyIsotropic:
    """Five-constant transversely isotropic solid; local z is the fibre axis.

    ``nu_z`` couples axial strain to transverse contraction (load along z).
    """

    E_p: float
    E_z: float
    nu_p: float
    nu_z: float
    G_pz: float
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for name in ("E_p", "E_z", "G_pz"):
            if not getattr(self, name) > 0:
                raise MaterialError(f"{name} must be positive, got {getattr(self, name)}")
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise MaterialError(f"axis must be a unit vector, got norm {np.linalg.norm(a)}")


def isotropic_stiffness(m: IsotropicElastic) -> np.ndarray:
    lam = m.E * m.nu / ((1.0 + m.nu) * (1.0 - 2.0 * m.nu))
    mu = m.shear_modulus
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[[0, 1, 2], [0, 1, 2]] += 2.0 * mu
    C[[3, 4, 5], [3, 4, 5]] = mu
    return C


def transverse_isotropic_stiffness(m: TransverselyIsotropic) -> np.ndarray:
    """Local-axes stiffness from the inverted compliance."""
    S = np.zeros((6, 6))
    S[0, 0] = S[1, 1] = 1.0 / m.E_p
    S[2, 2] = 1.0 / m.E_z
    S[0, 1] = S[1, 0] = -m.nu_p / m.E_p
    S[0, 2] = S[2, 0] = S[1, 2] = S[2, 1] = -m.nu_z / m.E_z
    S[3, 3] = 2.0 * (1.0 + m.nu_p) / m.E_p  # in-plane shear 12
    S[4, 4] = S[5, 5] = 1.0 / m.G_pz  # 23 and 31 contain the axis
    try:
        C = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise MaterialError("transversely isotropic compliance is singular") from None
    ev = np.linalg.eigvalsh(0.5 * (C + C.T))
    if ev.min() <= 0:
        raise MaterialError("transversely isotropic constants give a non-positive-definite stiffness")
    return 0.5 * (C + C.T)


def frame_from_axis(axis) -> np.ndarray:
    """Proper rotation whose third column is ``axis``."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0:
        raise MaterialError("cannot orient a material along a zero vector")
    a = a / n
    helper = np.eye(3)[np.argmin(np.abs(a))]
    t1 = np.cross(helper, a)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(a, t1)
    return np.column_stack([t1, t2, a])


def stress_rotation_matrix(R: np.ndarray) -> np.ndarray:
    """Voigt matrix M with sigma_global = M sigma_local for rotation R."""
    R = np.asarray(R, dtype=float)
    M = np.empty(R.shape[:-2] + (6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (p, q) in enumerate(VOIGT_PAIRS):
            if p == q:
                M[..., I, J] = R[..., i, p] * R[..., j, p]
            else:
                M[..., I, J] = R[..., i, p] * R[..., j, q] + R[..., i, q] * R[..., j, p]
    return M


def rotate_stiffness_by(C_local: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Global stiffness for local axes rotated by R (columns = local axes)."""
    M = stress_rotation_matrix(R)
    return M @ C_local @ np.swapaxes(M, -1, -2)


def rotate_stiffness(C_local: np.ndarray, axis) -> np.ndarray:
    """Rotate a local stiffness so its local z-axis aligns with ``axis``."""
    a = np.asarray(axis, dtype=float)
    if np.allclose(a / max(np.linalg.norm(a), 1e-300), [0.0, 0.0, 1.0], rtol=0, atol=0):
        return np.array(C_local, dtype=float)
    return rotate_stiffness_by(C_local, frame_from_axis(a))


def oriented_stiffness(C_local: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Per-point global stiffness for an array of unit directions (..., 3)."""
    d = np.asarray(directions, dtype=float)
    flat = d.reshape(-1, 3)
    R = np.stack([frame_from_axis(v) for v in flat])
    out = rotate_stiffness_by(C_local, R)
    return out.reshape(d.shape[:-1] + (6, 6))


def apply_degradation(C_matrix_phase: np.ndarray, one_minus_omega: float) -> np.ndarray:
    """Scale an (undamaged) matrix-phase stiffness by the retained fraction."""
    w = float(one_minus_omega)
    if not 0.0 <= w <= 1.0:
        raise MaterialError(f"retained stiffness fraction must lie in [0, 1], got {w}")
    return w * np.asarray(C_matrix_phase, dtype=float)


def mandel(C: np.ndarray) -> np.ndarray:
    """Kelvin-Mandel form, whose eigenvalues are rotation invariant."""
    return _MANDEL @ C @ _MANDEL
