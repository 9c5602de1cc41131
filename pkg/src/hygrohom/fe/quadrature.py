"""Symmetric quadrature rules on the reference tetrahedron and triangle.

Points are barycentric coordinates; weights sum to the reference measure
(1/6 for the tetrahedron, 1/2 for the triangle).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

__all__ = ["QuadratureRule", "tet_rule", "triangle_rule"]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, nverts) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _orbit(base) -> np.ndarray:
    return np.array(sorted(set(permutations(base))), dtype=float)


def _tet_degree2() -> QuadratureRule:
    a = (5.0 - np.sqrt(5.0)) / 20.0
    pts = _orbit((a, a, a, 1.0 - 3.0 * a))
    return QuadratureRule(pts, np.full(4, 1.0 / 24.0), 2)


def _tet_degree5() -> QuadratureRule:
    # 14-point positive-weight rule (degree 5)
    a1, w1 = 0.3108859192633006, 0.01878132095300264
    a2, w2 = 0.0927352503108912, 0.01224884051939366
    b, w3 = 0.4544962958743504, 0.007091003462846911
    groups = [
        (_orbit((a1, a1, a1, 1.0 - 3.0 * a1)), w1),
        (_orbit((a2, a2, a2, 1.0 - 3.0 * a2)), w2),
        (_orbit((b, b, 0.5 - b, 0.5 - b)), w3),
    ]
    pts = np.vstack([g for g, _ in groups])
    w = np.concatenate([np.full(len(g), wi) for g, wi in groups])
    return QuadratureRule(pts, w, 5)


def _tri_degree2() -> QuadratureRule:
    pts = _orbit((2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0))
    return QuadratureRule(pts, np.full(3, 1.0 / 6.0), 2)


_TET = {2: _tet_degree2(), 5: _tet_degree5()}
_TRI = {2: _tri_degree2()}


def tet_rule(order: int) -> QuadratureRule:
    """Rule exact for products of two basis functions of the given order."""
    if order == 1:
        return _TET[2]
    if order == 2:
        return _TET[5]
    raise ValueError(f"basis order must be 1 or 2, got {order}")


def triangle_rule(degree: int = 2) -> QuadratureRule:
    if degree > 2:
        raise ValueError("only the degree-2 triangle rule is provided")
    return _TRI[2]
