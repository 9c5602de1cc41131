"""Isotropic and transversely isotropic stiffness, rotation and degradation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MATRIX, YARN
from hygrohom.errors import MaterialError
from hygrohom.fe.assembly import VOIGT_PAIRS
from hygrohom.materials import (
    IsotropicElastic,
    TransverselyIsotropic,
    apply_degradation,
    frame_from_axis,
    isotropic_stiffness,
    mandel,
    rotate_stiffness,
    rotate_stiffness_by,
    transverse_isotropic_stiffness,
)


def _to_tensor(C: np.ndarray) -> np.ndarray:
    T = np.empty((3, 3, 3, 3))
    idx = {}
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        idx[(i, j)] = idx[(j, i)] = I
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for m in range(3):
                    T[i, j, k, m] = C[idx[(i, j)], idx[(k, m)]]
    return T


def _to_voigt(T: np.ndarray) -> np.ndarray:
    C = np.empty((6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, m) in enumerate(VOIGT_PAIRS):
            C[I, J] = T[i, j, k, m]
    return C


def _rotate_brute(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    T = _to_tensor(C)
    return _to_voigt(np.einsum("ip,jq,kr,ls,pqrs->ijkl", R, R, R, R, T))


def _random_rotation(rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def test_isotropic_values():
    C = isotropic_stiffness(MATRIX)
    assert C[0, 0] == pytest.approx(3.5 * 0.7 / (1.3 * 0.4), rel=1e-14)
    assert C[0, 0] == pytest.approx(4.7115, abs=1e-4)
    assert C[0, 1] == pytest.approx(2.0192, abs=1e-4)
    np.testing.assert_allclose(np.diag(C)[3:], 1.3462, atol=1e-4)
    np.testing.assert_allclose(C, C.T)
    assert np.linalg.eigvalsh(C).min() > 0


def test_isotropic_zero_poisson():
    C = isotropic_stiffness(IsotropicElastic(2.0, 0.0))
    np.testing.assert_allclose(C, np.diag([2.0, 2.0, 2.0, 1.0, 1.0, 1.0]))


@pytest.mark.parametrize("E, nu", [(0.0, 0.3), (-1.0, 0.3), (1.0, 0.5), (1.0, -1.0)])
def test_isotropic_invalid(E, nu):
    with pytest.raises(MaterialError):
        IsotropicElastic(E, nu)


def test_transverse_reduces_to_isotropic():
    E, nu = 3.5, 0.3
    m = TransverselyIsotropic(E, E, nu, nu, E / (2 * (1 + nu)))
    np.testing.assert_allclose(transverse_isotropic_stiffness(m), isotropic_stiffness(IsotropicElastic(E, nu)), rtol=1e-10, atol=1e-12)


def test_transverse_table_values():
    C = transverse_isotropic_stiffness(YARN)
    assert np.linalg.eigvalsh(C).min() > 0
    assert C[2, 2] > C[0, 0]
    assert C[0, 0] == pytest.approx(C[1, 1], rel=1e-14)


def test_transverse_compliance_round_trip():
    C = transverse_isotropic_stiffness(YARN)
    S = np.linalg.inv(C)
    np.testing.assert_allclose(S @ C, np.eye(6), atol=1e-10)
    assert 1.0 / S[2, 2] == pytest.approx(YARN.E_z, rel=1e-12)
    assert 1.0 / S[0, 0] == pytest.approx(YARN.E_p, rel=1e-12)
    assert 1.0 / S[4, 4] == pytest.approx(YARN.G_pz, rel=1e-12)


def test_transverse_axis_must_be_unit():
    with pytest.raises(MaterialError):
        TransverselyIsotropic(1.0, 2.0, 0.2, 0.2, 0.5, (0.0, 0.0, 2.0))


def test_transverse_indefinite_rejected():
    with pytest.raises(MaterialError):
        transverse_isotropic_stiffness(TransverselyIsotropic(1.0, 1.0, 0.9, 0.9, 0.5))


def test_rotate_identity_axis():
    C = transverse_isotropic_stiffness(YARN)
    np.testing.assert_array_equal(rotate_stiffness(C, (0.0, 0.0, 1.0)), C)


def test_rotate_to_x_moves_stiff_direction():
    C = transverse_isotropic_stiffness(YARN)
    Cx = rotate_stiffness(C, (1.0, 0.0, 0.0))
    assert Cx[0, 0] == pytest.approx(C[2, 2], rel=1e-12)
    assert Cx[2, 2] == pytest.approx(C[0, 0], rel=1e-12)
    np.testing.assert_allclose(Cx, _rotate_brute(C, frame_from_axis((1.0, 0.0, 0.0))), atol=1e-12)


def test_rotate_zero_axis():
    with pytest.raises(MaterialError):
        rotate_stiffness(np.eye(6), (0.0, 0.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_matches_tensor_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6))
    C = A @ A.T + 6 * np.eye(6)
    R = _random_rotation(rng)
    np.testing.assert_allclose(rotate_stiffness_by(C, R), _rotate_brute(C, R), atol=1e-10 * np.abs(C).max())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_rotation_preserves_spectrum(axis):
    C = transverse_isotropic_stiffness(YARN)
    Cr = rotate_stiffness(C, axis)
    np.testing.assert_allclose(np.linalg.eigvalsh(mandel(Cr)), np.linalg.eigvalsh(mandel(C)), rtol=1e-10)
    np.testing.assert_allclose(Cr, Cr.T, atol=1e-12 * np.abs(C).max())
    R = frame_from_axis(axis)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_degradation_scaling():
    C = isotropic_stiffness(MATRIX)
    np.testing.assert_array_equal(apply_degradation(C, 1.0), C)
    np.testing.assert_allclose(apply_degradation(C, 0.5), 0.5 * C, rtol=0, atol=0)
    for bad in (-0.1, 1.1):
        with pytest.raises(MaterialError):
            apply_degradation(C, bad)
