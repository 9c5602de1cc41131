"""Mesh parsing, validation, generators and periodic pairing."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hygrohom.mesh import (
    Mesh,
    MeshParseError,
    MeshValidationError,
    PairingError,
    detect_periodic_pairs,
    generate_box_mesh,
    generate_cylinder_rve,
    generate_l_prism,
    generate_laminate_rve,
    parse_mesh,
    write_mesh,
)

SINGLE_TET = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
3 1 "matrix"
2 2 "base"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
2
1 4 2 1 1 1 2 3 4
2 2 2 2 2 1 3 2
$EndElements
"""


def test_parse_single_tet(tmp_path):
    p = tmp_path / "tet.msh"
    p.write_text(SINGLE_TET)
    mesh = parse_mesh(p)
    assert mesh.n_elements == 1 and mesh.n_nodes == 4
    assert mesh.volume == pytest.approx(1.0 / 6.0, rel=1e-14)
    assert mesh.phase_label(1) == "matrix"
    assert mesh.face_set("base").shape == (1, 3)


def test_out_of_range_node_is_a_validation_error(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text(SINGLE_TET.replace("1 4 2 1 1 1 2 3 4", "1 4 2 1 1 1 2 3 99"))
    with pytest.raises((MeshValidationError, MeshParseError), match="99|element"):
        parse_mesh(p)


def test_malformed_file_reports_line(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text(SINGLE_TET.replace("3 0 1 0", "3 0 one 0"))
    with pytest.raises(MeshParseError) as info:
        parse_mesh(p)
    assert info.value.line == 13
    assert "line 13" in str(info.value)


def test_inverted_element_named():
    nodes = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    with pytest.raises(MeshValidationError, match="element 0"):
        Mesh(nodes, [[0, 2, 1, 3]], [1])


def test_untagged_element_rejected():
    nodes = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    with pytest.raises(MeshValidationError, match="phase"):
        Mesh(nodes, [[0, 1, 2, 3]], [0])


def test_interior_face_set_rejected(box3):
    boundary = {tuple(sorted(f)) for f in box3.boundary_faces.tolist()}
    faces = box3.tets[:, [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]].reshape(-1, 3)
    interior = next(f for f in faces.tolist() if tuple(sorted(f)) not in boundary)
    with pytest.raises(MeshValidationError, match="boundary face"):
        Mesh(box3.nodes, box3.tets, box3.phases, face_sets={"bad": [interior]})


def test_rve_scale_round_trip(tmp_path):
    """A 10,285-element mesh survives write and re-parse with identical counts."""
    box = generate_box_mesh((12, 12, 12))
    assert box.n_elements == 10368
    mesh = Mesh(box.nodes, box.tets[:10285], box.phases[:10285])
    path = tmp_path / "rve.msh"
    write_mesh(mesh, path)
    back = parse_mesh(path)
    assert back.n_elements == 10285
    assert back.n_nodes == mesh.n_nodes
    np.testing.assert_array_equal(back.tets, mesh.tets)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)


def test_round_trip_keeps_sets_and_names(tmp_path, cylinder):
    path = tmp_path / "cyl.msh"
    write_mesh(cylinder, path)
    back = parse_mesh(path)
    assert back.phase_names == cylinder.phase_names
    assert set(back.face_sets) == set(cylinder.face_sets)
    for name, tris in cylinder.face_sets.items():
        np.testing.assert_array_equal(back.face_set(name), tris)


def test_laminate_counts():
    mesh = generate_laminate_rve(1, (2, 2, 2))
    assert mesh.n_elements == 48
    tags, counts = np.unique(mesh.phases, return_counts=True)
    assert tags.tolist() == [1, 2] and counts.tolist() == [24, 24]


def test_single_phase_laminate():
    mesh = generate_laminate_rve(1, (1, 1, 1), n_phases=1)
    assert set(mesh.phases.tolist()) == {1}


@pytest.mark.parametrize(
    "make, volume",
    [
        (lambda: generate_cylinder_rve((4, 4, 2), 0.3), 1.0),
        (lambda: generate_laminate_rve(2, (3, 2, 4), lengths=(2.0, 1.0, 0.5)), 1.0),
        (lambda: generate_l_prism(2, leg=1.0, thickness=0.5), 1.5),
    ],
)
def test_generated_meshes_satisfy_invariants(make, volume):
    mesh = make()
    assert np.all(mesh.signed_volumes > 0)
    assert mesh.volume == pytest.approx(volume, rel=1e-12)
    assert set(np.unique(mesh.phases).tolist()) <= set(mesh.phase_names)


def test_unit_cube_pairing_counts():
    mesh = generate_box_mesh((2, 2, 2))
    pairing = detect_periodic_pairs(mesh)
    for ax in range(3):
        p = pairing.axis_pairs(ax)
        assert len(p) == 9
        d = mesh.nodes[p[:, 0]] - mesh.nodes[p[:, 1]]
        expect = np.zeros(3)
        expect[ax] = 1.0
        np.testing.assert_allclose(d, np.tile(expect, (9, 1)), atol=1e-12)


def test_pairing_is_involution(laminate):
    pairing = detect_periodic_pairs(laminate)
    for ax in range(3):
        m = pairing.map(ax)
        assert all(m[m[k]] == k for k in m)
        p = pairing.axis_pairs(ax)
        assert len(np.unique(p[:, 0])) == len(p) and len(np.unique(p[:, 1])) == len(p)


def test_perturbed_node_is_named():
    mesh = generate_box_mesh((2, 2, 2))
    tol = 1e-6
    x = mesh.nodes.copy()
    on_plus = np.nonzero(np.isclose(x[:, 0], 1.0) & np.isclose(x[:, 1], 0.5) & np.isclose(x[:, 2], 0.5))[0][0]
    x[on_plus, 1] += 10 * tol
    moved = Mesh(x, mesh.tets, mesh.phases)
    with pytest.raises(PairingError) as info:
        detect_periodic_pairs(moved, tolerance=tol)
    assert int(on_plus) in info.value.unmatched
    assert str(on_plus) in str(info.value)


def test_l_prism_is_not_periodic():
    with pytest.raises(PairingError):
        detect_periodic_pairs(generate_l_prism(2))


def test_cylinder_inlet_outlet_on_yarn():
    mesh = generate_cylinder_rve((6, 6, 3), 0.3)
    for name, z in (("yarn1_inlet", 0.0), ("yarn1_outlet", 1.0)):
        tris = mesh.face_set(name)
        assert len(tris) > 0
        np.testing.assert_allclose(mesh.nodes[tris][:, :, 2], z)


@settings(max_examples=15, deadline=None)
@given(
    st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
    st.tuples(*(st.floats(0.2, 5.0) for _ in range(3))),
)
def test_box_mesh_properties(div, lengths):
    mesh = generate_box_mesh(div, lengths)
    assert mesh.n_elements == 6 * np.prod(div)
    assert mesh.volume == pytest.approx(np.prod(lengths), rel=1e-12)
    # every boundary triangle belongs to exactly one of the six face sets
    total = sum(len(v) for v in mesh.face_sets.values())
    assert total == len(mesh.boundary_faces)
    pairing = detect_periodic_pairs(mesh)
    np.testing.assert_allclose(pairing.period, lengths, rtol=1e-12)
