"""Potential-flow yarn directions."""

from __future__ import annotations

import numpy as np
import pytest

from hygrohom.errors import YarnFlowError
from hygrohom.mesh import Mesh, generate_box_mesh, generate_cylinder_rve, generate_l_prism
from hygrohom.yarn import solve_all_yarn_directions, solve_yarn_directions


@pytest.fixture(scope="module")
def straight():
    mesh = generate_cylinder_rve((6, 6, 4), 0.3, lengths=(1.0, 1.0, 2.0))
    return mesh, solve_yarn_directions(mesh, "yarn1", "yarn1_inlet", "yarn1_outlet")


def test_straight_cylinder_axis_direction(straight):
    _, field = straight
    np.testing.assert_allclose(field.vectors, np.tile([0.0, 0.0, 1.0], (len(field.vectors), 1)), atol=1e-8)
    np.testing.assert_allclose(np.linalg.norm(field.vectors, axis=1), 1.0, atol=1e-10)


def test_straight_cylinder_linear_potential(straight):
    mesh, field = straight
    phi = field.nodal_potential(mesh.n_nodes)
    nodes = field.node_map
    z = mesh.nodes[nodes, 2]
    np.testing.assert_allclose(field.potential, z / 2.0, atol=1e-8)
    mid = np.isclose(z, 1.0)
    assert mid.any()
    np.testing.assert_allclose(phi[nodes[mid]], 0.5, atol=1e-8)


def test_flux_balance(straight):
    _, field = straight
    assert field.inlet_flux + field.outlet_flux == pytest.approx(0.0, abs=1e-8)
    assert field.outlet_flux > 0


def test_quadrature_and_element_layout(straight):
    mesh, field = straight
    q = field.at_quadrature(4)
    assert q.shape == (len(field.elements), 4, 3)
    full = field.element_vectors(mesh.n_elements)
    assert not full[mesh.phases != field.phase].any()
    np.testing.assert_allclose(full[field.elements], field.vectors)


def test_l_prism_bend_directions():
    mesh = generate_l_prism(6, 1.0, 0.5, 2)
    field = solve_yarn_directions(mesh, "yarn1", "inlet", "outlet")
    c = mesh.nodes[mesh.tets[field.elements]].mean(axis=1)
    v = field.vectors
    bend = (c[:, 0] > 1.0) & (c[:, 1] < 1.0)
    assert np.all(v[bend, 0] > 0) and np.all(v[bend, 1] > 0)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-10)
    first_leg, second_leg = c[:, 0] < 0.5, c[:, 1] > 1.5
    assert v[first_leg, 0].mean() > 0.99 and v[second_leg, 1].mean() > 0.99
    assert abs(field.inlet_flux + field.outlet_flux) < 1e-10


def test_bend_refinement_is_consistent():
    """Mean bend direction is stable under refinement (reference solve)."""
    means = []
    for n in (4, 8):
        mesh = generate_l_prism(n, 1.0, 0.5, 2)
        field = solve_yarn_directions(mesh, "yarn1", "inlet", "outlet")
        c = mesh.nodes[mesh.tets[field.elements]].mean(axis=1)
        bend = (c[:, 0] > 1.0) & (c[:, 1] < 1.0)
        m = field.vectors[bend].mean(axis=0)
        means.append(m / np.linalg.norm(m))
    assert np.dot(means[0], means[1]) > 0.999


def test_disconnected_yarn_reported():
    def phase(c):
        return np.where((c[:, 0] < 1.0) | (c[:, 0] > 2.0), 2, 1)

    mesh = generate_box_mesh((3, 1, 1), (3.0, 1.0, 1.0), cell_phase=phase, phase_names={1: "matrix", 2: "yarn1"})
    with pytest.raises(YarnFlowError, match="disconnected|share|no faces"):
        solve_yarn_directions(mesh, "yarn1", "xmin", "xmax")


def test_missing_face_set_reported(straight):
    mesh, _ = straight
    with pytest.raises(YarnFlowError, match="no faces"):
        solve_yarn_directions(mesh, "yarn1", "xmin", "yarn1_outlet")


def test_zero_gradient_names_element():
    box = generate_box_mesh((2, 1, 1), (2.0, 1.0, 1.0))
    faces, owner = box.boundary
    counts = np.bincount(owner, minlength=box.n_elements)
    left = box.nodes[box.tets][:, :, 0].max(axis=1) <= 1.0
    e = int(np.nonzero((counts >= 2) & left)[0][0])
    covered = faces[owner == e]
    assert set(np.unique(covered).tolist()) == set(box.tets[e].tolist())
    sets = dict(box.face_sets, pinned=covered)
    mesh = Mesh(box.nodes, box.tets, box.phases, box.phase_names, sets)
    with pytest.raises(YarnFlowError, match=f"element {e}"):
        solve_yarn_directions(mesh, 1, "pinned", "xmax")


def test_all_yarns_threaded_matches_serial(straight):
    mesh, field = straight
    out = solve_all_yarn_directions(mesh, [("yarn1", "yarn1_inlet", "yarn1_outlet")] * 2, workers=2)
    for f in out:
        np.testing.assert_array_equal(f.vectors, field.vectors)
