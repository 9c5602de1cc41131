"""Backward-Euler transient conduction/diffusion on the macro mesh."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from hygrohom.errors import SolverError
from hygrohom.mesh import generate_box_mesh
from hygrohom.transient import TransientProblem, probe_nodes, resolve_fixed, run_transient

DAY = 86400.0


@pytest.fixture(scope="module")
def bar():
    return generate_box_mesh((10, 1, 1), (10.0, 1.0, 1.0))


def test_bar_reaches_linear_profile(bar, tmp_path):
    problem = TransientProblem(bar, 1.0, 1.0, fixed={"xmin": 1.0, "xmax": 0.0})
    run = run_transient(problem, 0.0, 1.0, 400.0, snapshot_stride=100, probes={"mid": (5.0, 0.5, 0.5)}, output_dir=tmp_path)
    x = bar.nodes[:, 0]
    np.testing.assert_allclose(run.final.field, 1.0 - x / 10.0, atol=1e-6)
    assert run.probe_values["mid"][-1] == pytest.approx(0.5, abs=1e-6)
    assert run.factorisations == 1
    assert run.steady_time is not None
    for snap in run.snapshots:
        np.testing.assert_array_equal(snap.field[problem.fixed_dofs], problem.fixed_values)
    with open(tmp_path / "field_probes.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "mid"] and len(rows) == 402
    assert (tmp_path / "field_00400.vtk").exists()


def test_steady_state_matches_transient_limit(bar):
    problem = TransientProblem(bar, 2.0, 1.0, fixed={"xmin": 1.0}, fluxes={"xmax": -0.5})
    psi = problem.steady_state()
    # flux -0.5 leaving at x = 10 with k = 2: gradient -0.25
    np.testing.assert_allclose(psi, 1.0 - 0.25 * bar.nodes[:, 0], atol=1e-10)
    reactions = problem.boundary_fluxes(psi)
    assert reactions[problem.fixed_dofs].sum() == pytest.approx(0.5, rel=1e-10)


def test_pure_flux_steady_problem_is_singular(bar):
    problem = TransientProblem(bar, 1.0, fluxes={"xmax": 1.0})
    with pytest.raises(SolverError, match="singular"):
        problem.steady_state()


def test_insulated_uniform_field_unchanged(bar):
    problem = TransientProblem(bar, {1: np.diag([1.0, 2.0, 3.0])}, 1.0)
    state = problem.initial_state(0.3, 5.0)
    for _ in range(3):
        state = problem.step(state)
        np.testing.assert_allclose(state.field, 0.3, atol=1e-14)


def test_capacity_scales_rate(bar):
    changes = []
    for cap in (1.0, 2.0):
        problem = TransientProblem(bar, 1.0, cap, fixed={"xmin": 1.0})
        state = problem.initial_state(0.0, 1e-7)
        changes.append(problem.step(state).field - state.field)
    free = np.ones(bar.n_nodes, dtype=bool)
    free[problem.fixed_dofs] = False
    big = free & (np.abs(changes[0]) > 1e-3 * np.abs(changes[0][free]).max())
    np.testing.assert_allclose(changes[1][big] / changes[0][big], 0.5, rtol=1e-4)


def test_uniform_boundary_value_gives_uniform_field(bar):
    problem = TransientProblem(bar, 1.0, fixed={"xmin": 2.0, "xmax": 2.0})
    run = run_transient(problem, 2.0, 1.0, 10.0)
    for snap in run.snapshots:
        np.testing.assert_allclose(snap.field, 2.0, atol=1e-13)


def test_time_step_halving_first_order(bar):
    def field_at(dt):
        problem = TransientProblem(bar, 1.0, fixed={"xmin": 1.0})
        return run_transient(problem, 0.0, dt, 4.0).final.field

    ref = field_at(1.0 / 256)
    e = [np.abs(field_at(dt) - ref).max() for dt in (0.5, 0.25, 0.125)]
    assert np.log2(e[0] / e[1]) == pytest.approx(1.0, abs=0.15)
    assert np.log2(e[1] / e[2]) == pytest.approx(1.0, abs=0.15)


def test_thermal_equilibrates_before_moisture():
    mesh = generate_box_mesh((8, 1, 1), (20.0, 1.0, 1.0))
    # matrix-like properties: conductivity / (rho c_p) against moisture diffusivity, per second
    thermal = TransientProblem(mesh, 190.0, 966.0, fixed={"xmin": 353.15}, time_scale=DAY)
    moisture = TransientProblem(mesh, 2.8e-6, 1.0, fixed={"xmin": 1.0}, time_scale=DAY)
    t_run = run_transient(thermal, 293.15, 10.0, 1000.0, stop_at_steady=True)
    m_run = run_transient(moisture, 0.0, 10.0, 1000.0, stop_at_steady=True)
    assert t_run.steady_time is not None
    assert m_run.steady_time is None or m_run.steady_time > t_run.steady_time


def test_later_fixed_sets_win():
    mesh = generate_box_mesh((2, 2, 2))
    dofs, vals = resolve_fixed(mesh, {"xmin": 1.0, "ymin": 2.0})
    shared = np.intersect1d(np.unique(mesh.face_set("xmin")), np.unique(mesh.face_set("ymin")))
    assert np.all(vals[np.isin(dofs, shared)] == 2.0)


def test_probe_nearest_node(bar):
    p = probe_nodes(bar, {"a": (4.9, 0.1, 0.0)})
    np.testing.assert_allclose(bar.nodes[p["a"]], [5.0, 0.0, 0.0])


def test_invalid_schedule(bar):
    problem = TransientProblem(bar, 1.0)
    with pytest.raises(ValueError):
        run_transient(problem, 0.0, 3.0, 10.0)
    with pytest.raises(ValueError):
        run_transient(problem, 0.0, -1.0, 10.0)
