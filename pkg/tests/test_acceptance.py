"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are
also written to the terminal when output is captured.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import GAP_TOLERANCE, MATRIX, RVE_SOLVES, SOFT, STIFF, YARN, plate_config
from hygrohom.config import build_mesh
from hygrohom.degradation import (
    KELVIN_OFFSET,
    DamageField,
    DegradationParams,
    ExperimentSeries,
    assemble_damage_residual_jacobian,
    fit_alpha,
    fit_beta,
    integrate_damage,
    predict_G,
)
from hygrohom.fe.assembly import assemble_conductivity, assemble_elasticity
from hygrohom.fe2 import run_fe2
from hygrohom.homogenisation import homogenise_conductivity, homogenise_stiffness
from hygrohom.materials import (
    IsotropicElastic,
    isotropic_stiffness,
    rotate_stiffness,
    transverse_isotropic_stiffness,
)
from hygrohom.mesh import generate_box_mesh, generate_cylinder_rve, generate_laminate_rve
from hygrohom.yarn import solve_yarn_directions

BCS = ("dirichlet", "periodic", "neumann")
BETA = -0.001682
G0 = 3.76
TG = 126.0 + KELVIN_OFFSET


@pytest.fixture
def report(capsys):
    def _report(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return _report


def _rel(a, b) -> float:
    return float(np.abs(np.asarray(a) - b).max() / np.abs(b).max())


@pytest.mark.slow
def test_criterion_01_homogeneous_identity(report):
    mesh = generate_box_mesh((10, 10, 8))
    assert mesh.n_elements <= 5000
    C_exact = isotropic_stiffness(IsotropicElastic(3.5, 0.3))
    errors, times = [], []
    for bc in BCS:
        t0 = time.perf_counter()
        C = homogenise_stiffness(mesh, bc, {1: IsotropicElastic(3.5, 0.3)}, 2)
        times.append(time.perf_counter() - t0)
        errors.append(_rel(C.values, C_exact))
        t0 = time.perf_counter()
        K = homogenise_conductivity(mesh, bc, {1: 190.0}, 2)
        times.append(time.perf_counter() - t0)
        errors.append(_rel(K.values, 190.0 * np.eye(3)))
    ok = max(errors) <= 1e-8 and max(times) < 10.0
    report(1, "homogeneous RVE returns phase tensors", ok,
           f"{mesh.n_elements} tets, order 2, max rel error {max(errors):.2e}, slowest solve {max(times):.2f} s")


def test_criterion_02_bc_ordering(report, rng):
    E = rng.normal(size=(100, 6))
    g = rng.normal(size=(100, 3))
    cases = {
        "laminate": (generate_laminate_rve(1, (2, 2, 4)), {1: SOFT, 2: STIFF}, {1: 1.0, 2: 10.0}),
        "cylinder": (generate_cylinder_rve((4, 4, 2), 0.3), {"matrix": MATRIX, "yarn1": YARN},
                     {"matrix": 0.2, "yarn1": 1.0}),
    }
    worst = 0.0
    for mesh, mech, cond in cases.values():
        for forms in (
            [homogenise_stiffness(mesh, bc, mech, 1).quadratic_form(E) for bc in BCS],
            [homogenise_conductivity(mesh, bc, cond, 1).quadratic_form(g) for bc in BCS],
        ):
            qd, qp, qn = forms
            scale = np.abs(qd).max()
            worst = max(worst, float(np.max(qp - qd)) / scale, float(np.max(qn - qp)) / scale)
    report(2, "Dirichlet >= periodic >= Neumann", worst <= 1e-9,
           f"laminate + cylinder, 100 strains and 100 gradients, worst violation {max(worst, 0.0):.2e}")


def test_criterion_03_analytic_mixtures(report):
    K = homogenise_conductivity(generate_laminate_rve(1, (2, 2, 4)), "periodic", {1: 1.0, 2: 10.0}, 2)
    d = np.diag(K.values)
    err = max(abs(d[0] - 5.5), abs(d[1] - 5.5), abs(d[2] - 20.0 / 11.0))
    report(3, "laminate mixtures 5.5 / 20/11", err <= 1e-6, f"diag {d[0]:.9g} {d[1]:.9g} {d[2]:.9g}")


def test_criterion_04_energy_consistency(report):
    meshes = [generate_laminate_rve(1, (2, 2, 4)), generate_cylinder_rve((4, 4, 2), 0.3)]
    tensors = []
    for mesh in meshes:
        mats = {1: SOFT, 2: STIFF} if "yarn1" not in mesh.phase_names.values() else {"matrix": MATRIX, "yarn1": YARN}
        cond = {p: 1.0 + 4.0 * i for i, p in enumerate(mats)}
        for bc in BCS:
            for order in (1, 2):
                tensors.append(homogenise_stiffness(mesh, bc, mats, order))
                tensors.append(homogenise_conductivity(mesh, bc, cond, order))
    solves = [s for t in tensors for s in t.solutions] + list(RVE_SOLVES)
    hm = max(s.hill_mandel_gap for s in solves)
    avg = max(s.strain_average_gap for s in solves)
    ok = hm <= GAP_TOLERANCE and avg <= GAP_TOLERANCE
    report(4, "Hill-Mandel and average consistency", ok,
           f"{len(solves)} solves, max gaps {hm:.2e} / {avg:.2e}; every other test checks its own solves")


def test_criterion_05_degradation_constants(report):
    times = np.array([0.0, 28.0, 56.0, 112.0])
    alphas = {T: fit_alpha(ExperimentSeries(T, times, G0 * np.exp(-a * times)), G0).alpha
              for T, a in {25.0: 0.0023, 60.0: 0.0027, 80.0: 0.0040}.items()}
    beta = fit_beta(alphas, TG).beta
    rel = abs(beta - BETA) / abs(BETA)
    G = float(predict_G(DegradationParams(G0, TG, BETA), 353.15, 1.0, 112.0))
    direct = G0 * np.exp(-BETA * np.log(1.0 - 353.15 / TG) * 112.0)
    ok = rel <= 0.03 and abs(G - 2.503) <= 1e-3 and abs(G - direct) <= 1e-12
    report(5, "fitted beta and predicted modulus", ok,
           f"beta {beta:.6g} ({100 * rel:.2f}% off), G(80 C, 112 d) = {G:.6g} GPa")


def test_criterion_06_damage_integrator_order(report):
    T, c, t_end = 353.15, 1.0, 100.0
    exact = np.exp(-BETA * np.log(1.0 - T / TG) * t_end)
    errors, in_range = [], True
    for dt in (10.0, 5.0, 2.5):
        _, w = integrate_damage(DamageField(np.ones(3)), T, c, dt, t_end, BETA, TG)
        in_range &= bool(np.all((w > 0.0) & (w <= 1.0)))
        errors.append(abs(w[-1, 0] - exact))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    ok = in_range and np.all(np.abs(orders - 1.0) <= 0.1)
    report(6, "backward Euler damage is first order", ok,
           f"observed orders {orders[0]:.3f}, {orders[1]:.3f}; values in (0, 1]: {in_range}")


def _uniform_exposure_config(T_K: float) -> dict:
    faces = ["xmin", "xmax", "ymin", "ymax", "zmin", "zmax"]
    cfg = plate_config(steps=1120, dt=0.1, macro_div=(2, 2, 1), rve_div=(3, 3, 1))
    cfg["thermal"] = {"capacity": 1.0, "initial": T_K, "fixed": {f: T_K for f in faces}}
    cfg["moisture"] = {"initial": 1.0, "fixed": {f: 1.0 for f in faces}}
    cfg["schedule"]["snapshot_stride"] = 1120
    return cfg


def test_criterion_07_damage_model_agreement(report):
    params = DegradationParams(G0, TG, BETA)
    worst, ratios = 0.0, []
    for T_C in (25.0, 60.0, 80.0):
        T_K = T_C + KELVIN_OFFSET
        result = run_fe2(_uniform_exposure_config(T_K), mechanics=False)
        expected = float(predict_G(params, T_K, 1.0, 112.0)) / G0
        for name in result.probes:
            w = result.probe_history(name)["w"][-1]
            worst = max(worst, abs(w - expected))
        ratios.append(expected)
    report(7, "macro damage matches closed-form G/G0", worst <= 1e-4,
           f"25/60/80 C, c = 1, 112 d, dt = 0.1 d; G/G0 = {ratios[0]:.5f}/{ratios[1]:.5f}/{ratios[2]:.5f}, "
           f"max deviation {worst:.2e}")


def test_criterion_08_p_convergence_and_nesting(report):
    mesh = generate_cylinder_rve((4, 4, 2), 0.3)
    mats = {"matrix": MATRIX, "yarn1": YARN}
    cond = {"matrix": 0.2, "yarn1": 1.0}
    C1, C2 = (homogenise_stiffness(mesh, "periodic", mats, p).values for p in (1, 2))
    K1, K2 = (homogenise_conductivity(mesh, "periodic", cond, p).values for p in (1, 2))
    change_C = np.abs(np.diag(C1) - np.diag(C2)) / np.abs(np.diag(C2))
    change_K = np.abs(np.diag(K1) - np.diag(K2)) / np.abs(np.diag(K2))
    measurable = change_C.max() > 1e-6 and change_K.max() > 1e-6
    n = mesh.n_nodes
    stiff = {
        "matrix": isotropic_stiffness(MATRIX),
        "yarn1": rotate_stiffness(transverse_isotropic_stiffness(YARN), YARN.axis),
    }
    E1, E2 = (assemble_elasticity(mesh, stiff, p).toarray() for p in (1, 2))
    k1, k2 = (assemble_conductivity(mesh, cond, p).toarray() for p in (1, 2))
    nest = max(_rel(E2[: 3 * n, : 3 * n], E1), _rel(k2[:n, :n], k1))
    ok = measurable and nest <= 1e-12
    report(8, "order 1 -> 2 change and hierarchic nesting", ok,
           f"max diagonal change C {change_C.max():.2e}, K {change_K.max():.2e}; nesting gap {nest:.1e}")


def test_criterion_09_yarn_directions(report):
    mesh = generate_cylinder_rve((6, 6, 4), 0.3, 2, (1.0, 1.0, 2.0))
    field = solve_yarn_directions(mesh, "yarn1", "yarn1_inlet", "yarn1_outlet")
    direction = float(np.abs(field.vectors - [0.0, 0.0, 1.0]).max())
    balance = abs(field.inlet_flux + field.outlet_flux) / abs(field.outlet_flux)
    ok = direction <= 1e-8 and balance <= 1e-8
    report(9, "straight yarn follows its axis", ok,
           f"{len(field.elements)} yarn elements, max direction error {direction:.1e}, flux imbalance {balance:.1e}")


def test_criterion_10_fe2_plate(report):
    cfg = plate_config(steps=20)
    result = run_fe2(cfg)
    mesh = build_mesh(cfg["macro_mesh"])
    y = mesh.nodes[:, 1]
    damage = 1.0 - result.damage[-1]
    near_top = damage[np.isclose(y, y.max())].mean()
    near_bottom = damage[np.isclose(y, y.min())].mean()
    monotone = True
    for name in result.probes:
        mag = np.linalg.norm(result.probe_history(name)["u"], axis=1)
        monotone &= bool(np.all(np.diff(mag) >= -1e-12 * mag.max())) and mag[-1] > mag[0]
    control = run_fe2(plate_config(exposure=False, steps=20))
    drift = float(np.abs(control.displacement - control.displacement[0]).max())
    ok = monotone and near_top > near_bottom and drift <= 1e-12
    report(10, "plate softens under hot/wet top face", ok,
           f"probe |u| nondecreasing: {monotone}; mean damage top {near_top:.4f} vs bottom {near_bottom:.4f}; "
           f"control drift {drift:.1e}")


def test_criterion_11_jacobian(report, rng):
    mesh = generate_box_mesh((3, 2, 2), (3.0, 2.0, 2.0))
    n = mesh.n_nodes
    worst = 0.0
    h = 1e-6
    for lumped in (False, True):
        for _ in range(3):
            w_prev, w = rng.uniform(0.2, 1.0, n), rng.uniform(0.2, 1.0, n)
            T, c = rng.uniform(290.0, 380.0, n), rng.uniform(0.0, 1.0, n)
            shift = 1.0 / rng.uniform(1.0, 20.0)

            def residual(x):
                return assemble_damage_residual_jacobian(
                    mesh, x, T, c, BETA, TG, shift, shift * (x - w_prev), lumped
                )[0]

            J = assemble_damage_residual_jacobian(mesh, w, T, c, BETA, TG, shift, shift * (w - w_prev), lumped)[1]
            fd = np.column_stack([(residual(w + h * e) - residual(w - h * e)) / (2 * h) for e in np.eye(n)])
            worst = max(worst, _rel(fd, J.toarray()))
    report(11, "damage Jacobian matches finite differences", worst <= 1e-6,
           f"6 random states, consistent and lumped, max rel gap {worst:.1e}")
