"""Shared meshes and material constants for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hygrohom.materials import IsotropicElastic, TransverselyIsotropic
from hygrohom.mesh import Mesh, generate_box_mesh, generate_cylinder_rve, generate_laminate_rve

MATRIX = IsotropicElastic(3.5, 0.3)
YARN = TransverselyIsotropic(17.5, 35.0, 0.26, 0.26, 8.75, (0.0, 0.0, 1.0))
SOFT = IsotropicElastic(3.5, 0.35)
STIFF = IsotropicElastic(35.0, 0.25)


def reference_tet(phase: int = 1) -> Mesh:
    nodes = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    return Mesh(nodes, [[0, 1, 2, 3]], [phase])


@pytest.fixture(scope="session")
def unit_tet():
    return reference_tet()


@pytest.fixture(scope="session")
def box3():
    return generate_box_mesh((3, 3, 3))


@pytest.fixture(scope="session")
def laminate():
    """50/50 two-phase laminate, interfaces on mesh planes."""
    return generate_laminate_rve(1, (2, 2, 4))


@pytest.fixture(scope="session")
def cylinder():
    return generate_cylinder_rve((4, 4, 2), 0.3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


GAP_TOLERANCE = 1e-8
RVE_SOLVES: list = []


@pytest.fixture(autouse=True)
def _check_rve_energy_consistency(monkeypatch):
    """Every converged RVE solve made by a test must satisfy the Hill-Mandel
    and strain-average consistency conditions."""
    from hygrohom import homogenisation

    seen = []
    original = homogenisation.RveSolver.solve

    def recording(self, loads):
        out = original(self, loads)
        seen.extend(out)
        return out

    monkeypatch.setattr(homogenisation.RveSolver, "solve", recording)
    yield
    RVE_SOLVES.extend(seen)
    worst_hm = max((s.hill_mandel_gap for s in seen), default=0.0)
    worst_avg = max((s.strain_average_gap for s in seen), default=0.0)
    assert worst_hm <= GAP_TOLERANCE, f"Hill-Mandel gap {worst_hm:.3e}"
    assert worst_avg <= GAP_TOLERANCE, f"strain-average gap {worst_avg:.3e}"


def plate_config(
    exposure: bool = True,
    steps: int = 12,
    dt: float = 10.0,
    macro_div=(4, 2, 1),
    rve_div=(3, 3, 2),
    **extra,
) -> dict:
    """Desk-scale plate: hot, wet top face (ymax), clamped at xmin, loaded at
    ymax.  ``exposure=False`` is the zero-exposure control (0 K, dry)."""
    T_hot, T0, c_top = (353.15, 293.15, 1.0) if exposure else (0.0, 0.0, 0.0)
    cfg = {
        "schema_version": 1,
        "macro_mesh": {"generate": {"kind": "box", "divisions": list(macro_div), "lengths": [4.0, 2.0, 1.0]}},
        "rve": {
            "mesh": {"generate": {"kind": "cylinder", "divisions": list(rve_div), "radius": 0.3}},
            "bc": "periodic",
            "order": 1,
            "matrix_phase": "matrix",
            "thermal": {"matrix": 0.2, "yarn1": 1.0},
            "moisture": {"matrix": 0.05, "yarn1": 0.01},
            "mechanical": {
                "matrix": {"type": "isotropic", "E": 3.5, "nu": 0.3},
                "yarn1": {"type": "transverse", "E_p": 17.5, "E_z": 35.0, "nu_p": 0.26, "nu_z": 0.26, "G_pz": 8.75},
            },
            "yarns": [{"phase": "yarn1", "inlet": "yarn1_inlet", "outlet": "yarn1_outlet"}],
        },
        "thermal": {"capacity": 1.0, "initial": T0, "fixed": {"ymax": T_hot}},
        "moisture": {"initial": 0.0, "fixed": {"ymax": c_top}},
        "degradation": {"beta": -0.001682, "Tg_C": 126.0},
        "mechanics": {"fixed": {"xmin": [0.0, 0.0, 0.0]}, "traction": {"ymax": [0.0, -0.01, 0.0]}},
        "schedule": {"dt": dt, "t_end": dt * steps, "cache_resolution": 0.001},
        "probes": {"top": [4.0, 2.0, 0.5], "bottom": [4.0, 0.0, 0.5], "mid": [2.0, 1.0, 0.5]},
    }
    cfg.update(extra)
    return cfg
