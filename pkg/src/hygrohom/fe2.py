"""One-way coupled multiscale driver.

Per time step the macro temperature and moisture fields are advanced with
homogenised transport tensors (computed once), the nodal damage field
``w = 1 - omega`` is updated, ``w`` is interpolated to every macro Gauss
point and the mechanical RVE is homogenised with its matrix phase scaled by
``w``.  Those RVE solves are memoised on ``w`` rounded to a fixed
resolution.  Finally the macro elasticity problem is solved under a
constant load.
"""

from __future__ import annotations

import csv
import json
import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from hygrohom.config import build_mesh, mechanical_material, transport_value
from hygrohom.degradation import DamageField, KELVIN_OFFSET, step_damage
from hygrohom.errors import MaterialError, SolverError, StepError
from hygrohom.fe.assembly import assemble_elasticity, assemble_traction_load
from hygrohom.fe.saddle import SpdFactor
from hygrohom.fe.space import function_space
from hygrohom.homogenisation import (
    BcKind,
    HomogenisedTensor,
    OrientedMaterial,
    homogenise_conductivity,
    homogenise_stiffness,
    stiffness_field,
)
from hygrohom.materials import TransverselyIsotropic, apply_degradation
from hygrohom.mesh import Mesh
from hygrohom.transient import TransientProblem, probe_nodes
from hygrohom.vtk import write_vtk
from hygrohom.yarn import solve_all_yarn_directions

__all__ = [
    "CouplingSchedule",
    "MechanicalRve",
    "StiffnessCache",
    "precompute_transport_tensors",
    "gauss_point_stiffness",
    "solve_macro_elasticity",
    "Fe2Result",
    "run_fe2",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingSchedule:
    dt: float
    t_end: float
    snapshot_stride: int = 1
    cache_resolution: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if not self.cache_resolution > 0:
            raise ValueError("cache resolution must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be at least 1")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError(f"t_end = {self.t_end} is not a multiple of dt = {self.dt}")
        return n


def precompute_transport_tensors(
    thermal_mesh: Mesh,
    moisture_mesh: Mesh,
    conductivity: Mapping,
    diffusivity: Mapping,
    bc=BcKind.PERIODIC,
    order: int = 2,
) -> tuple[HomogenisedTensor, HomogenisedTensor]:
    """Effective conductivity and diffusivity, computed once per run."""
    K_T = homogenise_conductivity(thermal_mesh, bc, conductivity, order, kind="thermal")
    D_c = homogenise_conductivity(moisture_mesh, bc, diffusivity, order, kind="moisture")
    return K_T, D_c


class MechanicalRve:
    """Mechanical RVE whose matrix phase is scaled by a retained fraction."""

    def __init__(self, mesh: Mesh, materials: Mapping, matrix_phase, bc=BcKind.PERIODIC, order: int = 2):
        self.mesh = mesh
        self.bc = BcKind.parse(bc)
        self.order = order
        self.matrix_tag = mesh.phase_tag(matrix_phase)
        if self.matrix_tag not in mesh.phase_tags:
            raise MaterialError(f"matrix phase {matrix_phase!r} has no elements in the RVE mesh")
        self.pristine = stiffness_field(mesh, materials, order)
        self.solves = 0
        self._lock = threading.Lock()

    def stiffness(self, w: float) -> np.ndarray:
        mats = dict(self.pristine)
        mats[self.matrix_tag] = apply_degradation(self.pristine[self.matrix_tag], w)
        tensor = homogenise_stiffness(self.mesh, self.bc, mats, self.order)
        with self._lock:
            self.solves += 1
        return 0.5 * (tensor.values + tensor.values.T)


class StiffnessCache:
    """Thread-safe memo of RVE stiffness keyed on quantised ``w``.

    Concurrent queries for the same key wait on a single solve.
    """

    def __init__(self, resolution: float = 1e-3):
        if not resolution > 0:
            raise ValueError("cache resolution must be positive")
        self.resolution = float(resolution)
        self.hits = 0
        self.misses = 0
        self._table: dict[int, Future] = {}
        self._lock = threading.Lock()

    def key(self, w: float) -> int:
        return max(int(round(w / self.resolution)), 1)

    def value_of(self, key: int) -> float:
        return min(key * self.resolution, 1.0)

    def get(self, w: float, compute) -> np.ndarray:
        k = self.key(w)
        with self._lock:
            fut = self._table.get(k)
            if fut is not None:
                self.hits += 1
                owner = False
            else:
                fut = self._table[k] = Future()
                self.misses += 1
                owner = True
        if owner:
            try:
                fut.set_result(compute(self.value_of(k)))
            except BaseException as exc:
                fut.set_exception(exc)
                with self._lock:
                    del self._table[k]
                raise
        return fut.result()

    def __len__(self) -> int:
        return len(self._table)

    def stats(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "entries": len(self), "resolution": self.resolution}


def gauss_point_stiffness(w: float, cache: StiffnessCache, rve: MechanicalRve) -> np.ndarray:
    """Homogenised 6x6 stiffness for a retained matrix fraction ``w``."""
    if not 0.0 < w <= 1.0:
        raise MaterialError(f"retained fraction must lie in (0, 1], got {w}")
    return cache.get(w, rve.stiffness)


def solve_macro_elasticity(
    mesh: Mesh,
    stiffness: np.ndarray,
    fixed: Mapping[str, Sequence],
    traction: Mapping[str, Sequence] | None = None,
) -> tuple[np.ndarray, float]:
    """Displacements (n_nodes, 3) and strain energy of a linear macro problem.

    ``stiffness`` is (m, nq, 6, 6) on the order-1 rule; ``fixed`` maps face
    sets to three prescribed components (``None`` leaves one free).
    """
    K = assemble_elasticity(mesh, stiffness, 1).tocsr()
    n = K.shape[0]
    f = np.zeros(n)
    for name, t in (traction or {}).items():
        f += assemble_traction_load(mesh, name, t, 1)
    values = {}
    for name, comps in fixed.items():
        nodes = np.unique(mesh.face_set(name))
        for c, v in enumerate(comps):
            if v is not None:
                for node in nodes.tolist():
                    values[3 * node + c] = float(v)
    if not values:
        raise SolverError("macro elasticity problem has no displacement constraints")
    dofs = np.array(sorted(values), dtype=np.int64)
    vals = np.array([values[d] for d in dofs.tolist()])
    free = np.ones(n, dtype=bool)
    free[dofs] = False
    u = np.zeros(n)
    u[dofs] = vals
    try:
        fac = SpdFactor(K[free][:, free])
    except SolverError as exc:
        raise SolverError(f"macro elasticity: constraints leave rigid modes free ({exc})") from None
    u[free] = fac.solve(f[free] - K[free][:, dofs] @ vals)
    energy = 0.5 * float(u @ (K @ u))
    return u.reshape(-1, 3), energy


@dataclass
class Fe2Result:
    times: np.ndarray
    temperature: np.ndarray  # (n_steps+1, n_nodes)
    moisture: np.ndarray
    damage: np.ndarray
    displacement: np.ndarray | None  # (n_steps+1, n_nodes, 3)
    energy: np.ndarray | None
    probes: dict[str, int]
    transport: tuple[HomogenisedTensor, HomogenisedTensor]
    cache: StiffnessCache | None
    timings: dict[str, float]
    files: list[Path] = field(default_factory=list)

    def probe_history(self, name: str) -> dict[str, np.ndarray]:
        i = self.probes[name]
        out = {"T": self.temperature[:, i], "c": self.moisture[:, i], "w": self.damage[:, i]}
        if self.displacement is not None:
            out["u"] = self.displacement[:, i, :]
        return out

    def summary(self) -> dict:
        K_T, D_c = self.transport
        return {
            "thermal_conductivity": K_T.values.tolist(),
            "moisture_diffusivity": D_c.values.tolist(),
            "n_steps": int(len(self.times) - 1),
            "final_time": float(self.times[-1]),
            "damage_range": [float(self.damage[-1].min()), float(self.damage[-1].max())],
            "strain_energy": None if self.energy is None else [float(e) for e in self.energy],
            "cache": None if self.cache is None else self.cache.stats(),
            "timings_s": {k: round(v, 6) for k, v in self.timings.items()},
        }


def _macro_capacity(spec, rve_mesh: Mesh) -> float:
    if np.isscalar(spec):
        return float(spec)
    vals = spec["volume_average"]
    vol = np.abs(rve_mesh.signed_volumes)
    total = 0.0
    for key, v in vals.items():
        total += v * vol[rve_mesh.phases == rve_mesh.phase_tag(key)].sum()
    covered = np.isin(rve_mesh.phases, [rve_mesh.phase_tag(k) for k in vals])
    if not covered.all():
        raise MaterialError("volume-averaged capacity needs a value for every RVE phase")
    return total / vol.sum()


def _rve_materials(mesh: Mesh, spec: Mapping, yarns: Sequence[Mapping], threads: int) -> dict:
    mats = {mesh.phase_tag(k): mechanical_material(v) for k, v in spec.items()}
    tags = [mesh.phase_tag(y["phase"]) for y in yarns]
    for y, tag in zip(yarns, tags):
        if not isinstance(mats.get(tag), TransverselyIsotropic):
            raise MaterialError(f"yarn phase {y['phase']!r} needs a transversely isotropic material")
    fields = solve_all_yarn_directions(mesh, [(t, y["inlet"], y["outlet"]) for y, t in zip(yarns, tags)], threads)
    for tag, d in zip(tags, fields):
        mats[tag] = OrientedMaterial(mats[tag], d.vectors)
    return mats


def run_fe2(config: Mapping, output_dir: str | Path | None = None, mechanics: bool | None = None) -> Fe2Result:
    """Run the coupled workflow described by a validated configuration."""
    timings: dict[str, float] = {}
    base = config.get("_base_dir", ".")
    out = output_dir if output_dir is not None else config.get("output_dir")
    out = Path(base, out) if out is not None and not Path(out).is_absolute() else (Path(out) if out else None)
    threads = int(config.get("threads", 1))
    sched_cfg = config["schedule"]
    schedule = CouplingSchedule(
        sched_cfg["dt"], sched_cfg["t_end"], sched_cfg.get("snapshot_stride", 1), sched_cfg.get("cache_resolution", 1e-3)
    )
    n_steps = schedule.n_steps

    t0 = time.perf_counter()
    macro = build_mesh(config["macro_mesh"], base)
    rcfg = config["rve"]
    rve_default = build_mesh(rcfg["mesh"], base)
    meshes = {
        kind: build_mesh(rcfg[f"{kind}_mesh"], base) if f"{kind}_mesh" in rcfg else rve_default
        for kind in ("thermal", "moisture", "mechanical")
    }
    bc = BcKind.parse(rcfg.get("bc", "periodic"))
    order = rcfg.get("order", 2)
    timings["meshes"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    K_T, D_c = precompute_transport_tensors(
        meshes["thermal"],
        meshes["moisture"],
        {k: transport_value(v) for k, v in rcfg["thermal"].items()},
        {k: transport_value(v) for k, v in rcfg["moisture"].items()},
        bc,
        order,
    )
    timings["transport_homogenisation"] = time.perf_counter() - t0

    tc, mc = config["thermal"], config["moisture"]
    thermal = TransientProblem(
        macro, K_T.values, _macro_capacity(tc.get("capacity", 1.0), meshes["thermal"]),
        tc.get("fixed", {}), tc.get("flux", {}), tc.get("time_scale", 1.0),
    )
    moisture = TransientProblem(
        macro, D_c.values, _macro_capacity(mc.get("capacity", 1.0), meshes["moisture"]),
        mc.get("fixed", {}), mc.get("flux", {}), mc.get("time_scale", 1.0),
    )
    dcfg = config["degradation"]
    Tg = dcfg["Tg_K"] if "Tg_K" in dcfg else dcfg["Tg_C"] + KELVIN_OFFSET
    beta = dcfg["beta"]

    mcfg = config["mechanics"]
    run_mech = mcfg.get("enabled", True) if mechanics is None else mechanics
    rve = cache = None
    if run_mech:
        t0 = time.perf_counter()
        mats = _rve_materials(meshes["mechanical"], rcfg["mechanical"], rcfg.get("yarns", []), threads)
        rve = MechanicalRve(meshes["mechanical"], mats, rcfg["matrix_phase"], bc, order)
        cache = StiffnessCache(schedule.cache_resolution)
        timings["rve_setup"] = time.perf_counter() - t0
    V = function_space(macro, 1)
    vals_q = V.basis.values  # (nq, 4)

    Ts = thermal.initial_state(tc["initial"], schedule.dt)
    Cs = moisture.initial_state(mc["initial"], schedule.dt)
    W = DamageField.undamaged(macro.n_nodes)
    pnodes = probe_nodes(macro, config.get("probes", {}))
    files: list[Path] = []

    hist_T, hist_c, hist_w, hist_u, energies = [Ts.field], [Cs.field], [W.values], [], []
    timings.update(transport_steps=0.0, damage=0.0, mechanics=0.0, output=0.0)

    def mechanics_step(w_nodal: np.ndarray):
        w_q = np.einsum("qa,ma->mq", vals_q, w_nodal[macro.tets])
        key_q = np.maximum(np.rint(w_q / cache.resolution).astype(np.int64), 1)
        keys = np.unique(key_q).tolist()
        if threads > 1 and len(keys) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                mats = list(pool.map(lambda k: gauss_point_stiffness(cache.value_of(k), cache, rve), keys))
        else:
            mats = [gauss_point_stiffness(cache.value_of(k), cache, rve) for k in keys]
        table = dict(zip(keys, mats))
        Cq = np.empty(w_q.shape + (6, 6))
        for k, C in table.items():
            Cq[key_q == k] = C
        return solve_macro_elasticity(macro, Cq, mcfg["fixed"], mcfg.get("traction", {}))

    def emit(step: int, u):
        if out is None:
            return
        pd = {"T": Ts.field, "c": Cs.field, "w": W.values}
        if u is not None:
            pd["displacement"] = u
        files.append(write_vtk(out / f"fe2_{step:05d}.vtk", macro, pd, title=f"t = {Ts.time:.9g}"))

    if run_mech:
        t0 = time.perf_counter()
        u, e = mechanics_step(W.values)
        hist_u.append(u)
        energies.append(e)
        timings["mechanics"] += time.perf_counter() - t0
    emit(0, hist_u[-1] if hist_u else None)

    for step in range(1, n_steps + 1):
        stage = "thermal"
        try:
            t0 = time.perf_counter()
            Ts = thermal.step(Ts)
            stage = "moisture"
            Cs = moisture.step(Cs)
            timings["transport_steps"] += time.perf_counter() - t0
            stage = "damage"
            t0 = time.perf_counter()
            c_nodal = np.clip(Cs.field, 0.0, 1.0)
            T_nodal = np.maximum(Ts.field, 0.0)
            W = step_damage(W, T_nodal, c_nodal, schedule.dt, beta, Tg)
            timings["damage"] += time.perf_counter() - t0
            if run_mech:
                stage = "mechanics"
                t0 = time.perf_counter()
                u, e = mechanics_step(W.values)
                hist_u.append(u)
                energies.append(e)
                timings["mechanics"] += time.perf_counter() - t0
        except Exception as exc:
            raise StepError(step, step * schedule.dt, stage, exc) from exc
        hist_T.append(Ts.field)
        hist_c.append(Cs.field)
        hist_w.append(W.values)
        if step % schedule.snapshot_stride == 0 or step == n_steps:
            t0 = time.perf_counter()
            emit(step, hist_u[-1] if hist_u else None)
            timings["output"] += time.perf_counter() - t0

    times = schedule.dt * np.arange(n_steps + 1)
    result = Fe2Result(
        times,
        np.array(hist_T),
        np.array(hist_c),
        np.array(hist_w),
        np.array(hist_u) if run_mech else None,
        np.array(energies) if run_mech else None,
        pnodes,
        (K_T, D_c),
        cache,
        timings,
        files,
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if pnodes:
            p = out / "fe2_probes.csv"
            with open(p, "w", newline="") as fh:
                wr = csv.writer(fh)
                header = ["time"]
                for name in pnodes:
                    header += [f"{name}_T", f"{name}_c", f"{name}_w"]
                    if run_mech:
                        header += [f"{name}_ux", f"{name}_uy", f"{name}_uz"]
                wr.writerow(header)
                for i, t in enumerate(times):
                    row = [f"{t:.9g}"]
                    for name, node in pnodes.items():
                        row += [f"{result.temperature[i, node]:.9g}", f"{result.moisture[i, node]:.9g}",
                                f"{result.damage[i, node]:.9g}"]
                        if run_mech:
                            row += [f"{x:.9g}" for x in result.displacement[i, node]]
                    wr.writerow(row)
            files.append(p)
        s = out / "fe2_summary.json"
        s.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
        files.append(s)
    return result
