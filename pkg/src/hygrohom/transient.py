"""Macro-scale transient conduction/diffusion with backward Euler.

Solves ``Ccap dpsi/dt + K psi = f`` on an order-1 mesh, where ``K`` comes
from a (homogenised) conductivity or diffusivity tensor, ``Ccap`` from the
volumetric capacity ``rho c_p`` (1 for moisture) and ``f`` from prescribed
surface fluxes.  Prescribed values are imposed by elimination; the step
matrix ``Ccap/dt + K`` is factorised once per distinct ``dt``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from hygrohom.errors import SolverError
from hygrohom.fe.assembly import assemble_capacity, assemble_conductivity, assemble_flux_load
from hygrohom.fe.saddle import SpdFactor
from hygrohom.mesh import Mesh
from hygrohom.vtk import write_vtk

__all__ = [
    "TransientState",
    "TransientProblem",
    "TransientRun",
    "step_transient",
    "resolve_fixed",
    "probe_nodes",
    "run_transient",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TransientState:
    """Nodal field at a time, with the prescribed dofs it must honour."""

    field: np.ndarray
    time: float
    dt: float
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    step: int = 0


def resolve_fixed(mesh: Mesh, fixed: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and values of fixed-value face sets; later sets win at shared nodes."""
    values = {}
    for name, v in fixed.items():
        for node in np.unique(mesh.face_set(name)).tolist():
            values[node] = float(v)
    dofs = np.array(sorted(values), dtype=np.int64)
    return dofs, np.array([values[d] for d in dofs.tolist()])


def _step_factor(K: sp.spmatrix, Ccap: sp.spmatrix, dt: float, free: np.ndarray) -> SpdFactor:
    A = (Ccap / dt + K).tocsr()
    return SpdFactor(A[free][:, free])


def step_transient(state: TransientState, K, Ccap, f, cache: dict | None = None) -> TransientState:
    """One backward-Euler step ``(Ccap/dt + K) psi1 = Ccap/dt psi0 + f``.

    ``cache`` (optional) keeps the factorised step matrix keyed by ``dt`` so
    repeated steps of the same size reuse it.
    """
    dt = state.dt
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = K.shape[0]
    free = np.ones(n, dtype=bool)
    free[state.fixed_dofs] = False
    key = ("step", float(dt))
    fac = cache.get(key) if cache is not None else None
    if fac is None:
        fac = _step_factor(K, Ccap, dt, free)
        if cache is not None:
            cache[key] = fac
            cache["factorisations"] = cache.get("factorisations", 0) + 1
    coupling = cache.get(("coupling", float(dt))) if cache is not None else None
    if coupling is None:
        coupling = (Ccap / dt + K).tocsr()[free][:, state.fixed_dofs]
        if cache is not None:
            cache[("coupling", float(dt))] = coupling
    psi = np.empty(n)
    psi[state.fixed_dofs] = state.fixed_values
    rhs = (Ccap @ state.field / dt + f)[free] - coupling @ state.fixed_values
    psi[free] = fac.solve(rhs)
    return replace(state, field=psi, time=state.time + dt, step=state.step + 1)


class TransientProblem:
    """Assembled operators and boundary data for one transient field.

    ``time_scale`` multiplies ``K`` and ``f``; use it to run rates given per
    second on a time axis in days (``86400``).
    """

    def __init__(
        self,
        mesh: Mesh,
        conductivity,
        capacity=1.0,
        fixed: Mapping[str, float] | None = None,
        fluxes: Mapping[str, float] | None = None,
        time_scale: float = 1.0,
    ):
        self.mesh = mesh
        k = conductivity
        if not isinstance(k, Mapping):
            k = {t: k for t in mesh.phase_tags}
        self.K = assemble_conductivity(mesh, k, 1) * time_scale
        self.Ccap = assemble_capacity(mesh, capacity, 1)
        self.f = np.zeros(mesh.n_nodes)
        for name, q in (fluxes or {}).items():
            self.f += assemble_flux_load(mesh, name, q, 1) * time_scale
        self.fixed_dofs, self.fixed_values = resolve_fixed(mesh, fixed or {})
        self.cache: dict = {}

    @property
    def factorisations(self) -> int:
        return self.cache.get("factorisations", 0)

    def initial_state(self, value, dt: float) -> TransientState:
        psi = np.full(self.mesh.n_nodes, float(value)) if np.isscalar(value) else np.array(value, dtype=float)
        psi[self.fixed_dofs] = self.fixed_values
        return TransientState(psi, 0.0, float(dt), self.fixed_dofs, self.fixed_values)

    def step(self, state: TransientState, dt: float | None = None) -> TransientState:
        if dt is not None and dt != state.dt:
            state = replace(state, dt=float(dt))
        return step_transient(state, self.K, self.Ccap, self.f, self.cache)

    def steady_state(self) -> np.ndarray:
        """Solution of ``K psi = f`` with the prescribed values."""
        n = self.mesh.n_nodes
        if len(self.fixed_dofs) == 0:
            raise SolverError("steady problem is singular: no prescribed values, only flux conditions")
        free = np.ones(n, dtype=bool)
        free[self.fixed_dofs] = False
        psi = np.empty(n)
        psi[self.fixed_dofs] = self.fixed_values
        K = self.K.tocsr()
        rhs = self.f[free] - K[free][:, self.fixed_dofs] @ self.fixed_values
        psi[free] = SpdFactor(K[free][:, free]).solve(rhs)
        return psi

    def boundary_fluxes(self, psi: np.ndarray) -> np.ndarray:
        """Nodal reactions ``K psi - f`` (nonzero only at prescribed nodes at steady state)."""
        return self.K @ psi - self.f


def probe_nodes(mesh: Mesh, probes: Mapping[str, Sequence[float]]) -> dict[str, int]:
    """Nearest mesh node to each named probe point."""
    if not probes:
        return {}
    tree = cKDTree(mesh.nodes)
    return {name: int(tree.query(np.asarray(p, dtype=float))[1]) for name, p in probes.items()}


@dataclass
class TransientRun:
    final: TransientState
    snapshots: list[TransientState]
    steady_time: float | None
    probe_times: np.ndarray
    probe_values: dict[str, np.ndarray]
    factorisations: int
    files: list[Path] = field(default_factory=list)


def _write_probe_csv(path: Path, times, values: Mapping[str, np.ndarray]):
    names = list(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *names])
        for i, t in enumerate(times):
            w.writerow([f"{t:.9g}", *(f"{values[n][i]:.9g}" for n in names)])


def run_transient(
    problem: TransientProblem,
    initial,
    dt: float,
    t_end: float,
    snapshot_stride: int = 1,
    steady_tolerance: float = 1e-8,
    stop_at_steady: bool = False,
    probes: Mapping[str, Sequence[float]] | None = None,
    output_dir: str | Path | None = None,
    name: str = "field",
) -> TransientRun:
    """March from ``initial`` to ``t_end``; write VTK snapshots and probe CSV."""
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * t_end:
        raise ValueError(f"t_end = {t_end} is not a multiple of dt = {dt}")
    pnodes = probe_nodes(problem.mesh, probes or {})
    state = problem.initial_state(initial, dt)
    snaps = [state]
    times = [state.time]
    hist = {k: [state.field[v]] for k, v in pnodes.items()}
    steady = None
    files: list[Path] = []
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        files.append(write_vtk(out / f"{name}_{0:05d}.vtk", problem.mesh, {name: state.field}))
    for i in range(1, n_steps + 1):
        new = problem.step(state)
        change = np.linalg.norm(new.field - state.field) / max(np.linalg.norm(new.field), np.finfo(float).tiny)
        state = new
        times.append(state.time)
        for k, v in pnodes.items():
            hist[k].append(state.field[v])
        if steady is None and change < steady_tolerance:
            steady = state.time
            log.info("%s reached steady state at t=%g", name, steady)
        last = i == n_steps or (stop_at_steady and steady is not None)
        if i % snapshot_stride == 0 or last:
            snaps.append(state)
            if out is not None:
                files.append(write_vtk(out / f"{name}_{i:05d}.vtk", problem.mesh, {name: state.field}))
        if stop_at_steady and steady is not None:
            break
    probe_values = {k: np.array(v) for k, v in hist.items()}
    if out is not None and pnodes:
        p = out / f"{name}_probes.csv"
        _write_probe_csv(p, times, probe_values)
        files.append(p)
    return TransientRun(state, snaps, steady, np.array(times), probe_values, problem.factorisations, files)
