"""Hygro-thermal degradation model: fitting and damage evolution.

The retained stiffness fraction ``w = 1 - omega`` of the polymer matrix
obeys ``dw/dt = -k w`` with rate ``k = gamma(c) * beta * ln(1 - T/Tg)``,
where ``gamma(c) = c`` is the moisture factor, ``T`` is in kelvin and time
is in days.  With ``beta < 0`` and ``T < Tg`` the rate is nonnegative, so
``w`` decays.  At constant exposure ``G(t) = G0 * exp(-k t)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from hygrohom.errors import DegradationDomainError, FittingError
from hygrohom.fe.assembly import assemble_mass
from hygrohom.fe.space import function_space
from hygrohom.mesh import Mesh

__all__ = [
    "KELVIN_OFFSET",
    "ExperimentSeries",
    "DegradationParams",
    "DamageField",
    "AlphaFit",
    "BetaFit",
    "FitReport",
    "read_experiments",
    "fit_alpha",
    "fit_beta",
    "fit_degradation",
    "gamma",
    "alpha_of_T",
    "degradation_rate",
    "predict_G",
    "step_damage",
    "integrate_damage",
    "assemble_damage_residual_jacobian",
]

log = logging.getLogger(__name__)

KELVIN_OFFSET = 273.15


@dataclass(frozen=True)
class ExperimentSeries:
    """Stiffness samples at one exposure temperature (deg C)."""

    temperature_C: float
    times: np.ndarray  # days
    G: np.ndarray  # GPa

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        g = np.asarray(self.G, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "G", g)
        if t.shape != g.shape or t.ndim != 1:
            raise ValueError("times and G must be 1-D arrays of equal length")
        if np.any(t < 0):
            raise ValueError(f"series at {self.temperature_C} C: times must be nonnegative")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"series at {self.temperature_C} C: times must be strictly increasing")
        if np.any(g <= 0):
            raise ValueError(f"series at {self.temperature_C} C: G must be positive")

    @property
    def temperature_K(self) -> float:
        return self.temperature_C + KELVIN_OFFSET


@dataclass(frozen=True)
class DegradationParams:
    G0: float  # GPa
    Tg: float  # kelvin
    beta: float  # 1/day per unit log
    alpha_by_temp: Mapping[float, float] = field(default_factory=dict)  # deg C -> 1/day

    def __post_init__(self):
        if not self.G0 > 0:
            raise DegradationDomainError(f"G0 must be positive, got {self.G0}")
        if not self.Tg > 0:
            raise DegradationDomainError(f"Tg must be positive (kelvin), got {self.Tg}")
        for T_C, a in self.alpha_by_temp.items():
            if T_C + KELVIN_OFFSET >= self.Tg:
                raise DegradationDomainError(f"exposure temperature {T_C} C is not below Tg = {self.Tg} K")
            if not a > 0:
                raise DegradationDomainError(f"alpha at {T_C} C must be positive, got {a}")


@dataclass(frozen=True, eq=False)
class DamageField:
    """Nodal retained-stiffness fraction ``1 - omega`` at a time (days)."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.size and not (np.all(v > 0) and np.all(v <= 1.0)):
            raise DegradationDomainError(
                f"damage field must lie in (0, 1]; range is [{v.min():.6g}, {v.max():.6g}]"
            )

    @classmethod
    def undamaged(cls, n_nodes: int) -> "DamageField":
        return cls(np.ones(n_nodes), 0.0)


# ---------------------------------------------------------------------------
# experiment data and fitting
# ---------------------------------------------------------------------------


def read_experiments(path: str | Path, exclude=()) -> dict[float, ExperimentSeries]:
    """Read ``temperature_C,time_days,G_GPa`` rows, grouped by temperature.

    Temperatures listed in ``exclude`` are dropped.
    """
    groups: dict[float, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"temperature_C", "time_days", "G_GPa"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                T, t, G = float(row["temperature_C"]), float(row["time_days"]), float(row["G_GPa"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
            groups.setdefault(T, []).append((t, G))
    skip = {float(x) for x in exclude}
    out = {}
    for T in sorted(groups):
        if T in skip:
            continue
        samples = sorted(groups[T])
        out[T] = ExperimentSeries(T, np.array([s[0] for s in samples]), np.array([s[1] for s in samples]))
    return out


@dataclass(frozen=True)
class AlphaFit:
    temperature_C: float
    alpha: float
    residual: float  # sum of squared errors, GPa^2
    bracket: tuple[float, float]


@dataclass(frozen=True)
class BetaFit:
    beta: float
    residual: float  # sum of squared alpha errors
    temperatures_K: np.ndarray
    alphas: np.ndarray


def fit_alpha(series: ExperimentSeries, G0: float) -> AlphaFit:
    """Least-squares rate of ``G0 * exp(-alpha t)`` through a series."""
    if len(series.times) < 2:
        raise FittingError(f"series at {series.temperature_C} C needs at least 2 samples")
    if not G0 > 0:
        raise FittingError(f"G0 must be positive, got {G0}")
    t, G = series.times, series.G
    tmax = float(t.max())
    if tmax == 0:
        raise FittingError("all samples are at t = 0; the rate is undetermined")

    def sse(a):
        return float(np.sum((G - G0 * np.exp(-a * t)) ** 2))

    lo, hi = -5.0 / tmax, 50.0 / tmax
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14, "maxiter": 2000})
    a = float(res.x)
    edge = 1e-6 * (hi - lo)
    if not res.success or a - lo < edge or hi - a < edge:
        raise FittingError(
            f"alpha fit at {series.temperature_C} C did not converge inside the bracket "
            f"[{lo:.6g}, {hi:.6g}] (last iterate {a:.6g}, status {res.status}: {res.message})"
        )
    return AlphaFit(series.temperature_C, a, sse(a), (lo, hi))


def _log_factor(T_K, Tg: float) -> np.ndarray:
    T = np.asarray(T_K, dtype=float)
    if np.any(T < 0):
        raise DegradationDomainError(f"temperatures must be nonnegative kelvin, got min {T.min()}")
    if np.any(T >= Tg):
        raise DegradationDomainError(
            f"temperature {T.max():.6g} K is not below Tg = {Tg:.6g} K; the degradation rate diverges"
        )
    return np.log1p(-T / Tg)


def fit_beta(alpha_by_temp_C: Mapping[float, float], Tg: float) -> BetaFit:
    """Closed-form least squares for ``alpha(T) = beta ln(1 - T/Tg)``.

    Temperatures are keys in deg C and are converted to kelvin; ``Tg`` is
    in kelvin.
    """
    if len(alpha_by_temp_C) == 0:
        raise FittingError("at least one (temperature, alpha) pair is required")
    T = np.array([float(k) for k in alpha_by_temp_C]) + KELVIN_OFFSET
    a = np.array([float(v) for v in alpha_by_temp_C.values()])
    L = _log_factor(T, Tg)
    beta = float(np.dot(a, L) / np.dot(L, L))
    return BetaFit(beta, float(np.sum((a - beta * L) ** 2)), T, a)


@dataclass(frozen=True)
class FitReport:
    params: DegradationParams
    alpha_fits: list[AlphaFit]
    beta_fit: BetaFit
    excluded: tuple = ()

    def text(self) -> str:
        lines = [
            f"G0_GPa: {self.params.G0:.9g}",
            f"Tg_K: {self.params.Tg:.9g}",
            "alpha_by_temperature:",
        ]
        for f in self.alpha_fits:
            lines.append(f"  {f.temperature_C:.9g} C: alpha={f.alpha:.9g} 1/day  sse={f.residual:.9g} GPa^2")
        if self.excluded:
            lines.append("excluded_temperatures_C: " + ", ".join(f"{x:.9g}" for x in self.excluded))
        lines.append(f"beta: {self.beta_fit.beta:.9g}")
        lines.append(f"beta_residual: {self.beta_fit.residual:.9g}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "G0_GPa": self.params.G0,
            "Tg_K": self.params.Tg,
            "beta": self.beta_fit.beta,
            "beta_residual": self.beta_fit.residual,
            "alpha_by_temperature_C": {str(f.temperature_C): f.alpha for f in self.alpha_fits},
            "alpha_residuals": {str(f.temperature_C): f.residual for f in self.alpha_fits},
            "excluded_temperatures_C": list(self.excluded),
        }


def fit_degradation(
    series: Mapping[float, ExperimentSeries], G0: float, Tg: float, excluded=()
) -> FitReport:
    """Fit alpha per series and then beta; ``Tg`` in kelvin."""
    fits = [fit_alpha(s, G0) for _, s in sorted(series.items())]
    alphas = {f.temperature_C: f.alpha for f in fits}
    beta = fit_beta(alphas, Tg)
    params = DegradationParams(G0, Tg, beta.beta, alphas)
    return FitReport(params, fits, beta, tuple(excluded))


# ---------------------------------------------------------------------------
# model evaluation
# ---------------------------------------------------------------------------


def gamma(c):
    """Moisture factor; linear in the concentration fraction."""
    return np.asarray(c, dtype=float)


def alpha_of_T(beta: float, T_K, Tg: float):
    """Degradation rate ``beta ln(1 - T/Tg)`` at full moisture."""
    return beta * _log_factor(T_K, Tg)


def degradation_rate(T_K, c, beta: float, Tg: float) -> np.ndarray:
    """Rate ``k = gamma(c) beta ln(1 - T/Tg)`` (1/day); nonnegative for beta < 0."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or np.any(c > 1):
        raise DegradationDomainError("moisture fraction c must lie in [0, 1]")
    return gamma(c) * beta * _log_factor(T_K, Tg)


def predict_G(params: DegradationParams, T_K, c, t):
    """Shear modulus (GPa) after ``t`` days at constant ``T`` (K) and ``c``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DegradationDomainError("time must be nonnegative")
    k = degradation_rate(T_K, c, params.beta, params.Tg)
    out = params.G0 * np.exp(-k * t)
    return float(out) if np.ndim(out) == 0 else out


def step_damage(field: DamageField, T_K, c, dt: float, beta: float, Tg: float) -> DamageField:
    """One backward-Euler step of ``dw/dt = -k w`` at every node."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    k = degradation_rate(T_K, c, beta, Tg)
    denom = 1.0 + dt * k
    assert np.all(denom > 0), "nonpositive backward-Euler denominator"
    return DamageField(field.values / denom, field.time + dt)


def integrate_damage(field: DamageField, T_K, c, dt: float, t_end: float, beta: float, Tg: float):
    """Constant-exposure trajectory; returns (times, values (n_steps+1, n))."""
    n = int(round((t_end - field.time) / dt))
    if n < 1 or abs(field.time + n * dt - t_end) > 1e-9 * max(abs(t_end), 1.0):
        raise ValueError("t_end - t0 must be a positive multiple of dt")
    times = [field.time]
    vals = [field.values]
    for _ in range(n):
        field = step_damage(field, T_K, c, dt, beta, Tg)
        times.append(field.time)
        vals.append(field.values)
    return np.array(times), np.array(vals)


def assemble_damage_residual_jacobian(
    mesh: Mesh,
    w,
    T_K,
    c,
    beta: float,
    Tg: float,
    shift: float,
    w_dot=None,
    lumped: bool = False,
):
    """Residual ``F`` and Jacobian ``J`` of the projected damage ODE.

    ``F = M w_dot + K_k w`` with ``M`` the mass matrix and ``K_k`` the mass
    matrix weighted by the rate ``k`` evaluated from interpolated ``T`` and
    ``c`` at quadrature points.  The integrator supplies ``w_dot`` with
    ``d(w_dot)/dw = shift``, so ``J = shift * M + K_k``.  With ``lumped``
    both operators are diagonal with nodal rates, and a backward-Euler
    solve reproduces :func:`step_damage` exactly.
    """
    V = function_space(mesh, 1)
    n = V.n_dofs
    w = np.asarray(w, dtype=float)
    T_K = np.asarray(T_K, dtype=float)
    c = np.asarray(c, dtype=float)
    w_dot = np.zeros(n) if w_dot is None else np.asarray(w_dot, dtype=float)
    for name, v in (("w", w), ("T", T_K), ("c", c), ("w_dot", w_dot)):
        if v.shape != (n,):
            raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
    if lumped:
        m = np.asarray(assemble_mass(mesh, np.ones((mesh.n_elements, V.rule.size)), V).sum(axis=1)).ravel()
        k = degradation_rate(T_K, c, beta, Tg)
        F = m * (w_dot + k * w)
        J = sp.diags(m * (shift + k), format="csr")
        return F, J
    M = assemble_mass(mesh, np.ones((mesh.n_elements, V.rule.size)), V)
    k_q = degradation_rate(V.evaluate(T_K), np.clip(V.evaluate(c), 0.0, 1.0), beta, Tg)
    Kk = assemble_mass(mesh, k_q, V)
    F = M @ w_dot + Kk @ w
    J = (shift * M + Kk).tocsr()
    return F, J
