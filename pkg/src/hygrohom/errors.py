"""Exception types shared across modules."""

from hygrohom.mesh import MeshParseError, MeshValidationError, PairingError

__all__ = [
    "MeshParseError",
    "MeshValidationError",
    "PairingError",
    "MaterialError",
    "SolverError",
    "FittingError",
    "DegradationDomainError",
    "YarnFlowError",
    "ConfigError",
    "StepError",
]


class MaterialError(ValueError):
    """Invalid constitutive data (non-SPD matrix, out-of-range constants)."""


class SolverError(RuntimeError):
    """A linear system could not be solved to the required accuracy."""


class FittingError(RuntimeError):
    """A parameter fit failed to converge inside its bracket."""


class DegradationDomainError(ValueError):
    """Temperature or concentration outside the degradation model's domain."""


class YarnFlowError(RuntimeError):
    """The yarn potential-flow problem is singular or yields no direction."""


class ConfigError(ValueError):
    """Run configuration failed validation; ``problems`` lists every issue."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class StepError(RuntimeError):
    """A coupled time step failed; names the step, time and stage."""

    def __init__(self, step: int, time: float, stage: str, cause: BaseException):
        self.step, self.time, self.stage, self.cause = step, time, stage, cause
        super().__init__(f"time step {step} (t = {time:.9g}), stage {stage}: {type(cause).__name__}: {cause}")
