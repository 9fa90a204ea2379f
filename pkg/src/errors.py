"""
Error Hierarchy

Structured exceptions raised by the library. Every error carries a
diagnostics dictionary and the process exit code the CLI maps it to:

    2  usage / parameter / precondition / resolution problems
    3  certification, calibration and geometric contract failures
    4  statistical indeterminacy of a stopping decision
"""

from typing import Any, Dict


class CoronaError(Exception):
    """Base class for all library errors.

    Attributes:
        diagnostics: Structured context (measured values, offending ids)
        exit_code: Process exit status used by the CLI
    """

    exit_code: int = 1

    def __init__(self, message: str, **diagnostics: Any) -> None:
        super().__init__(message)
        self.message = message
        self.diagnostics: Dict[str, Any] = diagnostics

    def to_dict(self) -> Dict[str, Any]:
        """Serializable view used in CLI error output."""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "diagnostics": self.diagnostics,
        }


# ============================================================================
# Usage errors (exit code 2)
# ============================================================================


class UsageError(CoronaError):
    """Invalid configuration or command-line usage."""

    exit_code = 2


class ParameterError(UsageError):
    """A numeric parameter lies outside its admissible range."""


class PreconditionError(UsageError):
    """An operation was called outside its precondition."""


class SingularityError(PreconditionError):
    """Evaluation point coincides with a singularity of a kernel."""


class ResolutionError(UsageError):
    """Requested resolution exceeds what the representation can resolve."""


# ============================================================================
# Certification errors (exit code 3)
# ============================================================================


class CertificationError(CoronaError):
    """A measured quantity failed its certification bound."""

    exit_code = 3


class CalibrationError(CertificationError):
    """A calibrated constant could not be brought inside its gate."""


class CorkscrewViolation(CertificationError):
    """No interior ball was found at the declared corkscrew constant."""


class GeometryError(CertificationError):
    """A geometric construction violates its containment or separation."""


class SolverError(CertificationError):
    """A linear solve failed or did not meet its residual tolerance."""


class NoisyEstimateError(CertificationError):
    """Monte Carlo noise exceeds the tolerance of a derived quantity."""


class ContractViolation(CertificationError):
    """An internal consistency contract (DAG, exclusivity, ...) failed."""


# ============================================================================
# Indeterminacy (exit code 4)
# ============================================================================


class IndeterminacyError(CoronaError):
    """Confidence intervals straddle a threshold after the budget cap."""

    exit_code = 4
