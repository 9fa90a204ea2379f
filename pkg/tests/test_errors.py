"""
Tests for the Error Hierarchy

Run tests with: pytest tests/test_errors.py
"""

import json

import pytest

from src.errors import (
    CalibrationError,
    CertificationError,
    ContractViolation,
    CoronaError,
    CorkscrewViolation,
    GeometryError,
    IndeterminacyError,
    NoisyEstimateError,
    ParameterError,
    PreconditionError,
    ResolutionError,
    SingularityError,
    SolverError,
    UsageError,
)


@pytest.mark.parametrize(
    "cls, code",
    [
        (UsageError, 2),
        (ParameterError, 2),
        (PreconditionError, 2),
        (SingularityError, 2),
        (ResolutionError, 2),
        (CertificationError, 3),
        (CalibrationError, 3),
        (CorkscrewViolation, 3),
        (GeometryError, 3),
        (SolverError, 3),
        (NoisyEstimateError, 3),
        (ContractViolation, 3),
        (IndeterminacyError, 4),
    ],
)
def test_exit_codes(cls, code):
    """Every error maps to its documented process exit code."""
    assert cls("x").exit_code == code
    assert issubclass(cls, CoronaError)


def test_singularity_is_precondition():
    with pytest.raises(PreconditionError):
        raise SingularityError("on a node")


def test_to_dict_carries_diagnostics():
    """The serialized form names the class and keeps the diagnostics."""
    exc = ParameterError("lambda must lie in (0, 1/2)", lam=0.6)

    data = exc.to_dict()

    assert data == {
        "error": "ParameterError",
        "message": "lambda must lie in (0, 1/2)",
        "exit_code": 2,
        "diagnostics": {"lam": 0.6},
    }
    assert json.loads(json.dumps(data)) == data


def test_message_is_exception_text():
    exc = IndeterminacyError("undecidable", mass=0.2)
    assert str(exc) == "undecidable"
    assert exc.diagnostics["mass"] == 0.2
