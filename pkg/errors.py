"""Exception hierarchy for the solver, training pipeline and command-line tools."""
from typing import Optional

import numpy as np


class PinnFlowError(Exception):
    """Base class for all errors raised by pinnflow."""


class ConfigurationError(PinnFlowError, ValueError):
    """Invalid experiment, domain or sampling configuration."""


class ConfigParseError(ConfigurationError):
    """Malformed config text; carries the offending line number and key."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class InvalidArchitectureError(ConfigurationError):
    pass


class NonFiniteInputError(PinnFlowError, ValueError):
    pass


class InputShapeError(PinnFlowError, ValueError):
    pass


class EvaluationOverflowError(PinnFlowError, ArithmeticError):
    pass


class GradientUnavailableError(PinnFlowError, ArithmeticError):
    pass


class EmptySampleError(PinnFlowError, ValueError):
    pass


class OutOfDomainError(PinnFlowError, ValueError):
    pass


class PartitionError(ConfigurationError):
    pass


class InsufficientDerivativeOrderError(PinnFlowError, ValueError):
    pass


class EmptyTargetError(PinnFlowError, ValueError):
    pass


class DegenerateLossError(PinnFlowError, ValueError):
    pass


class StepRejectedError(PinnFlowError, ArithmeticError):
    pass


class NotADescentDirectionError(PinnFlowError, ValueError):
    pass


class InterfaceConsistencyError(PinnFlowError, ValueError):
    pass


class CheckpointIncompatibleError(PinnFlowError, ValueError):
    pass


class TrainingDivergedError(PinnFlowError, ArithmeticError):
    """Loss became non-finite; `last_params` holds the last finite flat parameter vector."""

    def __init__(self, message: str, last_params: np.ndarray, history=None):
        super().__init__(message)
        self.last_params = last_params
        self.history = history
