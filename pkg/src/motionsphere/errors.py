"""Exception hierarchy shared across the package.

CLI exit codes map onto these: DataError -> 2, NumericError -> 3,
anything argument-shaped -> 1.
"""


class MotionsphereError(Exception):
    """Base class for all package errors."""


class DataError(MotionsphereError):
    """Bad input data: files, shapes, degenerate sequences."""


class ParseError(DataError):
    """Malformed sequence or manifest file; carries line/field context."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class ShapeError(DataError):
    """Array shapes inconsistent with the declared topology or batch."""


class DegenerateMotionError(DataError):
    """Zero-norm sequence or SRVF where a nonzero one is required."""


class NumericError(MotionsphereError):
    """Numeric failures: singularities, divergence, NaN."""


class SingularityError(NumericError):
    """Antipodal pair or other manifold singularity."""


class ConvergenceError(NumericError):
    """Iterative solver failed to reach tolerance; carries the residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class TrainingDivergedError(NumericError):
    """Non-finite loss encountered during training; carries epoch/iteration."""

    def __init__(self, message: str, epoch: int, iteration: int):
        super().__init__(f"{message} (epoch={epoch}, iteration={iteration})")
        self.epoch = epoch
        self.iteration = iteration


class StateError(MotionsphereError):
    """Operation requires a prepared/trained state that is missing."""


class CapabilityError(MotionsphereError):
    """Network uses a layer outside the supported restricted op set."""


class AlignmentError(ValueError, MotionsphereError):
    """Horizon does not land on a frame boundary; carries valid options."""
