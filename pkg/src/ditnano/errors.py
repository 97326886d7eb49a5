"""Exception hierarchy shared by every ditnano module."""


class DitNanoError(Exception):
    """Base class for all package errors."""


class ConfigError(DitNanoError, ValueError):
    """An architecture or run configuration violates its invariants."""


class DomainError(DitNanoError, ValueError):
    """A scalar argument lies outside the operation's domain."""


class ShapeError(DitNanoError, ValueError):
    """Tensor shapes are incompatible."""


class NumericError(DitNanoError, ArithmeticError):
    """A loss or gradient became non-finite."""


class PlanningError(DitNanoError):
    """No architecture fits the requested parameter budget."""

    def __init__(self, message: str, min_params: int | None = None):
        super().__init__(message)
        self.min_params = min_params


class PlanError(DitNanoError, ValueError):
    """A layer/timestep mapping is malformed for the model it targets."""


class StateError(DitNanoError, ValueError):
    """Two weight sets that must share keys do not."""


class SetupError(DitNanoError, ValueError):
    """A teaching-assistant setup is inconsistent with the student."""


class FitError(DitNanoError):
    """The latency design matrix cannot be fit."""

    def __init__(self, message: str, deficient_terms: list[str] | None = None):
        super().__init__(message)
        self.deficient_terms = deficient_terms or []


class ValidationError(DitNanoError, ValueError):
    """A parsed record violates an invariant."""


class FormatError(DitNanoError):
    """A binary or text file does not match its declared layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(NumericError):
    """Training produced a non-finite loss; carries the last finite state."""

    def __init__(self, message: str, step: int, last_good=None):
        super().__init__(message)
        self.step = step
        self.last_good = last_good
