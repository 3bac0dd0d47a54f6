"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class FracYamabeError(Exception):
    """Base class for all package errors."""


class DimensionError(FracYamabeError, ValueError):
    """Dimension outside {1, 2} or n <= 2*gamma."""


class ResolutionError(FracYamabeError, ValueError):
    """Truncation below the supported floor."""


class GeometryMismatch(FracYamabeError, ValueError):
    """A field was combined with a geometry it does not belong to."""


class ModeOutOfRange(FracYamabeError, IndexError):
    """Mode index outside the truncated basis."""


class DecayError(FracYamabeError, ValueError):
    """Extension profile has not decayed at the outer radius."""


class SingularMeshError(FracYamabeError, ValueError):
    """Extension mesh does not resolve the degenerate boundary."""


class CalibrationError(FracYamabeError, RuntimeError):
    """Extension flux ratios disagree across modes."""


class PositivityError(FracYamabeError, ValueError):
    """A field that must be positive is not."""

    def __init__(self, message: str, location=None, value: float | None = None):
        super().__init__(message)
        self.location = location
        self.value = value


class ZeroFieldError(FracYamabeError, ValueError):
    """Quotient evaluated on the zero field."""


class StepFailure(FracYamabeError, RuntimeError):
    """Time step could not be completed after the allowed halvings."""

    def __init__(self, message: str, series=None):
        super().__init__(message)
        self.series = series


class BlowupError(FracYamabeError, RuntimeError):
    """Conformal factor exceeded the blow-up ceiling."""

    def __init__(self, message: str, series=None):
        super().__init__(message)
        self.series = series


class RangeError(FracYamabeError, ValueError):
    """Parameter outside the admissible range of a formula."""


class PoleError(FracYamabeError, ValueError):
    """Evaluation at the stereographic projection pole."""


class FitError(FracYamabeError, RuntimeError):
    """Bubble fit did not explain the concentrated mass."""


class ConvergenceError(FracYamabeError, RuntimeError):
    """Dense eigensolver failed."""


class DegenerateError(FracYamabeError, ValueError):
    """Spectral gap at the coercivity threshold vanishes."""


class InsufficientDataError(FracYamabeError, ValueError):
    """Not enough usable rows for a diagnostic fit."""


class ConfigError(FracYamabeError, ValueError):
    """Invalid or incomplete run configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
