"""Exception types shared across the package."""


class GcnSizerError(Exception):
    """Base class for all package errors."""


class NetlistError(GcnSizerError):
    """Netlist text could not be parsed or violates a structural rule."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(GcnSizerError):
    """A configuration file or run configuration is invalid."""


class EvaluationError(GcnSizerError):
    """A simulator backend failed to produce metrics for a design."""


class CalibrationError(GcnSizerError):
    """Normalizer calibration failed (degenerate range or too many failures)."""


class AutodiffError(GcnSizerError):
    """Misuse of the differentiation stack (no forward pass, bad gradient)."""


class CheckpointError(GcnSizerError):
    """An agent checkpoint is incompatible with the requested topology."""
