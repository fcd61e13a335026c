"""Exception hierarchy shared across the package."""


class TrajCNNError(Exception):
    """Base class for all package errors."""


class FormatError(TrajCNNError, ValueError):
    """Input file is missing structure we depend on (e.g. a column)."""


class ParseError(TrajCNNError, ValueError):
    """A cell or record could not be converted to a number."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ShapeError(TrajCNNError, ValueError):
    """Array shape does not match what a layer expects."""


class TrainingError(TrajCNNError, RuntimeError):
    """Non-finite loss/gradient or similar numerical failure during training."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class ConfigurationError(TrajCNNError, ValueError):
    """Invalid or infeasible configuration."""


class CheckpointError(TrajCNNError, ValueError):
    """Checkpoint file is unreadable or has an unsupported version."""
