"""
Structured exceptions for SETGen.

Every error carries a short ``kind`` tag and the process exit code the CLI
uses when the error escapes a command.
"""


class SetGenError(Exception):
    """Base class for all SETGen errors."""

    kind = 'error'
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        """
        Serialize the error for machine-readable output.

        Returns:
            dict: kind, message and any structured details
        """
        payload = {'kind': self.kind, 'message': str(self)}
        payload.update(self.details)
        return payload


class ConfigError(SetGenError, ValueError):
    """Invalid configuration or option value."""

    kind = 'config'
    exit_code = 2


class ShapeError(SetGenError, ValueError):
    """Tensor shape mismatch; ``dimension`` names the offending axis."""

    kind = 'shape'
    exit_code = 3

    def __init__(self, message, dimension=None, **details):
        super().__init__(message, dimension=dimension, **details)
        self.dimension = dimension


class GeometryError(ShapeError):
    """Volumes or fields that should share a voxel grid do not."""

    kind = 'geometry'


class DataFormatError(SetGenError, ValueError):
    """A file on disk is malformed, truncated or of an unsupported type."""

    kind = 'data'
    exit_code = 3


class CheckpointError(DataFormatError):
    """A model checkpoint is missing, corrupt or of the wrong kind."""

    kind = 'checkpoint'


class NumericalError(SetGenError, ArithmeticError):
    """Non-finite values or a diverging optimization."""

    kind = 'numerical'
    exit_code = 4
