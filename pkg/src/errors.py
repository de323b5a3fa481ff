"""
Exception hierarchy shared by the stereo pipeline.

Library code raises these; the CLI layer converts them into result
dictionaries and exit codes.
"""


class RRESMError(Exception):
    """Base class for every error raised by this package."""

    error_type = "rresm_error"


class ShapeError(RRESMError, ValueError):
    """Tensor extents or channel counts do not fit an operation."""

    error_type = "shape_error"


class ContractError(RRESMError, ValueError):
    """A documented precondition was violated."""

    error_type = "contract_error"


class EmptyMaskError(ContractError):
    """A reduction over a validity mask found no valid pixel."""

    error_type = "empty_mask"


class FormatError(RRESMError):
    """A file could not be parsed (PFM, image, manifest, calibration)."""

    error_type = "format_error"


class CheckpointError(FormatError):
    """A checkpoint is corrupt or does not match the model."""

    error_type = "checkpoint_error"


class ConfigError(RRESMError, ValueError):
    """Invalid configuration key or value."""

    error_type = "config_error"
