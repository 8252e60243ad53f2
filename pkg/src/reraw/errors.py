"""Exception hierarchy.

Two broad families matter for the CLI exit codes: problems with user-supplied
inputs (missing files, unreadable images, empty datasets) and violations of
internal contracts (bad shapes, out-of-range values, inconsistent configs).
"""


class ReRawError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ReRawError, ValueError):
    """Array dimensions violate a geometric requirement (e.g. odd Bayer dims)."""


class ValueRangeError(ReRawError, ValueError):
    """Array values fall outside the documented range."""


class ParameterError(ReRawError, ValueError):
    """A scalar parameter is out of its legal domain."""


class ShapeError(ReRawError, ValueError):
    """Two arrays that must agree in shape do not."""


class ConfigError(ReRawError, ValueError):
    """A configuration object violates one of its invariants."""


class DatasetError(ReRawError, RuntimeError):
    """A dataset is empty, unreadable, or internally inconsistent."""


class InputError(ReRawError, RuntimeError):
    """A user-supplied input file or argument cannot be used."""


class CheckpointError(ReRawError, RuntimeError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class TrainingDivergedError(ReRawError, RuntimeError):
    """Training hit a non-finite loss; carries last-batch diagnostics."""
