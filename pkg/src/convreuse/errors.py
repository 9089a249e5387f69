"""Exception types shared across the harness."""


class ConvReuseError(Exception):
    """Base class for all harness errors."""


class ShapeMismatchError(ConvReuseError):
    """Tensor shapes do not satisfy an operation's contract."""


class InfeasibleArchitectureError(ConvReuseError):
    """A hyperparameter configuration produces a nonpositive feature-map size."""


class DataFormatError(ConvReuseError):
    """A dataset file violates the binary record layout."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class SplitError(ConvReuseError):
    """A dataset split request is empty or inconsistent."""


class GridFileError(ConvReuseError):
    """A grid definition file cannot be parsed."""


class ReuseNotPossibleError(ConvReuseError):
    """The configuration has a single conv layer, so there is nothing to reuse."""


class IncompatibleShapesError(ConvReuseError):
    """Source and target layer shapes do not chain."""


class ArchiveError(ConvReuseError):
    """Base class for weight-archive failures."""


class DuplicateRecordError(ArchiveError):
    """A weight record for this config id already exists (archive is write-once)."""


class MissingRecordError(ArchiveError):
    """No weight record stored under this config id."""


class CorruptRecordError(ArchiveError):
    """A stored weight record fails its integrity checks (magic/version/CRC)."""


class DependencyError(ConvReuseError):
    """A trial requires a baseline record that is not available."""


class ConfigNameError(ConvReuseError):
    """A network name does not follow CNN_<ncl>_<nfcl>_<nrl> or violates its bounds."""
