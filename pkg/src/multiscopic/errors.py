"""Exception types shared across the package."""


class MultiscopicError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(MultiscopicError):
    """A file does not conform to its declared on-disk format."""


class UnsupportedError(MultiscopicError):
    """The file is well formed but uses a feature this package does not handle."""


class InputError(MultiscopicError):
    """Caller passed inconsistent or out-of-contract arguments."""


class SpecError(MultiscopicError):
    """A scene specification is internally inconsistent or degenerate."""


class TrainingError(MultiscopicError):
    """Training aborted, e.g. because the loss became non-finite."""
