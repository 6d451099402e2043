"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A domain object violates one of its invariants."""


class DataFormatError(ValueError):
    """A serialized file is malformed, truncated, or of the wrong version."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values (training divergence etc.)."""
