"""Exception types shared across the package."""


class FedBeamError(Exception):
    """Base class for package-specific failures."""


class FormatError(FedBeamError):
    """A binary file does not match the expected layout (bad magic, version,
    or truncated header). Carries the byte offset of the first bad field."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IntegrityError(FedBeamError):
    """Structurally valid file whose contents contradict its own header
    (truncated payload, count mismatch, incompatible checkpoint spec)."""


class IngestError(FedBeamError):
    """External data directory is missing required arrays or is inconsistent."""


class NumericError(FedBeamError):
    """Training produced non-finite values; carries where it happened."""


class MetricUnavailableError(FedBeamError):
    """A metric cannot be computed from the given data (e.g. throughput
    ratio without per-sample beam powers). Distinct from a compute error."""
