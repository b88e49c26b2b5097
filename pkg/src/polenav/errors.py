"""Exception hierarchy shared by the library and the command-line driver.

Each family maps onto one CLI exit code (see ``polenav.cli``).
"""


class PolenavError(Exception):
    """Base class for all errors raised by polenav."""


class ConfigError(PolenavError, ValueError):
    """A configuration value violates its documented bound.

    ``field`` carries the dotted path of the offending field when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        self.reason = message
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class CalibrationError(PolenavError, ValueError):
    pass


class AnchorError(PolenavError, ValueError):
    """Anchoring was requested for an observation with no pole projection."""


class EmptySubsetError(PolenavError, ValueError):
    def __init__(self, subset):
        self.subset = subset
        super().__init__(f"training subset '{subset}' is empty")


class MissingArtifactError(PolenavError, FileNotFoundError):
    def __init__(self, path, stage=None):
        self.path = str(path)
        msg = f"missing artifact: {self.path}"
        if stage:
            msg += f" (run `polenav {stage}` first)"
        super().__init__(msg)


class FormatError(PolenavError, ValueError):
    """Base class for malformed persisted data."""


class MagicMismatchError(FormatError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"bad magic: expected {expected!r}, found {found!r}")


class UnsupportedVersionError(FormatError):
    def __init__(self, version, supported):
        self.version = version
        super().__init__(f"unsupported format version {version} (supported: {supported})")


class TruncatedFileError(FormatError):
    def __init__(self, needed, available, what="record"):
        super().__init__(f"truncated file while reading {what}: needed {needed} bytes, {available} left")


class CSVParseError(FormatError):
    def __init__(self, line, reason):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class NotFoundError(PolenavError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class InvariantViolation(PolenavError, RuntimeError):
    pass


class ArtifactAccessError(PolenavError, PermissionError):
    """A forbidden artifact (e.g. test-domain data during training) was opened."""
