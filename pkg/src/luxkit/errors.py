"""Exception hierarchy shared by all luxkit modules."""


class LuxkitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(LuxkitError):
    """A binary file is not in the expected format (bad magic, version, or truncation)."""


class DataError(LuxkitError):
    """Input data violates the corpus or alignment contract (bad record, missing id, ...)."""


class ConfigError(LuxkitError):
    """Inconsistent configuration: dimension mismatches, tokenizer mismatches, bad parameters."""
