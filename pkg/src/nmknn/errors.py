"""Exception taxonomy shared across the package.

Three buckets, mirroring the CLI exit codes: bad arguments or
incompatible configuration (exit 1), malformed or mismatched data files
(exit 2), and everything else (exit 3, internal).
"""


class InvalidArgumentError(ValueError):
    """A precondition on an operation's arguments was violated."""


class ConfigError(InvalidArgumentError):
    """An experiment configuration references an incompatible combination."""


class DataFormatError(ValueError):
    """A file or byte stream does not conform to its declared format."""
