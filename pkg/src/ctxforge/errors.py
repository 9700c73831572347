"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DatasetError (and its
FormatError subclass) -> 3, NumericalError -> 4.
"""


class CtxforgeError(Exception):
    """Base class for all package errors."""


class InputError(CtxforgeError, ValueError):
    """A caller-supplied argument violates an operation's precondition."""


class ConfigError(CtxforgeError):
    """Invalid, conflicting, or unresolvable configuration."""


class DatasetError(CtxforgeError):
    """Asset or dataset content is missing or inconsistent."""


class FormatError(DatasetError):
    """A binary or text file does not match its declared format."""


class NumericalError(CtxforgeError):
    """A computation produced non-finite values."""
