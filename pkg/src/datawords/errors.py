"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, everything else
derived from DataWordsError -> 1.
"""


class DataWordsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DataWordsError):
    """Bad configuration: invalid parameters, missing files, unusable setups."""


class DataError(DataWordsError):
    """Malformed or invalid input data (parse and validation failures)."""


class InputError(DataWordsError):
    """Programmatic misuse of an operation (misaligned or empty inputs)."""


class UnsupportedVersionError(ConfigError):
    """A serialized artifact declares a format version this build cannot read."""


class UnresolvedVariableError(DataWordsError):
    """A numeric variable has neither explicit cuts nor training statistics."""
