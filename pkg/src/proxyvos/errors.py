"""Exception taxonomy shared by the library and the CLI.

The CLI maps these onto exit codes: usage/argument problems -> 2,
data/format/IO problems -> 3, configuration problems -> 4.
"""


class DimensionError(ValueError):
    """Operands have incompatible spatial or channel dimensions."""


class DataError(Exception):
    """A dataset, mask, or prediction file is missing or inconsistent."""


class FormatError(DataError):
    """A file exists but is not in the expected format."""


class ConfigError(Exception):
    """A configuration value or weight bundle does not match what is required."""
