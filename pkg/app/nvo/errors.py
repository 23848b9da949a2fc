class NvoError(Exception):
    """Base class for every error raised by the nvo package."""


class DatasetError(NvoError, ValueError):
    """Input data is empty, too short, non-finite or unparseable."""


class ConfigError(NvoError, ValueError):
    """A parameter is outside its admissible range."""


class DimensionError(NvoError, ValueError):
    """Bin counts, plan lengths or indices do not line up."""
