class ReprobenchError(Exception):
    """Base class for all harness errors."""


class DataError(ReprobenchError, ValueError):
    """Input data is malformed or unusable."""


class ProtocolError(DataError):
    """A preprocessing protocol cannot produce a usable p-dataset."""


class ConfigError(ReprobenchError, ValueError):
    """A configuration file or argument is invalid."""


class TrainingError(ReprobenchError, RuntimeError):
    pass


class NoSuccessfulProtocols(ReprobenchError):
    """Every protocol of a grid was skipped."""
