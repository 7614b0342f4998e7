"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else derived from EngineError -> 4.
"""


class EngineError(Exception):
    exit_code = 4


class ConfigError(EngineError):
    exit_code = 2


class DataError(EngineError):
    exit_code = 3


class SchemaError(DataError):
    """A record violates the example schema (message names the field/line)."""


class LineageError(DataError):
    """Artifacts produced under different configs/seeds were mixed."""


class BridgeError(EngineError):
    """External scorer process misbehaved or reported a failure."""
