from keyscope.runtime.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    KeyscopeError,
    ShapeError,
)

__all__ = ["CheckpointError", "ConfigError", "DataError", "KeyscopeError", "ShapeError"]
