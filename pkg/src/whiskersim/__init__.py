"""Digital twin of a vision-based, magnet-actuated whisker-array tactile sensor.

The simulator models eight rigid whiskers on torsional pivots, renders the
red base markers to synthetic camera frames, tracks them back out of the
pixels, and reproduces the object-classification and object-grasping
experiments end to end.
"""

__version__ = "0.1.0"

from .core import (
    ActuationParams,
    ArrayGeometry,
    CameraModel,
    ConfigError,
    SensorConfig,
    VisionParams,
    load_config,
    neutral_marker_positions,
    save_config,
    validate,
)

__all__ = [
    "ActuationParams",
    "ArrayGeometry",
    "CameraModel",
    "ConfigError",
    "SensorConfig",
    "VisionParams",
    "load_config",
    "neutral_marker_positions",
    "save_config",
    "validate",
    "__version__",
]
