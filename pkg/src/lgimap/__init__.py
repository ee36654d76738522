"""Light-Geometry Interaction maps, shadow masks and their verification tooling."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BehindCamera,
    ConfigError,
    DegenerateClass,
    DegenerateDenominator,
    DegenerateRegion,
    DegenerateTime,
    DegenerateVector,
    FormatError,
    InvalidDepth,
    LgiError,
    ShapeMismatch,
)
from .geometry import CameraIntrinsics, LightSpec, lift, light_from_angles, project  # noqa: E402
from .lgi import LgiConfig, LgiMaps, ShadowMask, compute_lgi, hard_mask, lgi_sunlight, soft_mask  # noqa: E402
