"""Pinhole camera model and light parameter conversions.

Camera frame: x right, y down, z forward. Pixel ``(0, 0)`` is the center of
the top-left pixel, so integer pixel coordinates are pixel centers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BehindCamera, DegenerateVector, InvalidDepth

CAMERA_PLANE_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")

    @classmethod
    def default(cls, width: int, height: int) -> "CameraIntrinsics":
        """Normalized-scene intrinsics: fx=W, fy=H, principal point at (W/2, H/2)."""
        return cls(float(width), float(height), width / 2.0, height / 2.0, int(width), int(height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) float grids of pixel-center coordinates, each shaped (H, W)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)


def valid_depth(values) -> np.ndarray:
    """Boolean mask of usable depth entries (finite and strictly positive)."""
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return np.isfinite(values) & (values > 0)


def lift(intrinsics: CameraIntrinsics, u, v, d) -> np.ndarray:
    """Back-project pixel(s) at depth ``d`` to camera-space points.

    Vectorised over broadcastable ``u, v, d``; the result has a trailing axis
    of size 3. Raises InvalidDepth if any depth is non-finite or <= 0.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if not np.all(valid_depth(d)):
        raise InvalidDepth("depth must be finite and > 0")
    x = (u - intrinsics.cx) * d / intrinsics.fx
    y = (v - intrinsics.cy) * d / intrinsics.fy
    x, y, z = np.broadcast_arrays(x, y, d)
    return np.stack([x, y, z], axis=-1)


def project(intrinsics: CameraIntrinsics, p) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-space point(s) to pixel coordinates, without bounds clamping."""
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise BehindCamera("point must have z > 0 to project")
    u = intrinsics.fx * p[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * p[..., 1] / z + intrinsics.cy
    return u, v


def lift_depth_map(intrinsics: CameraIntrinsics, depth) -> tuple[np.ndarray, np.ndarray]:
    """Lift every valid pixel of a depth map.

    Returns ``(points, valid)`` where points is (H, W, 3) and zero at invalid pixels.
    """
    depth = np.asarray(depth, dtype=np.float64)
    valid = valid_depth(depth)
    u, v = intrinsics.pixel_grid()
    safe = np.where(valid, depth, 1.0)
    points = lift(intrinsics, u, v, safe)
    points[~valid] = 0.0
    return points, valid


def elevation_angle(origin, target) -> float:
    """Angle of ``target - origin`` above the camera plane, in [-pi/2, pi/2]."""
    vec = np.asarray(target, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not math.isfinite(norm):
        raise DegenerateVector("elevation of a zero-length vector is undefined")
    return math.asin(max(-1.0, min(1.0, float(vec[2]) / norm)))


@dataclass(frozen=True)
class LightSpec:
    """A point or directional light.

    ``direction`` points from the scene toward the light. Color and radius are
    conditioning metadata only; they never influence LGI geometry.
    """

    kind: str
    position: tuple[float, float, float] | None = None
    direction: tuple[float, float, float] | None = None
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius: float = 0.0
    intensity: float = 1.0
    azimuth: float | None = None
    elevation: float | None = None
    distance: float | None = None
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "point":
            if self.position is None:
                raise ValueError("point light requires a position")
            vec = np.asarray(self.position, dtype=np.float64)
        elif self.kind == "directional":
            if self.direction is None:
                raise ValueError("directional light requires a direction")
            vec = np.asarray(self.direction, dtype=np.float64)
            if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-9:
                raise DegenerateVector(f"directional light needs a unit direction, got norm {np.linalg.norm(vec)}")
        else:
            raise ValueError(f"unknown light kind {self.kind!r}")
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise ValueError("light vector must be 3 finite components")
        if self.radius < 0 or self.intensity < 0:
            raise ValueError("radius and intensity must be nonnegative")
        object.__setattr__(self, "_array", vec)

    @classmethod
    def point(cls, position: Sequence[float], **kw) -> "LightSpec":
        return cls("point", position=tuple(float(c) for c in position), **kw)

    @classmethod
    def directional(cls, direction: Sequence[float], **kw) -> "LightSpec":
        """Build a directional light, normalising ``direction``."""
        vec = np.asarray(direction, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not math.isfinite(norm):
            raise DegenerateVector("light direction must be nonzero")
        return cls("directional", direction=tuple(float(c) for c in vec / norm), **kw)

    @property
    def is_point(self) -> bool:
        return self.kind == "point"

    @property
    def vector(self) -> np.ndarray:
        """Position for point lights, unit direction for directional ones."""
        return self._array.copy()


def angles_to_offset(azimuth: float, elevation: float) -> np.ndarray:
    ce = math.cos(elevation)
    return np.array([ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)])


def light_from_angles(
    azimuth: float,
    elevation: float,
    distance: float,
    anchor=(0.0, 0.0, 0.0),
    **kw,
) -> LightSpec:
    """Point light at ``anchor + distance * (cos e cos a, cos e sin a, sin e)``.

    Azimuth is measured in the camera xy-plane from +x toward +y; elevation is
    measured toward +z, matching the elevation-angle convention of the LGI maps.
    """
    if not distance > 0:
        raise ValueError("distance must be > 0")
    if not -math.pi / 2 < elevation < math.pi / 2:
        raise ValueError("elevation must lie in (-pi/2, pi/2)")
    pos = np.asarray(anchor, dtype=np.float64) + distance * angles_to_offset(azimuth, elevation)
    return LightSpec.point(pos, azimuth=float(azimuth), elevation=float(elevation), distance=float(distance), **kw)


def light_angle_jacobian(azimuth: float, elevation: float, distance: float) -> np.ndarray:
    """d(position)/d(azimuth, elevation) as a (2, 3) array."""
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    return distance * np.array([[-ce * sa, ce * ca, 0.0], [-se * ca, -se * sa, ce]])
