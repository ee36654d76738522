"""Light-Geometry Interaction (LGI) maps and shadow masks from a depth map.

For every valid pixel the lifted surface point ``p`` casts a ray toward the
light. ``N`` evenly spaced samples along the frustum-clipped ray are projected
into the image, their depth is fetched and re-lifted, and the elevation of each
re-lifted point (seen from ``p``) is compared against the elevation of the
light ray. The per-pixel minimum, maximum and smallest-magnitude elevation
difference form the three LGI channels.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernel
from .errors import BehindCamera, DegenerateVector, ShapeMismatch
from .geometry import CameraIntrinsics, LightSpec, elevation_angle, light_angle_jacobian, light_from_angles, valid_depth

__all__ = [
    "LgiConfig",
    "LgiMaps",
    "ShadowMask",
    "RaySample",
    "sample_ray",
    "elevation_angle",
    "compute_lgi",
    "lgi_sunlight",
    "hard_mask",
    "soft_mask",
    "soft_mask_tangent",
    "soft_mask_angle_gradient",
]

INTERP_MODES = ("bilinear", "nearest")


@dataclass(frozen=True)
class LgiConfig:
    """Sampling parameters.

    ``z_far`` only bounds directional-light rays; ``None`` means the farthest
    valid depth of the map being processed.
    """

    n_samples: int = 16
    eta: float = math.radians(5.0)
    z_near: float = 1e-4
    softness_beta: float = math.radians(1.0)
    interp: str = "bilinear"
    z_far: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.z_near > 0:
            raise ValueError("z_near must be > 0")
        if not self.softness_beta > 0:
            raise ValueError("softness_beta must be > 0")
        if self.interp not in INTERP_MODES:
            raise ValueError(f"interp must be one of {INTERP_MODES}, got {self.interp!r}")
        if self.z_far is not None and not self.z_far > self.z_near:
            raise ValueError("z_far must exceed z_near")


@dataclass
class LgiMaps:
    """Channels in radians: c1 = min, c2 = max, c3 = smallest-magnitude difference."""

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    valid: np.ndarray

    @property
    def height(self) -> int:
        return self.c1.shape[0]

    @property
    def width(self) -> int:
        return self.c1.shape[1]

    def stack(self) -> np.ndarray:
        """(H, W, 3) array in channel order c1, c2, c3."""
        return np.stack([self.c1, self.c2, self.c3], axis=-1)


@dataclass
class ShadowMask:
    values: np.ndarray
    kind: str = "hard"

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class RaySample(NamedTuple):
    delta: float
    point: np.ndarray
    in_frustum: bool


@dataclass
class LgiTrace:
    """Per-pixel bookkeeping of which sample and fetch stencil produced c3."""

    argmin: np.ndarray
    cell: np.ndarray
    active: np.ndarray


def default_threads() -> int:
    env = os.environ.get("LGIMAP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _ray_setup(p: np.ndarray, light: LightSpec) -> tuple[np.ndarray, float]:
    if light.is_point:
        return light.vector - p, 1.0
    return light.vector, math.inf


def sample_ray(
    p,
    light: LightSpec,
    cfg: LgiConfig,
    intrinsics: CameraIntrinsics,
    z_far: float | None = None,
) -> list[RaySample]:
    """Samples along the ray from ``p`` toward the light.

    Point lights: ``p + delta_n (l - p)`` with ``delta_n = n * delta_max / N``.
    Directional lights: ``p + s_n * direction`` with the same spacing over the
    frustum exit parameter. When no positive step stays in the frustum the
    unclipped samples are returned with ``in_frustum=False``.
    """
    p = np.asarray(p, dtype=np.float64)
    if not p[2] > 0:
        raise BehindCamera("ray origin must have z > 0")
    d, cap = _ray_setup(p, light)
    far = cfg.z_far if z_far is None else z_far
    far = math.inf if far is None else float(far)
    s_max, _ = _kernel.frustum_limit(
        p[0], p[1], p[2], d[0], d[1], d[2],
        intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
        intrinsics.width, intrinsics.height, cfg.z_near, far, cap,
    )
    if s_max == math.inf:
        raise ValueError("directional ray never leaves the frustum; set z_far")
    n = cfg.n_samples
    if s_max > 0:
        return [RaySample(k * s_max / n, p + (k * s_max / n) * d, True) for k in range(1, n + 1)]
    span = 1.0
    return [RaySample(k * span / n, p + (k * span / n) * d, False) for k in range(1, n + 1)]


def _check_shape(depth: np.ndarray, intrinsics: CameraIntrinsics) -> None:
    if depth.ndim != 2 or depth.shape != intrinsics.shape:
        raise ShapeMismatch(f"depth shape {depth.shape} does not match intrinsics {intrinsics.shape}")


def _run(depth, intrinsics, light, cfg, threads, dlight=None):
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    _check_shape(depth, intrinsics)
    valid = valid_depth(depth)
    h, w = depth.shape
    if light.is_point:
        z_far = math.inf
    elif cfg.z_far is not None:
        z_far = float(cfg.z_far)
    else:
        z_far = float(depth[valid].max()) if valid.any() else cfg.z_near * 2
    out = {
        "c1": np.zeros((h, w)),
        "c2": np.zeros((h, w)),
        "c3": np.zeros((h, w)),
        "valid": np.zeros((h, w), dtype=np.bool_),
        "dc3": np.zeros((h, w)),
        "argmin": np.zeros((h, w), dtype=np.int64),
        "cell": np.zeros((h, w), dtype=np.int64),
        "active": np.zeros((h, w), dtype=np.int64),
    }
    want_tangent = dlight is not None
    dl = np.zeros(3) if dlight is None else np.asarray(dlight, dtype=np.float64)
    lvec = light.vector

    def rows(r0, r1):
        _kernel.lgi_rows(
            depth, valid, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
            light.is_point, lvec, cfg.n_samples, cfg.z_near, z_far, cfg.interp == "bilinear",
            r0, r1, want_tangent, dl,
            out["c1"], out["c2"], out["c3"], out["valid"], out["dc3"],
            out["argmin"], out["cell"], out["active"],
        )

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or h == 1:
        rows(0, h)
    else:
        bounds = np.linspace(0, h, min(threads, h) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(rows, bounds[:-1], bounds[1:]))
    maps = LgiMaps(out["c1"], out["c2"], out["c3"], out["valid"])
    return maps, out["dc3"], LgiTrace(out["argmin"], out["cell"], out["active"])


def compute_lgi(
    depth,
    intrinsics: CameraIntrinsics,
    light: LightSpec,
    cfg: LgiConfig = LgiConfig(),
    threads: int | None = None,
) -> LgiMaps:
    """LGI maps for a depth map and a point or directional light.

    Pixels without a single usable sample get ``valid=False`` and zero
    channels. Rows are processed on ``threads`` workers; output does not
    depend on the thread count.
    """
    maps, _, _ = _run(depth, intrinsics, light, cfg, threads)
    return maps


def lgi_sunlight(
    depth,
    intrinsics: CameraIntrinsics,
    direction,
    cfg: LgiConfig = LgiConfig(),
    threads: int | None = None,
) -> LgiMaps:
    """LGI maps for parallel light arriving from ``direction`` (pointing at the sun)."""
    direction = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0 or not math.isfinite(norm):
        raise DegenerateVector("sun direction must be nonzero")
    if abs(norm - 1.0) > 1e-9:
        raise DegenerateVector(f"sun direction must have unit norm, got {norm}")
    return compute_lgi(depth, intrinsics, LightSpec("directional", direction=tuple(direction)), cfg, threads)


def hard_mask(maps: LgiMaps, eta: float) -> ShadowMask:
    if not eta > 0:
        raise ValueError("eta must be > 0")
    values = (maps.valid & (np.abs(maps.c3) < eta)).astype(np.float64)
    return ShadowMask(values, "hard")


def _sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def soft_mask(maps: LgiMaps, eta: float, beta: float) -> ShadowMask:
    """sigmoid((eta - |c3|) / beta) on valid pixels, 0 elsewhere."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    s = _sigmoid((eta - np.abs(maps.c3)) / beta)
    return ShadowMask(np.where(maps.valid, s, 0.0), "soft")


def soft_mask_tangent(
    depth,
    intrinsics: CameraIntrinsics,
    light: LightSpec,
    dlight,
    cfg: LgiConfig = LgiConfig(),
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, LgiTrace]:
    """Soft mask and its derivative when a point light moves along ``dlight``.

    Returns ``(soft, d_soft, trace)``; ``trace`` records the winning sample,
    fetch stencil and active frustum bound so callers can tell where the
    derivative is locally valid.
    """
    if not light.is_point:
        raise ValueError("tangents are only defined for point lights")
    maps, dc3, trace = _run(depth, intrinsics, light, cfg, threads, dlight=dlight)
    soft = soft_mask(maps, cfg.eta, cfg.softness_beta).values
    dsoft = soft * (1.0 - soft) * (-np.sign(maps.c3) * dc3) / cfg.softness_beta
    dsoft = np.where(maps.valid, dsoft, 0.0)
    return soft, dsoft, trace


def soft_mask_angle_gradient(
    depth,
    intrinsics: CameraIntrinsics,
    azimuth: float,
    elevation: float,
    distance: float,
    anchor=(0.0, 0.0, 0.0),
    cfg: LgiConfig = LgiConfig(),
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, LgiTrace]:
    """Soft mask and its per-pixel derivatives w.r.t. light azimuth and elevation."""
    light = light_from_angles(azimuth, elevation, distance, anchor)
    jac = light_angle_jacobian(azimuth, elevation, distance)
    soft, d_az, trace = soft_mask_tangent(depth, intrinsics, light, jac[0], cfg, threads)
    _, d_el, _ = soft_mask_tangent(depth, intrinsics, light, jac[1], cfg, threads)
    return soft, d_az, d_el, trace
