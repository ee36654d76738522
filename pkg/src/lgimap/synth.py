"""Analytic desk-scale scenes, exact depth rendering and shadow-ray ground truth.

Everything here uses closed-form ray/primitive intersections and never touches
the depth-marching machinery in :mod:`lgimap.lgi`, so it can serve as an
independent oracle for it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ShapeMismatch
from .geometry import CameraIntrinsics, LightSpec, lift_depth_map, light_from_angles
from .lgi import ShadowMask

_EPS_DIR = 1e-300


def _vec3(v) -> tuple[float, float, float]:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"expected 3 finite components, got {v!r}")
    return (float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class GroundPlane:
    """Horizontal plane ``y = height`` (y points down, so height > 0 is below the camera)."""

    height: float

    def crossing(self, o, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.height - o[:, 1]) / d[:, 1]
        return np.where(np.isfinite(t), t, np.nan)

    def normal(self, points, d):
        n = np.zeros_like(points)
        n[:, 1] = -np.sign(d[:, 1])
        return n


@dataclass(frozen=True)
class Wall:
    """Fronto-parallel plane ``z = z``."""

    z: float

    def crossing(self, o, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.z - o[:, 2]) / d[:, 2]
        return np.where(np.isfinite(t), t, np.nan)

    def normal(self, points, d):
        n = np.zeros_like(points)
        n[:, 2] = -np.sign(d[:, 2])
        return n


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if not self.radius > 0:
            raise ValueError("sphere radius must be > 0")

    def interval(self, o, d):
        oc = o - np.asarray(self.center)
        a = np.einsum("ij,ij->i", d, d)
        b = np.einsum("ij,ij->i", oc, d)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - a * c
        hit = disc >= 0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t0 = np.where(hit, (-b - root) / a, np.nan)
        t1 = np.where(hit, (-b + root) / a, np.nan)
        return t0, t1

    def normal(self, points, d):
        return (points - np.asarray(self.center)) / self.radius


@dataclass(frozen=True)
class BoxAA:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "min", _vec3(self.min))
        object.__setattr__(self, "max", _vec3(self.max))
        if not all(lo < hi for lo, hi in zip(self.min, self.max)):
            raise ValueError("box min must be < max componentwise")

    def interval(self, o, d):
        lo = np.asarray(self.min)
        hi = np.asarray(self.max)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
        # axis-parallel rays: inside the slab -> unbounded, outside -> empty
        par = d == 0
        inside = (o >= lo) & (o <= hi)
        t_small = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        t_big = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        t0 = t_small.max(axis=1)
        t1 = t_big.min(axis=1)
        hit = t0 <= t1
        return np.where(hit, t0, np.nan), np.where(hit, t1, np.nan)

    def normal(self, points, d):
        lo = np.asarray(self.min)
        hi = np.asarray(self.max)
        center = (lo + hi) / 2
        half = (hi - lo) / 2
        rel = (points - center) / half
        axis = np.argmax(np.abs(rel), axis=1)
        n = np.zeros_like(points)
        n[np.arange(len(points)), axis] = np.sign(rel[np.arange(len(points)), axis])
        return n


Primitive = Union[GroundPlane, Wall, Sphere, BoxAA]


@dataclass(frozen=True)
class OracleConfig:
    shadow_epsilon: float = 1e-5
    max_t: float = math.inf

    def __post_init__(self):
        if not self.shadow_epsilon > 0:
            raise ValueError("shadow_epsilon must be > 0")


@dataclass(frozen=True)
class AnalyticScene:
    primitives: tuple

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def first_hit(self, o: np.ndarray, d: np.ndarray):
        """Nearest positive hit per ray: (t, primitive index or -1, outward normal)."""
        m = len(o)
        best_t = np.full(m, np.inf)
        best_i = np.full(m, -1)
        for i, prim in enumerate(self.primitives):
            if isinstance(prim, (GroundPlane, Wall)):
                t = prim.crossing(o, d)
                t = np.where(t > 0, t, np.inf)
            else:
                t0, t1 = prim.interval(o, d)
                t = np.where(t0 > 0, t0, np.where(t1 > 0, t1, np.inf))
            t = np.where(np.isnan(t), np.inf, t)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_i = np.where(closer, i, best_i)
        normals = np.zeros((m, 3))
        points = o + np.where(np.isfinite(best_t), best_t, 0.0)[:, None] * d
        for i, prim in enumerate(self.primitives):
            sel = best_i == i
            if sel.any():
                n = prim.normal(points[sel], d[sel])
                # face the incoming ray
                flip = np.einsum("ij,ij->i", n, d[sel]) > 0
                n[flip] *= -1
                normals[sel] = n
        return best_t, best_i, normals

    def occluded(self, o: np.ndarray, d: np.ndarray, t_max) -> np.ndarray:
        """True where some primitive lies strictly inside the segment ``o + t d``, 0 < t < t_max."""
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(o),))
        blocked = np.zeros(len(o), dtype=bool)
        for prim in self.primitives:
            if isinstance(prim, (GroundPlane, Wall)):
                t = prim.crossing(o, d)
                blocked |= (t > 0) & (t < t_max)
            else:
                t0, t1 = prim.interval(o, d)
                blocked |= (t0 < t_max) & (t1 > 0)
        return blocked


def camera_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    """(H*W, 3) ray directions through pixel centers, scaled so that dir.z = 1."""
    u, v = intrinsics.pixel_grid()
    d = np.stack([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)], axis=-1)
    return d.reshape(-1, 3)


def render_depth(scene: AnalyticScene, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Exact z-depth per pixel; NaN where the camera ray hits nothing."""
    if not scene.primitives:
        raise ValueError("scene has no primitives")
    d = camera_rays(intrinsics)
    t, _, _ = scene.first_hit(np.zeros_like(d), d)
    depth = np.where(np.isfinite(t), t, np.nan)
    return depth.reshape(intrinsics.shape)


def render_ids(scene: AnalyticScene, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Index of the primitive seen at each pixel (-1 for no hit)."""
    d = camera_rays(intrinsics)
    _, idx, _ = scene.first_hit(np.zeros_like(d), d)
    return idx.reshape(intrinsics.shape)


def shadow_rays_blocked(scene: AnalyticScene, points, light: LightSpec, cfg: OracleConfig = OracleConfig()) -> np.ndarray:
    """Exact shadow test for arbitrary surface points, shape (M, 3) -> (M,)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if light.is_point:
        to_light = light.vector - p
        dist = np.linalg.norm(to_light, axis=1)
        dirs = to_light / np.maximum(dist, _EPS_DIR)[:, None]
        t_max = np.minimum(dist - cfg.shadow_epsilon, cfg.max_t)
    else:
        dirs = np.broadcast_to(light.vector, p.shape)
        t_max = np.full(len(p), cfg.max_t)
    origins = p + cfg.shadow_epsilon * dirs
    return scene.occluded(origins, dirs, t_max)


def oracle_shadow_mask(
    scene: AnalyticScene,
    depth,
    intrinsics: CameraIntrinsics,
    light: LightSpec,
    cfg: OracleConfig = OracleConfig(),
) -> ShadowMask:
    """Hard shadow mask by casting exact shadow rays from every lifted pixel."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != intrinsics.shape:
        raise ShapeMismatch(f"depth shape {depth.shape} does not match intrinsics {intrinsics.shape}")
    points, valid = lift_depth_map(intrinsics, depth)
    mask = np.zeros(intrinsics.shape)
    if valid.any():
        mask[valid] = shadow_rays_blocked(scene, points[valid], light, cfg).astype(np.float64)
    return ShadowMask(mask, "hard")


def render_radiance(
    scene: AnalyticScene,
    intrinsics: CameraIntrinsics,
    lights: Sequence[LightSpec],
    albedo: float = 0.8,
    cfg: OracleConfig = OracleConfig(),
) -> np.ndarray:
    """Direct Lambertian illumination with exact hard shadows, linear RGB (H, W, 3).

    Point lights fall off with inverse squared distance; directional lights do not.
    """
    d = camera_rays(intrinsics)
    t, idx, normals = scene.first_hit(np.zeros_like(d), d)
    hit = idx >= 0
    points = t[hit, None] * d[hit]
    n = normals[hit]
    out = np.zeros((len(d), 3))
    for light in lights:
        if light.is_point:
            to_light = light.vector - points
            dist2 = np.einsum("ij,ij->i", to_light, to_light)
            omega = to_light / np.sqrt(dist2)[:, None]
            falloff = 1.0 / dist2
        else:
            omega = np.broadcast_to(light.vector, points.shape)
            falloff = np.ones(len(points))
        cosine = np.maximum(np.einsum("ij,ij->i", n, omega), 0.0)
        lit = ~shadow_rays_blocked(scene, points, light, cfg)
        scale = albedo * light.intensity * cosine * falloff * lit
        out[hit] += scale[:, None] * np.asarray(light.color)[None, :]
    return out.reshape(intrinsics.height, intrinsics.width, 3)


class SuiteEntry(NamedTuple):
    scene: AnalyticScene
    light: LightSpec
    intrinsics: CameraIntrinsics


SUITE_SIZE = 20
SUITE_RESOLUTION = 256
MIN_CAST_SHADOW_PIXELS = 400


def _occluder(prim) -> tuple[np.ndarray, float]:
    if isinstance(prim, Sphere):
        return np.asarray(prim.center), prim.radius
    lo, hi = np.asarray(prim.min), np.asarray(prim.max)
    return (lo + hi) / 2, float(np.linalg.norm(hi - lo) / 2)


@dataclass(frozen=True)
class SuiteParams:
    """Ranges for random suite scenes (scene units are meters, angles radians)."""

    ground: tuple[float, float] = (0.5, 0.65)
    depth: tuple[float, float] = (1.2, 1.6)
    lateral: tuple[float, float] = (-0.2, 0.2)
    sphere_radius: tuple[float, float] = (0.14, 0.22)
    box_size: tuple[float, float] = (0.18, 0.32)
    wall_gap: tuple[float, float] = (0.7, 1.4)
    azimuth: tuple[float, float] = (-math.radians(120), -math.radians(60))
    front_elevation: tuple[float, float] = (-math.radians(45), -math.radians(20))
    back_elevation: tuple[float, float] = (math.radians(20), math.radians(50))
    distance: tuple[float, float] = (0.9, 1.6)
    principal_row: float = 0.25


def _sample_scene(rng: np.random.Generator, front_lit: bool, prm: SuiteParams = SuiteParams()):
    ground = float(rng.uniform(*prm.ground))
    oz = float(rng.uniform(*prm.depth))
    ox = float(rng.uniform(*prm.lateral))
    if rng.random() < 0.5:
        r = float(rng.uniform(*prm.sphere_radius))
        occ = Sphere((ox, ground - r, oz), r)
    else:
        sx, sy, sz = rng.uniform(*prm.box_size, size=3)
        occ = BoxAA((ox - sx / 2, ground - sy, oz - sz / 2), (ox + sx / 2, ground, oz + sz / 2))
    prims = [GroundPlane(ground), occ]
    if rng.random() < 0.5:
        prims.append(Wall(float(oz + rng.uniform(*prm.wall_gap))))
    center, _ = _occluder(occ)
    azimuth = float(rng.uniform(*prm.azimuth))  # above the occluder
    # front: toward the camera; back: behind the occluder
    elevation = float(rng.uniform(*(prm.front_elevation if front_lit else prm.back_elevation)))
    distance = float(rng.uniform(*prm.distance))
    color = tuple(float(c) for c in rng.uniform(0.6, 1.0, size=3))
    light = light_from_angles(
        azimuth, elevation, distance, center,
        color=color, radius=float(rng.uniform(0.0, 0.05)), intensity=float(rng.uniform(0.5, 2.0)),
    )
    return AnalyticScene(tuple(prims)), light


def _cast_shadow_visible(scene: AnalyticScene, light: LightSpec, intrinsics: CameraIntrinsics) -> bool:
    """Occluder casts a shadow on the background that stays inside the image."""
    depth = render_depth(scene, intrinsics)
    ids = render_ids(scene, intrinsics)
    mask = oracle_shadow_mask(scene, depth, intrinsics, light).values > 0
    cast = mask & (ids != 1)
    # the pixel floor is set at the reference resolution and scales with area
    floor = MIN_CAST_SHADOW_PIXELS * intrinsics.width * intrinsics.height / SUITE_RESOLUTION**2
    if cast.sum() < floor:
        return False
    border = np.concatenate([cast[0], cast[-1], cast[:, 0], cast[:, -1]])
    return not border.any()


def suite_intrinsics(size: int, params: SuiteParams = SuiteParams()) -> CameraIntrinsics:
    """Default focal length with the principal point raised, so a level camera sees mostly floor."""
    return CameraIntrinsics(float(size), float(size), size / 2.0, size * params.principal_row, size, size)


def scene_suite(
    seed: int,
    count: int = SUITE_SIZE,
    size: int = SUITE_RESOLUTION,
    front_lit: bool = True,
    params: SuiteParams = SuiteParams(),
) -> list[SuiteEntry]:
    """Deterministic suite of ground(+wall)+occluder scenes with a single point light.

    ``front_lit=False`` produces the known-ambiguous back-lit diagnostic set,
    whose occluder silhouettes are largely hidden from the camera.
    """
    rng = np.random.default_rng(seed)
    intrinsics = suite_intrinsics(size, params)
    suite = []
    while len(suite) < count:
        scene, light = _sample_scene(rng, front_lit, params)
        if _cast_shadow_visible(scene, light, intrinsics):
            suite.append(SuiteEntry(scene, light, intrinsics))
    return suite


def sphere_scene(size: int = 256) -> tuple[AnalyticScene, CameraIntrinsics]:
    """Reference scene: ground plane, back wall and a sphere resting on the ground."""
    scene = AnalyticScene((GroundPlane(0.5), Wall(3.2), Sphere((0.0, 0.3, 2.0), 0.2)))
    return scene, CameraIntrinsics.default(size, size)
