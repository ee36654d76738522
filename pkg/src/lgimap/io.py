"""File formats: PFM float rasters, 8-bit mask PNGs and JSON scene configs.

PFM layout: a text header ``Pf`` (one band) or ``PF`` (three bands), then
``width height``, then a nonzero scale whose sign selects the byte order
(negative = little endian), each terminated by a newline; the raster follows
as 32-bit floats with rows stored bottom to top.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError
from .geometry import CameraIntrinsics, LightSpec
from .lgi import LgiConfig, LgiMaps
from .synth import AnalyticScene, BoxAA, GroundPlane, Sphere, SuiteEntry, Wall

SCHEMA_VERSION = "1"


# ---------------------------------------------------------------- PFM


@dataclass(frozen=True)
class PfmHeader:
    bands: int
    width: int
    height: int
    scale: float

    @property
    def little_endian(self) -> bool:
        return self.scale < 0


def _header_line(data: bytes, pos: int, what: str) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"unterminated {what} line", pos)
    try:
        return data[pos:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError:
        raise FormatError(f"non-ASCII bytes in {what} line", pos) from None


def parse_pfm(data: bytes) -> tuple[PfmHeader, np.ndarray]:
    """Decode PFM bytes into a header and a float32 array of shape (H, W) or (H, W, 3)."""
    magic, pos = _header_line(data, 0, "identifier")
    if magic == "Pf":
        bands = 1
    elif magic == "PF":
        bands = 3
    else:
        raise FormatError(f"unknown PFM identifier {magic!r}", 0)
    dims_at = pos
    dims, pos = _header_line(data, pos, "dimensions")
    parts = dims.split()
    try:
        width, height = (int(p) for p in parts)
    except ValueError:
        raise FormatError(f"bad PFM dimensions {dims!r}", dims_at) from None
    if width < 1 or height < 1:
        raise FormatError(f"PFM dimensions must be positive, got {width}x{height}", dims_at)
    scale_at = pos
    text, pos = _header_line(data, pos, "scale")
    try:
        scale = float(text)
    except ValueError:
        raise FormatError(f"bad PFM scale {text!r}", scale_at) from None
    if scale == 0 or not math.isfinite(scale):
        raise FormatError(f"PFM scale must be finite and nonzero, got {text!r}", scale_at)
    count = width * height * bands
    need = count * 4
    if len(data) - pos < need:
        raise FormatError(f"PFM payload truncated: expected {need} bytes, found {len(data) - pos}", len(data))
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float32)
    shape = (height, width) if bands == 1 else (height, width, 3)
    grid = raster.reshape(shape)[::-1].copy()
    return PfmHeader(bands, width, height, scale), grid


def encode_pfm(grid, little_endian: bool = True, scale: float = 1.0) -> bytes:
    grid = np.asarray(grid)
    if grid.ndim == 2:
        magic = "Pf"
    elif grid.ndim == 3 and grid.shape[2] == 3:
        magic = "PF"
    elif grid.ndim == 3 and grid.shape[2] == 1:
        magic = "Pf"
        grid = grid[..., 0]
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) grids, got shape {grid.shape}")
    if not scale > 0:
        raise ValueError("scale magnitude must be > 0")
    height, width = grid.shape[:2]
    signed = -abs(scale) if little_endian else abs(scale)
    header = f"{magic}\n{width} {height}\n{signed!r}\n".encode("ascii")
    raster = np.ascontiguousarray(grid[::-1], dtype="<f4" if little_endian else ">f4")
    return header + raster.tobytes()


def read_pfm(path) -> tuple[PfmHeader, np.ndarray]:
    return parse_pfm(Path(path).read_bytes())


def write_pfm(path, grid, little_endian: bool = True, scale: float = 1.0) -> None:
    """Write a (H, W) or (H, W, 3) grid as 32-bit floats; NaN is kept as is."""
    Path(path).write_bytes(encode_pfm(grid, little_endian, scale))


# ---------------------------------------------------------------- PNG masks


def quantize_mask(values) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_mask_png(path, mask) -> None:
    """8-bit grayscale PNG; soft values are rounded to the nearest 1/255."""
    values = getattr(mask, "values", mask)
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {values.shape}")
    Image.fromarray(quantize_mask(values), mode="L").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    """Mask values in [0, 1] as float64."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "L":
                raise FormatError(f"mask PNG must be 8-bit grayscale, got mode {img.mode!r}")
            data = np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode PNG {path}: {exc}") from None
    return data.astype(np.float64) / 255.0


# ---------------------------------------------------------------- LGI maps


def lgi_paths(prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + "_lgi.pfm"), Path(prefix + "_valid.png")


def write_lgi(prefix, maps: LgiMaps) -> tuple[Path, Path]:
    """3-band PFM in channel order (c1, c2, c3) plus a validity PNG."""
    pfm, png = lgi_paths(prefix)
    write_pfm(pfm, maps.stack())
    write_mask_png(png, maps.valid.astype(np.float64))
    return pfm, png


def read_lgi(prefix) -> LgiMaps:
    pfm, png = lgi_paths(prefix)
    header, grid = read_pfm(pfm)
    if header.bands != 3:
        raise FormatError(f"LGI file must have 3 bands, got {header.bands}")
    valid = read_mask_png(png) > 0.5
    if valid.shape != grid.shape[:2]:
        raise FormatError("validity mask does not match LGI raster size")
    g = grid.astype(np.float64)
    return LgiMaps(g[..., 0], g[..., 1], g[..., 2], valid)


# ---------------------------------------------------------------- scene configs

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_NUM = {"type": "number"}

SCENE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "intrinsics", "lights", "primitives"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": ["integer", "null"]},
        "intrinsics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["width", "height"],
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
                "fx": {"type": "number", "exclusiveMinimum": 0},
                "fy": {"type": "number", "exclusiveMinimum": 0},
                "cx": _NUM,
                "cy": _NUM,
            },
        },
        "lights": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["point", "directional"]},
                    "position": _VEC3,
                    "direction": _VEC3,
                    "color": {**_VEC3, "items": {"type": "number", "minimum": 0, "maximum": 1}},
                    "radius": {"type": "number", "minimum": 0},
                    "intensity": {"type": "number", "minimum": 0},
                    "azimuth": _NUM,
                    "elevation": _NUM,
                    "distance": _NUM,
                },
                "allOf": [
                    {"if": {"required": ["kind"], "properties": {"kind": {"const": "point"}}}, "then": {"required": ["position"]}},
                    {"if": {"required": ["kind"], "properties": {"kind": {"const": "directional"}}}, "then": {"required": ["direction"]}},
                ],
            },
        },
        "primitives": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"enum": ["ground", "wall", "sphere", "box"]}},
                "allOf": [
                    {
                        "if": {"required": ["type"], "properties": {"type": {"const": "ground"}}},
                        "then": {"required": ["height"], "properties": {"type": True, "height": _NUM}, "additionalProperties": False},
                    },
                    {
                        "if": {"required": ["type"], "properties": {"type": {"const": "wall"}}},
                        "then": {"required": ["z"], "properties": {"type": True, "z": _NUM}, "additionalProperties": False},
                    },
                    {
                        "if": {"required": ["type"], "properties": {"type": {"const": "sphere"}}},
                        "then": {
                            "required": ["center", "radius"],
                            "properties": {"type": True, "center": _VEC3, "radius": {"type": "number", "exclusiveMinimum": 0}},
                            "additionalProperties": False,
                        },
                    },
                    {
                        "if": {"required": ["type"], "properties": {"type": {"const": "box"}}},
                        "then": {
                            "required": ["min", "max"],
                            "properties": {"type": True, "min": _VEC3, "max": _VEC3},
                            "additionalProperties": False,
                        },
                    },
                ],
            },
        },
        "lgi": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "z_near": {"type": "number", "exclusiveMinimum": 0},
                "softness_beta": {"type": "number", "exclusiveMinimum": 0},
                "interp": {"enum": ["bilinear", "nearest"]},
                "z_far": {"type": ["number", "null"]},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCENE_SCHEMA)


@dataclass
class SceneConfig:
    intrinsics: CameraIntrinsics
    lights: list[LightSpec]
    scene: AnalyticScene
    lgi: LgiConfig = field(default_factory=LgiConfig)
    seed: int | None = None


def format_path(parts) -> str:
    """JSON path elements -> ``lights[0].kind`` style string."""
    out = ""
    for p in parts:
        if isinstance(p, int):
            out += f"[{p}]"
        else:
            out += f".{p}" if out else str(p)
    return out or "<root>"


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = list(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            parts.append(missing[0])
    elif err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            parts.append(extra[0])
    return format_path(parts)


def _leaf_errors(err: jsonschema.ValidationError):
    if err.context:
        for sub in err.context:
            yield from _leaf_errors(sub)
    else:
        yield err


def validate_config(doc: Any) -> None:
    """Raise ConfigError for the first schema violation, naming its path."""
    err = next(iter(_VALIDATOR.iter_errors(doc)), None)
    if err is None:
        return
    leaf = max(_leaf_errors(err), key=lambda e: len(e.absolute_path))
    raise ConfigError(_error_path(leaf), leaf.message)


def _primitive_from_dict(d: dict):
    kind = d["type"]
    if kind == "ground":
        return GroundPlane(float(d["height"]))
    if kind == "wall":
        return Wall(float(d["z"]))
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    return BoxAA(tuple(d["min"]), tuple(d["max"]))


def primitive_to_dict(prim) -> dict:
    if isinstance(prim, GroundPlane):
        return {"type": "ground", "height": prim.height}
    if isinstance(prim, Wall):
        return {"type": "wall", "z": prim.z}
    if isinstance(prim, Sphere):
        return {"type": "sphere", "center": list(prim.center), "radius": prim.radius}
    if isinstance(prim, BoxAA):
        return {"type": "box", "min": list(prim.min), "max": list(prim.max)}
    raise TypeError(f"unknown primitive {prim!r}")


def light_to_dict(light: LightSpec) -> dict:
    d: dict[str, Any] = {"kind": light.kind}
    if light.is_point:
        d["position"] = list(light.position)
    else:
        d["direction"] = list(light.direction)
    d["color"] = list(light.color)
    d["radius"] = light.radius
    d["intensity"] = light.intensity
    for key in ("azimuth", "elevation", "distance"):
        value = getattr(light, key)
        if value is not None:
            d[key] = value
    return d


def _light_from_dict(d: dict, where: str) -> LightSpec:
    kw = {k: v for k, v in d.items() if k in ("radius", "intensity", "azimuth", "elevation", "distance")}
    if "color" in d:
        kw["color"] = tuple(float(c) for c in d["color"])
    try:
        if d["kind"] == "point":
            return LightSpec("point", position=tuple(float(c) for c in d["position"]), **kw)
        return LightSpec("directional", direction=tuple(float(c) for c in d["direction"]), **kw)
    except ValueError as exc:
        field_name = "position" if d["kind"] == "point" else "direction"
        raise ConfigError(f"{where}.{field_name}", str(exc)) from None


def lgi_config_to_dict(cfg: LgiConfig) -> dict:
    return {
        "n_samples": cfg.n_samples,
        "eta": cfg.eta,
        "z_near": cfg.z_near,
        "softness_beta": cfg.softness_beta,
        "interp": cfg.interp,
        "z_far": cfg.z_far,
    }


def config_from_dict(doc: Any) -> SceneConfig:
    validate_config(doc)
    k = doc["intrinsics"]
    w, h = k["width"], k["height"]
    base = CameraIntrinsics.default(w, h)
    try:
        intrinsics = CameraIntrinsics(
            float(k.get("fx", base.fx)), float(k.get("fy", base.fy)),
            float(k.get("cx", base.cx)), float(k.get("cy", base.cy)), int(w), int(h),
        )
    except ValueError as exc:
        raise ConfigError("intrinsics", str(exc)) from None
    lights = [_light_from_dict(d, f"lights[{i}]") for i, d in enumerate(doc["lights"])]
    prims = []
    for i, d in enumerate(doc["primitives"]):
        try:
            prims.append(_primitive_from_dict(d))
        except ValueError as exc:
            raise ConfigError(f"primitives[{i}]", str(exc)) from None
    try:
        lgi = LgiConfig(**doc.get("lgi", {}))
    except ValueError as exc:
        raise ConfigError("lgi", str(exc)) from None
    return SceneConfig(intrinsics, lights, AnalyticScene(tuple(prims)), lgi, doc.get("seed"))


def config_to_dict(cfg: SceneConfig) -> dict:
    k = cfg.intrinsics
    return {
        "version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "intrinsics": {"width": k.width, "height": k.height, "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
        "lights": [light_to_dict(light) for light in cfg.lights],
        "primitives": [primitive_to_dict(p) for p in cfg.scene.primitives],
        "lgi": lgi_config_to_dict(cfg.lgi),
    }


def load_scene_config(path) -> SceneConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def save_scene_config(path, cfg: SceneConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def suite_entry_config(entry: SuiteEntry, seed: int | None = None, lgi: LgiConfig = LgiConfig()) -> SceneConfig:
    return SceneConfig(entry.intrinsics, [entry.light], entry.scene, lgi, seed)
