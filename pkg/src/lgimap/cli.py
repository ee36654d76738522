"""``lgimap`` command line: scene generation, LGI maps, evaluation and benchmarks.

Every command prints one JSON report line on stdout (images are only ever
written to files). Exit status: 0 on success, 2 for bad inputs, 1 for
internal errors. Angles given on the command line are in degrees.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import statistics
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from . import __version__, bridgemath, io, lgi, metrics, synth
from .errors import DegenerateClass, DegenerateDenominator, DegenerateRegion, LgiError
from .geometry import LightSpec, angles_to_offset, lift_depth_map

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_maps(maps: lgi.LgiMaps) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(maps.stack()).tobytes())
    h.update(np.ascontiguousarray(maps.valid).tobytes())
    return h.hexdigest()


def resolve_threads(requested: int | None) -> int:
    """LGIMAP_THREADS wins over --threads; otherwise use all cores."""
    env = os.environ.get("LGIMAP_THREADS")
    if env:
        return max(1, int(env))
    if requested is not None:
        return max(1, requested)
    return lgi.default_threads()


class Report:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.start = time.perf_counter()
        self.data: dict[str, Any] = {
            "command": command,
            "version": __version__,
            "seed": getattr(args, "seed", None),
            "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")},
            "inputs": {},
            "outputs": {},
            "metrics": {},
        }

    def add_input(self, path) -> None:
        self.data["inputs"][str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.data["outputs"][str(path)] = sha256_file(path)

    def emit(self, out=None) -> dict:
        self.data["wall_ms"] = round((time.perf_counter() - self.start) * 1000.0, 3)
        line = json.dumps(self.data, sort_keys=True, default=_json_default)
        print(line)
        if out is not None:
            with open(out, "a") as fh:
                fh.write(line + "\n")
        return self.data


def _json_default(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _lgi_config(args, base: lgi.LgiConfig) -> lgi.LgiConfig:
    return lgi.LgiConfig(
        n_samples=args.n if args.n is not None else base.n_samples,
        eta=math.radians(args.eta) if args.eta is not None else base.eta,
        z_near=base.z_near,
        softness_beta=math.radians(args.soft) if args.soft is not None else base.softness_beta,
        interp=args.interp or base.interp,
        z_far=base.z_far,
    )


# ---------------------------------------------------------------- commands


def cmd_gen_scene(args) -> int:
    rep = Report("gen-scene", args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suite = synth.scene_suite(args.seed, args.count, args.size, front_lit=not args.back_lit) if args.count else []
    files = []
    for i, entry in enumerate(suite):
        stem = out / f"scene_{i:03d}"
        cfg = io.suite_entry_config(entry, seed=args.seed)
        io.save_scene_config(f"{stem}.json", cfg)
        depth = synth.render_depth(entry.scene, entry.intrinsics)
        io.write_pfm(f"{stem}_depth.pfm", depth)
        gt = synth.oracle_shadow_mask(entry.scene, depth, entry.intrinsics, entry.light)
        io.write_mask_png(f"{stem}_gt.png", gt)
        files += [f"{stem.name}.json", f"{stem.name}_depth.pfm", f"{stem.name}_gt.png"]
    manifest = {
        "version": __version__,
        "seed": args.seed,
        "count": len(suite),
        "size": args.size,
        "front_lit": not args.back_lit,
        "files": {name: sha256_file(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    rep.add_output(out / "manifest.json")
    rep.data["metrics"]["scenes"] = len(suite)
    rep.emit(args.report)
    return EXIT_OK


def cmd_render_depth(args) -> int:
    rep = Report("render-depth", args)
    rep.add_input(args.scene)
    cfg = io.load_scene_config(args.scene)
    depth = synth.render_depth(cfg.scene, cfg.intrinsics)
    io.write_pfm(args.out, depth)
    rep.add_output(args.out)
    rep.data["metrics"]["valid_pixels"] = int(np.isfinite(depth).sum())
    rep.emit(args.report)
    return EXIT_OK


def _sun_direction(light: LightSpec, depth, intrinsics) -> np.ndarray:
    """Parallel-light direction standing in for a point light."""
    if not light.is_point:
        return light.vector
    if light.azimuth is not None and light.elevation is not None:
        return angles_to_offset(light.azimuth, light.elevation)
    # fall back to the direction from the centroid of the visible surface
    points, valid = lift_depth_map(intrinsics, depth)
    if not valid.any():
        raise LgiError("no valid depth to anchor a sunlight direction")
    d = light.vector - points[valid].mean(axis=0)
    return d / np.linalg.norm(d)


def cmd_lgi(args) -> int:
    rep = Report("lgi", args)
    rep.add_input(args.depth)
    rep.add_input(args.scene)
    scene_cfg = io.load_scene_config(args.scene)
    rep.data["seed"] = scene_cfg.seed
    _, depth = io.read_pfm(args.depth)
    if depth.ndim != 2:
        raise LgiError("depth PFM must have a single band")
    depth = depth.astype(np.float64)
    if not scene_cfg.lights:
        raise LgiError("scene config has no lights")
    if not 0 <= args.light < len(scene_cfg.lights):
        raise LgiError(f"light index {args.light} out of range")
    light = scene_cfg.lights[args.light]
    cfg = _lgi_config(args, scene_cfg.lgi)
    rep.data["config"]["lgi"] = io.lgi_config_to_dict(cfg)
    threads = resolve_threads(args.threads)
    if args.sunlight:
        direction = _sun_direction(light, depth, scene_cfg.intrinsics)
        rep.data["config"]["sun_direction"] = [float(c) for c in direction]
        maps = lgi.lgi_sunlight(depth, scene_cfg.intrinsics, direction, cfg, threads)
    else:
        maps = lgi.compute_lgi(depth, scene_cfg.intrinsics, light, cfg, threads)
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    for path in io.write_lgi(prefix, maps):
        rep.add_output(path)
    hard = lgi.hard_mask(maps, cfg.eta)
    io.write_mask_png(f"{prefix}_hard.png", hard)
    rep.add_output(f"{prefix}_hard.png")
    if args.soft is not None:
        io.write_mask_png(f"{prefix}_soft.png", lgi.soft_mask(maps, cfg.eta, cfg.softness_beta))
        rep.add_output(f"{prefix}_soft.png")
    rep.data["metrics"]["valid_pixels"] = int(maps.valid.sum())
    rep.data["metrics"]["shadow_pixels"] = int(hard.values.sum())
    rep.data["metrics"]["digest"] = sha256_maps(maps)
    rep.emit(args.report)
    return EXIT_OK


def _metric(fn, *a):
    try:
        return fn(*a)
    except (DegenerateDenominator, DegenerateClass, DegenerateRegion):
        return "undefined"


def _read_image(path) -> np.ndarray:
    if str(path).lower().endswith(".png"):
        return io.read_mask_png(path)
    _, grid = io.read_pfm(path)
    return grid.astype(np.float64)


def cmd_eval(args) -> int:
    rep = Report("eval", args)
    rep.add_input(args.pred)
    rep.add_input(args.gt)
    pred = io.read_mask_png(args.pred)
    gt = io.read_mask_png(args.gt)
    c = metrics.confusion(pred, gt, args.threshold)
    m = rep.data["metrics"]
    m["confusion"] = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}
    m["iou"] = _metric(metrics.iou, c)
    m["ber"] = _metric(metrics.ber, c)
    if args.rmse:
        a_path, b_path = args.rmse
        rep.add_input(a_path)
        rep.add_input(b_path)
        a, b = _read_image(a_path), _read_image(b_path)
        m["rmse"] = _metric(metrics.rmse, a, b)
        m["rmse_shadow"] = _metric(metrics.rmse, a, b, gt >= args.threshold)
        if args.object_mask:
            rep.add_input(args.object_mask)
            obj = io.read_mask_png(args.object_mask) >= 0.5
            m["rmse_object"] = _metric(metrics.rmse, a, b, obj)
    rep.emit(args.report)
    return EXIT_OK


def cmd_compose(args) -> int:
    rep = Report("compose", args)
    headers, images = [], []
    for path in args.inputs:
        rep.add_input(path)
        h, g = io.read_pfm(path)
        headers.append(h)
        images.append(g.astype(np.float64))
    total = bridgemath.compose_lights(images)
    first = headers[0]
    # keep the first input's byte order and scale so a single input round-trips exactly
    io.write_pfm(args.out, total.astype(np.float32), little_endian=first.little_endian, scale=abs(first.scale))
    rep.add_output(args.out)
    if args.clamp:
        shown = bridgemath.display_clamp(total)
        mode = "L" if shown.ndim == 2 else "RGB"
        Image.fromarray(io.quantize_mask(shown), mode=mode).save(args.clamp, format="PNG")
        rep.add_output(args.clamp)
    rep.data["metrics"]["inputs"] = len(images)
    rep.emit(args.report)
    return EXIT_OK


def cmd_bench(args) -> int:
    rep = Report("bench", args)
    scene, intrinsics = synth.sphere_scene(args.size)
    depth = synth.render_depth(scene, intrinsics)
    light = LightSpec.point((0.4, -0.4, 0.2))
    cfg = lgi.LgiConfig(n_samples=args.n, interp=args.interp or "bilinear")
    work = args.size * args.size * args.n
    runs = []
    for t in args.threads:
        lgi.compute_lgi(depth, intrinsics, light, cfg, t)  # warm-up / JIT
        times = []
        digest = None
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            maps = lgi.compute_lgi(depth, intrinsics, light, cfg, t)
            times.append(time.perf_counter() - t0)
            digest = sha256_maps(maps)
        med = statistics.median(times)
        runs.append({"threads": t, "median_s": med, "pixel_samples_per_s": work / med, "digest": digest})
    digests = {r["digest"] for r in runs}
    m = rep.data["metrics"]
    m["runs"] = runs
    m["digests_identical"] = len(digests) == 1
    m["cpu_count"] = os.cpu_count()
    rep.emit(args.report)
    return EXIT_OK if len(digests) == 1 else EXIT_INTERNAL


def _load_vector(spec: str) -> np.ndarray:
    return np.asarray(json.loads(spec), dtype=np.float64)


def cmd_losses(args) -> int:
    rep = Report("losses", args)
    m = rep.data["metrics"]
    if args.images:
        paths = args.images
        for p in paths:
            rep.add_input(p)
        x1_hat, x1, x0 = (_read_image(p) for p in paths)
        cfg = bridgemath.WeightedL1Config(args.tau, args.kernel)
        m["weighted_l1"] = bridgemath.weighted_l1(x1_hat, x1, x0, cfg)
    if args.masks:
        for p in args.masks:
            rep.add_input(p)
        pred, gt = (io.read_mask_png(p) for p in args.masks)
        m["bce"] = bridgemath.mask_bce(pred, gt)
        m["iou_loss"] = _metric(bridgemath.mask_iou_loss, pred, gt)
    if args.bridge:
        z0, z1, noise = (_load_vector(s) for s in args.bridge)
        zt = bridgemath.bridge_sample(z0, z1, args.t, args.sigma, noise)
        m["zt"] = zt.tolist()
        if args.t < 1.0:
            v = bridgemath.drift_target(zt, z1, args.t)
            m["drift"] = v.tolist()
            m["retrieved"] = bridgemath.retrieve_target(zt, args.t, v).tolist()
    if args.lz is not None:
        lx = m.get("weighted_l1", 0.0) if args.lx is None else args.lx
        m["combined"] = bridgemath.combined_loss(args.lz, lx, args.lam)
    rep.emit(args.report)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgimap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--report", help="also append the JSON report line to this file")

    p = sub.add_parser("gen-scene", help="generate a synthetic scene suite with depth and oracle masks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=synth.SUITE_SIZE)
    p.add_argument("--size", type=int, default=synth.SUITE_RESOLUTION)
    p.add_argument("--back-lit", action="store_true", help="generate the ambiguous back-lit diagnostic set")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("render-depth", help="render exact depth for a scene config")
    p.add_argument("scene")
    p.add_argument("out")
    common(p)
    p.set_defaults(func=cmd_render_depth)

    p = sub.add_parser("lgi", help="compute LGI maps and shadow masks")
    p.add_argument("depth")
    p.add_argument("scene")
    p.add_argument("out", help="output prefix")
    p.add_argument("--n", type=int, help="samples per ray (config default 16)")
    p.add_argument("--eta", type=float, help="hard-mask threshold in degrees (default 5)")
    p.add_argument("--soft", type=float, metavar="BETA", help="also write a soft mask with this temperature in degrees")
    p.add_argument("--interp", choices=lgi.INTERP_MODES)
    p.add_argument("--sunlight", action="store_true", help="use parallel rays along the light direction")
    p.add_argument("--light", type=int, default=0, help="index of the light in the config")
    p.add_argument("--threads", type=int)
    common(p)
    p.set_defaults(func=cmd_lgi)

    p = sub.add_parser("eval", help="IoU / BER / RMSE of a predicted mask against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--rmse", nargs=2, metavar=("IMAGE", "REFERENCE"), help="images for overall and shadow-region RMSE")
    p.add_argument("--object-mask", help="mask PNG for object-region RMSE")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compose", help="sum linear-radiance PFM images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--clamp", metavar="PNG", help="also write a [0, 1]-clamped 8-bit display image")
    common(p)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("bench", help="LGI throughput per thread count")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--threads", type=int, nargs="+", default=[1, 8])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--interp", choices=lgi.INTERP_MODES)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("losses", help="evaluate bridge and loss kernels on serialized inputs")
    p.add_argument("--images", nargs=3, metavar=("X1_HAT", "X1", "X0"), help="weighted L1 on three images")
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--kernel", type=int, default=17)
    p.add_argument("--masks", nargs=2, metavar=("PRED", "GT"), help="BCE and IoU loss on two mask PNGs")
    p.add_argument("--bridge", nargs=3, metavar=("Z0", "Z1", "NOISE"), help="JSON vectors for a bridge sample")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--lz", type=float, help="latent loss for the combined objective")
    p.add_argument("--lx", type=float, help="image loss (defaults to the weighted L1 above)")
    p.add_argument("--lambda", dest="lam", type=float, default=bridgemath.DEFAULT_LAMBDA)
    common(p)
    p.set_defaults(func=cmd_losses)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LgiError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"lgimap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        print(f"lgimap {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
