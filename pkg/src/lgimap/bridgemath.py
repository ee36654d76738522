"""Brownian-bridge kernels, image/mask losses and multi-light composition.

Pure numpy functions: no learning loop, no networks. Random draws are always
supplied by the caller so Monte Carlo checks stay reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import DegenerateDenominator, DegenerateTime, ShapeMismatch
from .lgi import ShadowMask

BCE_EPS = 1e-7
DEFAULT_LAMBDA = 10.0


@dataclass(frozen=True)
class BridgeParams:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class WeightedL1Config:
    """Brightness-change threshold and square dilation size for the image loss."""

    tau: float = 0.01
    dilation_kernel: int = 17

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        k = self.dilation_kernel
        if int(k) != k or k < 1 or k % 2 == 0:
            raise ValueError(f"dilation_kernel must be an odd integer >= 1, got {k}")


def _same_shape(*arrays: np.ndarray) -> None:
    first = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != first:
            raise ShapeMismatch(f"shape {a.shape} does not match {first}")


def _as_float(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_time(t: float, upper_open: bool) -> float:
    t = float(t)
    if upper_open and t >= 1.0:
        raise DegenerateTime(f"t must be < 1, got {t}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


def bridge_sample(z0, z1, t: float, sigma: float, noise) -> np.ndarray:
    """z(t) = (1-t) z0 + t z1 + sigma sqrt(t(1-t)) noise."""
    z0, z1, noise = _as_float(z0), _as_float(z1), _as_float(noise)
    _same_shape(z0, z1, noise)
    t = _check_time(t, upper_open=False)
    if not sigma >= 0:
        raise ValueError("sigma must be >= 0")
    return (1.0 - t) * z0 + t * z1 + sigma * np.sqrt(t * (1.0 - t)) * noise


def drift_target(zt, z1, t: float) -> np.ndarray:
    """True bridge drift (z1 - z(t)) / (1 - t)."""
    zt, z1 = _as_float(zt), _as_float(z1)
    _same_shape(zt, z1)
    t = _check_time(t, upper_open=True)
    return (z1 - zt) / (1.0 - t)


def retrieve_target(zt, t: float, v) -> np.ndarray:
    """Recover the endpoint from a drift estimate: (1 - t) v + z(t)."""
    zt, v = _as_float(zt), _as_float(v)
    _same_shape(zt, v)
    t = _check_time(t, upper_open=True)
    return (1.0 - t) * v + zt


def latent_mse(
    drift_fn: Callable[[np.ndarray, float], np.ndarray],
    z0,
    z1,
    t,
    sigma: float,
    noise,
) -> float:
    """Bridge-matching regression loss over a batch.

    Rows of ``z0``, ``z1`` and ``noise`` are paired with entries of ``t``; the
    loss is the mean squared error between ``drift_fn(z(t), t)`` and the true
    drift, averaged over all batch entries and coordinates.
    """
    z0, z1, noise = np.atleast_2d(_as_float(z0)), np.atleast_2d(_as_float(z1)), np.atleast_2d(_as_float(noise))
    t = np.atleast_1d(_as_float(t))
    _same_shape(z0, z1, noise)
    if t.shape != (len(z0),):
        raise ShapeMismatch(f"expected {len(z0)} times, got shape {t.shape}")
    total = 0.0
    for a, b, n, ti in zip(z0, z1, noise, t):
        zt = bridge_sample(a, b, ti, sigma, n)
        pred = _as_float(drift_fn(zt, float(ti)))
        target = drift_target(zt, b, ti)
        _same_shape(pred, target)
        total += float(np.mean((pred - target) ** 2))
    return total / len(z0)


def change_weights(x1, x0, cfg: WeightedL1Config = WeightedL1Config()) -> np.ndarray:
    """Binary (H, W) weights: dilated set of pixels whose brightness changes by more than tau."""
    x1, x0 = _as_float(x1), _as_float(x0)
    _same_shape(x1, x0)
    diff = np.abs(x1 - x0)
    if diff.ndim == 3:
        diff = diff.max(axis=-1)
    changed = diff > cfg.tau
    k = int(cfg.dilation_kernel)
    if k == 1:
        return changed
    # zero padding: pixels outside the image are never "changed"
    return binary_dilation(changed, structure=np.ones((k, k), dtype=bool), border_value=0)


def weighted_l1(x1_hat, x1, x0, cfg: WeightedL1Config = WeightedL1Config()) -> float:
    """Mean over all pixel-channel slots of w * |x1 - x1_hat|."""
    x1_hat, x1, x0 = _as_float(x1_hat), _as_float(x1), _as_float(x0)
    _same_shape(x1_hat, x1, x0)
    w = change_weights(x1, x0, cfg)
    if x1.ndim == 3:
        w = w[..., None]
    return float(np.mean(w * np.abs(x1 - x1_hat)))


def combined_loss(lz: float, lx: float, lam: float = DEFAULT_LAMBDA) -> float:
    if not lam >= 0:
        raise ValueError("lambda must be >= 0")
    return float(lz + lam * lx)


def _mask_values(m) -> np.ndarray:
    return _as_float(m.values if isinstance(m, ShadowMask) else m)


def mask_bce(pred, gt) -> float:
    """Binary cross entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    p, g = _mask_values(pred), _mask_values(gt)
    _same_shape(p, g)
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)))


def mask_iou_loss(pred, gt) -> float:
    """1 - E[p g] / E[p + g - p g]."""
    p, g = _mask_values(pred), _mask_values(gt)
    _same_shape(p, g)
    inter = np.mean(p * g)
    union = np.mean(p + g - p * g)
    if not union > 0:
        raise DegenerateDenominator("IoU loss undefined for two empty masks")
    return float(1.0 - inter / union)


def compose_lights(contributions: Sequence) -> np.ndarray:
    """Sum of per-light linear radiance images.

    Values are summed in sorted order per element, so the result does not
    depend on the order of ``contributions`` down to the last bit.
    """
    if len(contributions) == 0:
        raise ValueError("need at least one image to compose")
    images = [_as_float(c) for c in contributions]
    _same_shape(*images)
    if len(images) == 1:
        return images[0].copy()
    return np.sort(np.stack(images), axis=0).sum(axis=0)


def display_clamp(image) -> np.ndarray:
    """Display transform applied after composition: clamp to [0, 1]."""
    return np.clip(_as_float(image), 0.0, 1.0)
