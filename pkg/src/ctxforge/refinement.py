"""Local refinement: iterated sign-gradient ascent on the classifier loss,
projected back into per-region L-infinity balls around the original image.

The foreground (object mask) and background can carry different radii; a
radius of inf disables the ball projection for that region, leaving only the
pixel-bound clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .imageops import Image


@dataclass
class PgdConfig:
    alpha: float = 1.6 / 255
    iterations: int = 8
    eps_fg: float = math.inf
    eps_bg: float = math.inf
    init_noise: float | None = None  # None -> min(alpha, finite eps)/2, or alpha/2 if none finite
    pixel_bounds: tuple = (0.0, 1.0)

    def validate(self) -> "PgdConfig":
        if self.iterations < 0:
            raise InputError(f"iterations must be >= 0, got {self.iterations}")
        if self.iterations > 0 and self.alpha <= 0:
            raise InputError(f"alpha must be > 0 when iterations > 0, got {self.alpha}")
        if self.eps_fg < 0 or self.eps_bg < 0:
            raise InputError(f"eps values must be >= 0 or inf, got ({self.eps_fg}, {self.eps_bg})")
        if self.init_noise is not None and self.init_noise < 0:
            raise InputError(f"init_noise must be >= 0, got {self.init_noise}")
        return self

    def resolved_init_noise(self) -> float:
        if self.init_noise is not None:
            return self.init_noise
        finite = [e for e in (self.eps_fg, self.eps_bg) if math.isfinite(e)]
        if finite:
            return min(self.alpha, min(finite)) / 2.0
        return self.alpha / 2.0


def _to_nchw(images: list) -> np.ndarray:
    return np.stack([img.pixels.transpose(2, 0, 1) for img in images])


def _from_nchw(batch: np.ndarray) -> list:
    return [Image(arr.transpose(1, 2, 0)) for arr in batch]


def pgd_refine_batch(net, images: list, labels, masks: list, cfg: PgdConfig, rngs: list) -> list:
    """Refine a batch of independent images against a frozen classifier.

    Sign gradients make the batched update identical to per-image refinement;
    `rngs` supplies one init-noise stream per slot so results do not depend
    on how slots are batched. The network runs in eval mode throughout.
    """
    cfg.validate()
    if not len(images) == len(masks) == len(rngs):
        raise InputError("images, masks, and rngs must have equal lengths")
    for img, mask in zip(images, masks):
        if mask.shape != (img.height, img.width):
            raise InputError(f"mask shape {mask.shape} does not match image {(img.height, img.width)}")
    x0 = _to_nchw(images)
    dt = x0.dtype.type
    labels = np.asarray(labels)
    lo, hi = cfg.pixel_bounds
    noise_amp = cfg.resolved_init_noise()
    if noise_amp > 0:
        noise = np.stack([rng.uniform(-noise_amp, noise_amp, size=x0.shape[1:]) for rng in rngs])
        x_adv = np.clip(x0 + noise.astype(dt), lo, hi)
    else:
        x_adv = x0.copy()
    if cfg.iterations == 0:
        return _from_nchw(x_adv)
    mask_arr = np.stack(masks)[:, None, :, :]  # (B, 1, H, W)
    eps = np.where(mask_arr, dt(cfg.eps_fg), dt(cfg.eps_bg))
    alpha = dt(cfg.alpha)
    for _ in range(cfg.iterations):
        _, igrad, _ = net.backward(x_adv, labels, mode="eval", need_param_grads=False)
        x_adv = x_adv + alpha * np.sign(igrad.array).astype(dt)
        delta = np.clip(x_adv - x0, -eps, eps)
        x_adv = np.clip(x0 + delta, lo, hi)
    return _from_nchw(x_adv)


def pgd_refine(net, x: Image, y: int, mask: np.ndarray, cfg: PgdConfig, rng: np.random.Generator) -> Image:
    """Single-image refinement; the label is consumed for the loss and never
    altered, so (x', y) keeps the original label."""
    return pgd_refine_batch(net, [x], np.array([y]), [mask], cfg, [rng])[0]
