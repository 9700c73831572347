"""Image transforms and compositing.

Images are float arrays in [0, 1], shape (H, W, C) with C in {1, 3}, plus an
optional (H, W) alpha plane. All transforms return new images, clamp their
output into [0, 1], and take randomness only through an explicit Generator,
so every op is a pure function of (inputs, rng state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from PIL import Image as PILImage

from .errors import InputError


@dataclass
class Image:
    """H x W x C pixel array in [0,1] with an optional H x W alpha plane."""

    pixels: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim == 2:
            self.pixels = self.pixels[:, :, None]
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise InputError(f"pixels must be (H, W, C) with C in {{1, 3}}, got shape {self.pixels.shape}")
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float32)
            if self.alpha.shape != self.pixels.shape[:2]:
                raise InputError(
                    f"alpha shape {self.alpha.shape} does not match image {self.pixels.shape[:2]}"
                )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def copy(self) -> "Image":
        return Image(self.pixels.copy(), None if self.alpha is None else self.alpha.copy())


@dataclass
class AugmentParams:
    """Ranges for object augmentation draws.

    Geometric magnitudes are symmetric maxima (rotation degrees, translate
    fraction per axis, shear degrees); scale and the photometric factors are
    (lo, hi) ranges; blur_kernel is the largest odd kernel considered.
    """

    rotation: float = 15.0
    translate: tuple = (0.10, 0.10)
    scale: tuple = (0.8, 1.2)
    shear: float = 10.0
    perspective_distortion: float = 0.2
    blur_kernel: int = 3
    brightness: tuple = (1.0, 1.0)
    contrast: tuple = (1.0, 1.0)
    saturation: tuple = (1.0, 1.0)
    hue: float = 0.0
    exposure: tuple = (1.0, 1.0)

    def validate(self):
        if self.scale[0] <= 0 or self.scale[1] <= 0:
            raise InputError(f"scale range must be positive, got {self.scale}")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise InputError(f"blur_kernel must be an odd integer >= 1, got {self.blur_kernel}")
        for name in ("scale", "brightness", "contrast", "saturation", "exposure"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InputError(f"{name} range is not ordered: ({lo}, {hi})")
        if not 0.0 <= self.perspective_distortion < 0.5:
            raise InputError(f"perspective_distortion must be in [0, 0.5), got {self.perspective_distortion}")
        if not 0.0 <= self.hue <= 0.5:
            raise InputError(f"hue must be in [0, 0.5], got {self.hue}")
        return self


def _clip01(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)


def _warp_plane(plane: np.ndarray, matrix: np.ndarray, fill: float, perspective: bool) -> np.ndarray:
    h, w = plane.shape[:2]
    warp = cv2.warpPerspective if perspective else cv2.warpAffine
    out = warp(
        plane,
        matrix,
        (w, h),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=fill,
    )
    if out.ndim == 2 and plane.ndim == 3:
        out = out[:, :, None]
    return out


def _affine_matrix(h, w, rotation, translate, scale, shear):
    # compose about the image center: translate . rotate . shear . scale
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rot = math.radians(rotation)
    sh = math.radians(shear)
    cos_r, sin_r = math.cos(rot), math.sin(rot)
    a = scale * (cos_r - sin_r * math.tan(sh))
    b = scale * -sin_r
    c = scale * (sin_r + cos_r * math.tan(sh))
    d = scale * cos_r
    tx = translate[0] * w
    ty = translate[1] * h
    m = np.array(
        [
            [a, b, cx + tx - (a * cx + b * cy)],
            [c, d, cy + ty - (c * cx + d * cy)],
        ],
        dtype=np.float64,
    )
    return m


def affine_warp(img: Image, rotation: float, translate, scale: float, shear: float, fill: float = 0.0) -> Image:
    """Rotate/translate/scale/shear about the image center with bilinear sampling.

    Out-of-bounds source reads produce `fill` in the pixels and 0 in the
    alpha plane. `translate` is an (fx, fy) fraction of width/height.
    """
    if scale <= 0:
        raise InputError(f"scale must be > 0, got {scale}")
    if rotation == 0.0 and translate[0] == 0.0 and translate[1] == 0.0 and scale == 1.0 and shear == 0.0:
        return img.copy()
    m = _affine_matrix(img.height, img.width, rotation, translate, scale, shear)
    pixels = _clip01(_warp_plane(img.pixels, m, float(fill), perspective=False))
    alpha = None
    if img.alpha is not None:
        alpha = _clip01(_warp_plane(img.alpha, m, 0.0, perspective=False))
    return Image(pixels, alpha)


def perspective_warp(img: Image, distortion: float, rng: np.random.Generator) -> Image:
    """Four-corner homography with corners displaced inward by up to
    distortion * min(H, W) pixels per axis. Alpha is warped identically."""
    if not 0.0 <= distortion < 0.5:
        raise InputError(f"distortion must be in [0, 0.5), got {distortion}")
    h, w = img.height, img.width
    d = distortion * min(h, w)
    shifts = rng.uniform(0.0, d, size=(4, 2)) if d > 0 else np.zeros((4, 2))
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float32)
    inward = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float32)
    dst = (src + inward * shifts.astype(np.float32)).astype(np.float32)
    m = cv2.getPerspectiveTransform(src, dst)
    pixels = _clip01(_warp_plane(img.pixels, m, 0.0, perspective=True))
    alpha = None
    if img.alpha is not None:
        alpha = _clip01(_warp_plane(img.alpha, m, 0.0, perspective=True))
    return Image(pixels, alpha)


def blur(img: Image, kernel: int) -> Image:
    """Normalized box filter with edge-replicate padding; alpha passes through."""
    if kernel % 2 == 0:
        raise InputError(f"blur kernel must be odd, got {kernel}")
    if kernel < 1 or kernel > min(img.height, img.width):
        raise InputError(f"blur kernel {kernel} out of range for {img.height}x{img.width} image")
    if kernel == 1:
        return img.copy()
    out = cv2.blur(img.pixels, (kernel, kernel), borderType=cv2.BORDER_REPLICATE)
    if out.ndim == 2:
        out = out[:, :, None]
    alpha = None if img.alpha is None else img.alpha.copy()
    return Image(_clip01(out), alpha)


def _blend(a: np.ndarray, b: np.ndarray, factor: float) -> np.ndarray:
    # factor 1 -> a unchanged, factor 0 -> b
    return b + factor * (a - b)


def _gray(pixels: np.ndarray) -> np.ndarray:
    if pixels.shape[2] == 1:
        return pixels[:, :, 0]
    return 0.299 * pixels[:, :, 0] + 0.587 * pixels[:, :, 1] + 0.114 * pixels[:, :, 2]


def _shift_hue(pixels: np.ndarray, shift: float) -> np.ndarray:
    hsv = cv2.cvtColor(pixels, cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = np.mod(hsv[:, :, 0] + shift * 360.0, 360.0)
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)


def color_jitter(img: Image, params: AugmentParams, rng: np.random.Generator) -> Image:
    """Random brightness/contrast/saturation/hue within the configured ranges.

    Applied in that fixed order; saturation and hue are skipped on
    single-channel images. Alpha passes through untouched.
    """
    pixels = img.pixels
    b = rng.uniform(*params.brightness)
    if b != 1.0:
        pixels = pixels * np.float32(b)
    c = rng.uniform(*params.contrast)
    if c != 1.0:
        mean = np.float32(_gray(_clip01(pixels)).mean())
        pixels = _blend(pixels, mean, np.float32(c))
    if img.channels == 3:
        s = rng.uniform(*params.saturation)
        if s != 1.0:
            gray = _gray(_clip01(pixels))[:, :, None]
            pixels = _blend(pixels, gray, np.float32(s))
        h = rng.uniform(-params.hue, params.hue) if params.hue > 0 else 0.0
        if h != 0.0:
            pixels = _shift_hue(_clip01(np.ascontiguousarray(pixels, dtype=np.float32)), h)
    alpha = None if img.alpha is None else img.alpha.copy()
    return Image(_clip01(pixels), alpha)


def exposure_adjust(img: Image, factor: float) -> Image:
    """Multiply all channels by `factor` and clamp; alpha passes through."""
    if factor <= 0:
        raise InputError(f"exposure factor must be > 0, got {factor}")
    if factor == 1.0:
        return img.copy()
    alpha = None if img.alpha is None else img.alpha.copy()
    return Image(_clip01(img.pixels * np.float32(factor)), alpha)


def composite(obj: Image, context: Image) -> Image:
    """Superimpose `obj` on `context`: out = alpha*obj + (1-alpha)*context.

    The output carries no alpha; the foreground region remains derivable from
    the object's alpha as alpha > 0.5.
    """
    if obj.alpha is None:
        raise InputError("composite requires an object image with an alpha plane")
    if obj.pixels.shape != context.pixels.shape:
        raise InputError(
            f"object shape {obj.pixels.shape} does not match context shape {context.pixels.shape}"
        )
    a = obj.alpha[:, :, None]
    out = a * obj.pixels + (1.0 - a) * context.pixels
    return Image(_clip01(out), None)


def uniform_noise_image(h: int, w: int, c: int, rng: np.random.Generator) -> Image:
    """I.i.d. per-pixel, per-channel Uniform[0, 1) noise."""
    if h <= 0 or w <= 0 or c not in (1, 3):
        raise InputError(f"bad noise image dims ({h}, {w}, {c})")
    return Image(rng.random((h, w, c), dtype=np.float32), None)


def load_png(path) -> Image:
    """Read a PNG as float pixels in [0,1]; LA/RGBA alpha becomes the alpha plane."""
    with PILImage.open(path) as pil:
        if pil.mode == "P":
            pil = pil.convert("RGBA")
        if pil.mode not in ("L", "LA", "RGB", "RGBA"):
            pil = pil.convert("RGBA")
        arr = np.asarray(pil, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        return Image(arr[:, :, None], None)
    if arr.shape[2] == 2:
        return Image(arr[:, :, :1], arr[:, :, 1])
    if arr.shape[2] == 4:
        return Image(arr[:, :, :3], arr[:, :, 3])
    return Image(arr, None)


def save_png(img: Image, path) -> None:
    """Write 8-bit PNG (straight alpha); values quantized as round(v*255)."""
    px = np.rint(img.pixels * 255.0).astype(np.uint8)
    if img.alpha is not None:
        al = np.rint(img.alpha * 255.0).astype(np.uint8)[:, :, None]
        arr = np.concatenate([px, al], axis=2)
        mode = "LA" if px.shape[2] == 1 else "RGBA"
        PILImage.fromarray(arr, mode=mode).save(path)
    elif px.shape[2] == 1:
        PILImage.fromarray(px[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(px, mode="RGB").save(path)
