"""Object sampling: one canonical exemplar per class -> unlimited randomized
renderings in random pose, each with a binary foreground mask."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError
from .imageops import (
    AugmentParams,
    Image,
    affine_warp,
    blur,
    color_jitter,
    exposure_adjust,
    load_png,
    perspective_warp,
)

MASK_THRESHOLD = 0.5


@dataclass
class ObjectExemplar:
    class_id: int
    canonical: Image  # carries alpha
    name: str = ""


@dataclass
class RenderedObject:
    image: Image  # carries alpha
    mask: np.ndarray  # bool (H, W), == alpha > 0.5 after the geometric stage
    class_id: int


def sample_object(exemplar: ObjectExemplar, aug: AugmentParams, rng: np.random.Generator) -> RenderedObject:
    """One randomized rendering of the exemplar.

    Order is fixed: affine, perspective, photometrics (3-channel images
    only), blur. The mask comes from the geometrically warped alpha; the
    photometric stages and blur never touch alpha.
    """
    aug.validate()
    rotation = rng.uniform(-aug.rotation, aug.rotation)
    translate = (rng.uniform(-aug.translate[0], aug.translate[0]), rng.uniform(-aug.translate[1], aug.translate[1]))
    scale = rng.uniform(*aug.scale)
    shear = rng.uniform(-aug.shear, aug.shear)
    img = affine_warp(exemplar.canonical, rotation, translate, scale, shear, fill=0.0)
    img = perspective_warp(img, aug.perspective_distortion, rng)
    if img.channels == 3:
        img = color_jitter(img, aug, rng)
        img = exposure_adjust(img, float(rng.uniform(*aug.exposure)))
    kernels = list(range(1, aug.blur_kernel + 1, 2))
    img = blur(img, int(rng.choice(kernels)))
    mask = img.alpha > MASK_THRESHOLD
    return RenderedObject(img, mask, exemplar.class_id)


_EXEMPLAR_RE = re.compile(r"^(\d+)\.png$")


def _infer_alpha(img: Image, background: str) -> Image:
    # remediation path for flat PNGs: treat the named background as transparent
    gray = img.pixels.mean(axis=2)
    alpha = 1.0 - gray if background == "white" else gray
    return Image(img.pixels, np.clip(alpha, 0.0, 1.0).astype(np.float32))


def load_exemplars(directory, expected_n: int, infer_alpha: str | None = None) -> list:
    """Load `<class_id>.png` files covering ids 0..expected_n-1, one each.

    Files without an alpha channel are rejected unless `infer_alpha` is
    "white" or "black", which derives alpha from the background shade.
    Names come from an optional labels.tsv (class_id<TAB>name).
    """
    if not os.path.isdir(directory):
        raise DatasetError(f"exemplar directory not found: {directory}")
    found = {}
    for fname in sorted(os.listdir(directory)):
        m = _EXEMPLAR_RE.match(fname)
        if not m:
            continue
        cid = int(m.group(1))
        if cid in found:
            raise DatasetError(f"duplicate exemplar for class {cid} in {directory}")
        found[cid] = os.path.join(directory, fname)
    missing = [i for i in range(expected_n) if i not in found]
    if missing:
        raise DatasetError(f"missing exemplar class ids {missing} in {directory}")
    extra = [i for i in found if i >= expected_n]
    if extra:
        raise DatasetError(f"unexpected exemplar class ids {extra} (expected 0..{expected_n - 1})")
    names = {}
    labels_path = os.path.join(directory, "labels.tsv")
    if os.path.exists(labels_path):
        with open(labels_path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                cid_s, _, name = line.partition("\t")
                names[int(cid_s)] = name
    out = []
    for cid in range(expected_n):
        img = load_png(found[cid])
        if img.alpha is None:
            if infer_alpha in ("white", "black"):
                img = _infer_alpha(img, infer_alpha)
            else:
                raise DatasetError(
                    f"{found[cid]} has no alpha channel; re-export with transparency or pass "
                    f"infer_alpha='white'/'black' to treat that background as transparent"
                )
        out.append(ObjectExemplar(cid, img, names.get(cid, str(cid))))
    return out
