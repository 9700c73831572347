"""Bit-exact readers for evaluation data plus the frozen synthetic set used
for checkpoint selection."""

from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image as PILImage

from .errors import DatasetError, FormatError, InputError
from .imageops import composite, uniform_noise_image
from .objects import sample_object
from .rng import substream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

GTSRB_CSV_FIELDS = ["Filename", "Width", "Height", "Roi.X1", "Roi.Y1", "Roi.X2", "Roi.Y2", "ClassId"]
GTSRB_CLASSES = 43


@dataclass
class TestSet:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) int
    source: str  # "mnist" | "gtsrb" | "synthetic"

    def __len__(self) -> int:
        return len(self.labels)

    def to_nchw(self) -> np.ndarray:
        return self.images.transpose(0, 3, 1, 2)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"IDX file truncated while reading {what}")
    return buf


def _open_maybe_gz(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _parse_idx(path, expected_magic: int, ndim: int):
    with _open_maybe_gz(path) as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, "magic"))
        if magic != expected_magic:
            raise FormatError(f"bad IDX magic 0x{magic:08x} in {path}, expected 0x{expected_magic:08x}")
        dims = struct.unpack(f">{ndim}I", _read_exact(f, 4 * ndim, "dimensions"))
        count = 1
        for d in dims:
            count *= d
        payload = _read_exact(f, count, "payload")
        if f.read(1):
            raise FormatError(f"trailing bytes after IDX payload in {path}")
    return dims, np.frombuffer(payload, dtype=np.uint8)


def load_mnist_idx(images_path, labels_path) -> TestSet:
    """Parse an IDX image/label file pair (big-endian header, u8 payload)."""
    img_dims, img_data = _parse_idx(images_path, IDX_IMAGES_MAGIC, 3)
    lab_dims, lab_data = _parse_idx(labels_path, IDX_LABELS_MAGIC, 1)
    n, h, w = img_dims
    if lab_dims[0] != n:
        raise DatasetError(f"image count {n} != label count {lab_dims[0]}")
    if lab_data.size and lab_data.max() > 9:
        raise DatasetError(f"label {lab_data.max()} out of range for 10 classes")
    images = (img_data.reshape(n, h, w, 1).astype(np.float32)) / 255.0
    return TestSet(images, lab_data.astype(np.int64), "mnist")


def find_mnist_test(root):
    """Locate the test image/label IDX pair (plain or .gz) under a root dir."""
    pairs = [
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
    ]
    for img_name, lab_name in pairs:
        for suffix in ("", ".gz"):
            img = os.path.join(root, img_name + suffix)
            lab = os.path.join(root, lab_name + suffix)
            if os.path.exists(img) and os.path.exists(lab):
                return img, lab
    raise DatasetError(
        f"no t10k-images/t10k-labels IDX pair under {root}; run scripts/fetch_mnist.sh there"
    )


def _find_gtsrb_csv(root):
    candidates = []
    for dirpath, _, files in os.walk(root):
        for fname in files:
            if fname.lower().endswith(".csv") and fname.startswith("GT-"):
                candidates.append(os.path.join(dirpath, fname))
    if not candidates:
        raise DatasetError(f"no GT-*.csv annotation file under {root}")
    if len(candidates) > 1:
        final = [c for c in candidates if "final_test" in os.path.basename(c).lower()]
        if len(final) == 1:
            return final[0]
        raise DatasetError(f"multiple annotation CSVs under {root}: {candidates}")
    return candidates[0]


def load_gtsrb_test(root, image_size: int = 32) -> TestSet:
    """Load the final test images: ROI-crop per annotation row, bilinear
    resize to image_size^2, RGB floats. Rows are sorted by filename."""
    csv_path = _find_gtsrb_csv(root)
    base = os.path.dirname(csv_path)
    rows = []
    with open(csv_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=";")
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != GTSRB_CSV_FIELDS:
            raise FormatError(f"unexpected GTSRB CSV header in {csv_path}: {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(GTSRB_CSV_FIELDS):
                raise FormatError(f"{csv_path}:{lineno}: expected {len(GTSRB_CSV_FIELDS)} fields, got {len(row)}")
            try:
                fname = row[0]
                x1, y1, x2, y2 = (int(v) for v in row[3:7])
                class_id = int(row[7])
            except ValueError as exc:
                raise FormatError(f"{csv_path}:{lineno}: {exc}") from exc
            if not 0 <= class_id < GTSRB_CLASSES:
                raise DatasetError(f"{csv_path}:{lineno}: ClassId {class_id} outside [0, {GTSRB_CLASSES})")
            rows.append((fname, x1, y1, x2, y2, class_id))
    rows.sort(key=lambda r: r[0])
    images = np.empty((len(rows), image_size, image_size, 3), dtype=np.float32)
    labels = np.empty(len(rows), dtype=np.int64)
    for i, (fname, x1, y1, x2, y2, class_id) in enumerate(rows):
        path = os.path.join(base, fname)
        if not os.path.exists(path):
            raise DatasetError(f"annotated image missing: {path}")
        with PILImage.open(path) as pil:
            arr = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
        crop = arr[y1:y2, x1:x2]
        if crop.size == 0:
            raise DatasetError(f"{csv_path}: empty ROI ({x1},{y1},{x2},{y2}) for {fname}")
        if crop.shape[:2] != (image_size, image_size):
            crop = cv2.resize(crop, (image_size, image_size), interpolation=cv2.INTER_LINEAR)
        images[i] = crop
        labels[i] = class_id
    return TestSet(images, labels, "gtsrb")


def build_synthetic_testset(exemplars: list, aug, size: int, seed: int) -> TestSet:
    """Class-balanced composites on fresh noise, no refinement; deterministic
    in `seed`. Class c appears size//N or size//N + 1 times."""
    n_classes = len(exemplars)
    if size < n_classes:
        raise InputError(f"size {size} < number of classes {n_classes}")
    ex0 = exemplars[0].canonical
    h, w, c = ex0.height, ex0.width, ex0.channels
    images = np.empty((size, h, w, c), dtype=np.float32)
    labels = np.empty(size, dtype=np.int64)
    for i in range(size):
        cls = i % n_classes
        rendered = sample_object(exemplars[cls], aug, substream(seed, "val-render", i))
        noise = uniform_noise_image(h, w, c, substream(seed, "val-noise", i))
        images[i] = composite(rendered.image, noise).pixels
        labels[i] = cls
    return TestSet(images, labels, "synthetic")
