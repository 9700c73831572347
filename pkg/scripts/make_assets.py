#!/usr/bin/env python3
"""Regenerate the bundled exemplar sets.

- assets/font: the ten digits rasterized from DejaVu Sans at 28x28, white
  glyph with antialiased alpha, glyph box scaled to ~20 px and centered
- assets/shapes: five colored geometric shapes at 32x32 with alpha, used by
  the test suite

Both sets follow the exemplar directory layout: <class_id>.png + labels.tsv.
"""

import os

import numpy as np
from PIL import Image, ImageDraw, ImageFont

HERE = os.path.dirname(os.path.abspath(__file__))
ASSETS = os.path.join(HERE, "..", "src", "ctxforge", "assets")

FONT_CANDIDATES = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
]


def find_font():
    for path in FONT_CANDIDATES:
        if os.path.exists(path):
            return path
    import matplotlib

    path = os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "fonts", "ttf", "DejaVuSans.ttf")
    if os.path.exists(path):
        return path
    raise SystemExit("no DejaVu Sans TTF found")


def render_digit(digit: str, font_path: str, size: int = 28, glyph_px: int = 20, super_k: int = 8):
    # render huge, crop to ink, scale the glyph box to glyph_px, center
    big = size * super_k
    font = ImageFont.truetype(font_path, int(big * 0.9))
    canvas = Image.new("L", (big * 2, big * 2), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((big // 2, big // 2), digit, fill=255, font=font)
    bbox = canvas.getbbox()
    glyph = canvas.crop(bbox)
    scale = glyph_px * super_k / max(glyph.size)
    new_size = (max(1, round(glyph.size[0] * scale)), max(1, round(glyph.size[1] * scale)))
    glyph = glyph.resize(new_size, Image.LANCZOS)
    out = Image.new("L", (big, big), 0)
    out.paste(glyph, ((big - new_size[0]) // 2, (big - new_size[1]) // 2))
    alpha = np.asarray(out.resize((size, size), Image.LANCZOS), dtype=np.float32) / 255.0
    alpha = np.clip(alpha, 0.0, 1.0)
    la = np.stack([np.full_like(alpha, 1.0), alpha], axis=2)
    return Image.fromarray((la * 255).round().astype(np.uint8), mode="LA")


def make_font_set():
    out_dir = os.path.join(ASSETS, "font")
    os.makedirs(out_dir, exist_ok=True)
    font_path = find_font()
    for d in range(10):
        render_digit(str(d), font_path).save(os.path.join(out_dir, f"{d}.png"))
    with open(os.path.join(out_dir, "labels.tsv"), "w") as f:
        for d in range(10):
            f.write(f"{d}\tdigit-{d}\n")
    print(f"wrote 10 digit exemplars to {out_dir}")


def make_shapes_set(size: int = 32, super_k: int = 8):
    out_dir = os.path.join(ASSETS, "shapes")
    os.makedirs(out_dir, exist_ok=True)
    big = size * super_k
    cx = big / 2
    r = big * 0.34
    shapes = [
        ("circle", (230, 60, 60), lambda d: d.ellipse([cx - r, cx - r, cx + r, cx + r], fill=255)),
        ("square", (60, 120, 230), lambda d: d.rectangle([cx - r, cx - r, cx + r, cx + r], fill=255)),
        (
            "triangle",
            (60, 200, 90),
            lambda d: d.polygon([(cx, cx - r), (cx - r, cx + r), (cx + r, cx + r)], fill=255),
        ),
        (
            "cross",
            (240, 180, 40),
            lambda d: (
                d.rectangle([cx - r / 3, cx - r, cx + r / 3, cx + r], fill=255),
                d.rectangle([cx - r, cx - r / 3, cx + r, cx + r / 3], fill=255),
            ),
        ),
        (
            "diamond",
            (180, 70, 220),
            lambda d: d.polygon([(cx, cx - r), (cx + r, cx), (cx, cx + r), (cx - r, cx)], fill=255),
        ),
    ]
    for cid, (name, color, painter) in enumerate(shapes):
        mask = Image.new("L", (big, big), 0)
        painter(ImageDraw.Draw(mask))
        alpha = np.asarray(mask.resize((size, size), Image.LANCZOS), dtype=np.float32) / 255.0
        rgba = np.zeros((size, size, 4), dtype=np.uint8)
        rgba[:, :, 0], rgba[:, :, 1], rgba[:, :, 2] = color
        rgba[:, :, 3] = (np.clip(alpha, 0, 1) * 255).round().astype(np.uint8)
        Image.fromarray(rgba, mode="RGBA").save(os.path.join(out_dir, f"{cid}.png"))
    with open(os.path.join(out_dir, "labels.tsv"), "w") as f:
        for cid, (name, _, _) in enumerate(shapes):
            f.write(f"{cid}\t{name}\n")
    print(f"wrote {len(shapes)} shape exemplars to {out_dir}")


if __name__ == "__main__":
    make_font_set()
    make_shapes_set()
