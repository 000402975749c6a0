"""Synthetic 32x32 two-domain digit dataset for desk-scale runs.

Domain A mimics handwritten-digit scans: a light glyph on a dark background.
Domain B mimics street-number photos: a colored glyph over a noisy colored
background. Both domains draw the same digit glyphs, so a translation
between them exists; generation is fully offline and seed-deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont


def _font(size: int):
    try:
        return ImageFont.load_default(size=size)
    except TypeError:
        return ImageFont.load_default()


def _glyph(digit: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Anti-aliased digit glyph as a float [0, 1] alpha map with jitter."""
    scale = 4
    canvas = Image.new("L", (size * scale, size * scale), 0)
    draw = ImageDraw.Draw(canvas)
    font = _font(int(size * scale * rng.uniform(0.55, 0.8)))
    text = str(digit)
    x0, y0, x1, y1 = draw.textbbox((0, 0), text, font=font)
    w, h = x1 - x0, y1 - y0
    max_dx = max(1, size * scale - w)
    max_dy = max(1, size * scale - h)
    dx = int(rng.integers(0, max_dx))
    dy = int(rng.integers(0, max_dy))
    draw.text((dx - x0, dy - y0), text, fill=255, font=font)
    canvas = canvas.resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(canvas, dtype=np.float32) / 255.0


def _domain_a_image(size: int, rng: np.random.Generator) -> Image.Image:
    digit = int(rng.integers(0, 10))
    alpha = _glyph(digit, size, rng)
    background = rng.uniform(0.0, 0.1)
    ink = rng.uniform(0.85, 1.0)
    gray = background + alpha * (ink - background)
    arr = (np.clip(gray, 0, 1) * 255).astype(np.uint8)
    return Image.fromarray(arr, mode="L").convert("RGB")


def _domain_b_image(size: int, rng: np.random.Generator) -> Image.Image:
    digit = int(rng.integers(0, 10))
    alpha = _glyph(digit, size, rng)[..., None]
    base = rng.uniform(0.2, 0.9, size=3)
    noise = rng.normal(0, 0.08, size=(size, size, 3))
    background = np.clip(base[None, None, :] + noise, 0, 1)
    ink = np.clip(1.0 - base + rng.uniform(-0.2, 0.2, size=3), 0, 1)
    rgb = background * (1 - alpha) + ink[None, None, :] * alpha
    arr = (np.clip(rgb, 0, 1) * 255).astype(np.uint8)
    return Image.fromarray(arr, mode="RGB")


def make_dataset(
    root: str | Path,
    n_train: int = 500,
    n_test: int = 100,
    size: int = 32,
    seed: int = 0,
) -> Path:
    """Write {root}/{trainA,trainB,testA,testB}/*.png; returns the root."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    jobs = [
        ("trainA", n_train, _domain_a_image),
        ("trainB", n_train, _domain_b_image),
        ("testA", n_test, _domain_a_image),
        ("testB", n_test, _domain_b_image),
    ]
    for sub, count, maker in jobs:
        folder = root / sub
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            maker(size, rng).save(folder / f"{i:05d}.png")
    return root
