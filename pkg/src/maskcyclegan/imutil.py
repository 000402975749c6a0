"""Tensor/PIL conversion helpers and simple grid tiling for snapshots."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from .masks import Mask


def tensor_to_pil(img: torch.Tensor) -> PILImage.Image:
    """(3, H, W) tensor in [-1, 1] -> RGB PIL image."""
    arr = img.detach().cpu().numpy()
    arr = np.clip((arr + 1.0) * 127.5, 0, 255).astype(np.uint8)
    return PILImage.fromarray(arr.transpose(1, 2, 0))


def pil_to_tensor(img: PILImage.Image, resolution: int | None = None) -> torch.Tensor:
    """RGB PIL image -> (3, H, W) tensor in [-1, 1], bilinear-resized if asked."""
    img = img.convert("RGB")
    if resolution is not None and img.size != (resolution, resolution):
        img = img.resize((resolution, resolution), PILImage.Resampling.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1))


def mask_to_pil(mask: Mask) -> PILImage.Image:
    return PILImage.fromarray(mask.bits * np.uint8(255), mode="L").convert("RGB")


def tile_grid(cells: list[list[PILImage.Image | None]], pad: int = 2,
              background: tuple[int, int, int] = (24, 24, 24)) -> PILImage.Image:
    """Lay out rows of equally sized cells; None leaves a blank cell."""
    cell_sizes = [c.size for row in cells for c in row if c is not None]
    if not cell_sizes:
        raise ValueError("grid has no cells")
    w, h = cell_sizes[0]
    rows = len(cells)
    cols = max(len(row) for row in cells)
    canvas = PILImage.new("RGB", (cols * (w + pad) + pad, rows * (h + pad) + pad), background)
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            if cell is None:
                continue
            canvas.paste(cell.convert("RGB"), (pad + j * (w + pad), pad + i * (h + pad)))
    return canvas


def save_png(img: PILImage.Image, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(str(path), format="PNG")


def png_bytes(img: PILImage.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
