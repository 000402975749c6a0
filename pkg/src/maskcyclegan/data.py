"""Unpaired two-folder image pipeline: decode, normalize, batch, iterate forever."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from PIL import Image as PILImage

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class DatasetError(RuntimeError):
    """Missing, empty, or undecodable dataset inputs."""


@dataclass(frozen=True)
class DatasetSpec:
    """Two unpaired image directories plus target resolution and split tag."""

    root_a: str
    root_b: str
    resolution: int = 128
    split: str = "train"

    @classmethod
    def from_layout(cls, root: str | Path, resolution: int = 128, split: str = "train") -> "DatasetSpec":
        """Standard layout: {root}/{trainA|trainB|testA|testB}/*.{png,jpg}."""
        root = Path(root)
        return cls(
            root_a=str(root / f"{split}A"),
            root_b=str(root / f"{split}B"),
            resolution=resolution,
            split=split,
        )

    def test_split(self) -> "DatasetSpec":
        root_a = Path(self.root_a)
        root_b = Path(self.root_b)
        if root_a.name.endswith("A") and root_b.name.endswith("B") and self.split == "train":
            return DatasetSpec(
                root_a=str(root_a.parent / "testA"),
                root_b=str(root_b.parent / "testB"),
                resolution=self.resolution,
                split="test",
            )
        return replace(self, split="test")

    def to_json(self) -> dict:
        return {
            "root_a": self.root_a,
            "root_b": self.root_b,
            "resolution": self.resolution,
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSpec":
        return cls(**obj)


@dataclass(frozen=True)
class Batch:
    """Independent draws from the two domains; never paired."""

    a: torch.Tensor  # (n, 3, res, res) in [-1, 1]
    b: torch.Tensor


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"image directory does not exist: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise DatasetError(f"no decodable images (*.png, *.jpg) in {directory}")
    return files


def load_image_file(path: str | Path, resolution: int) -> np.ndarray:
    """Decode -> RGB (grayscale replicated) -> bilinear resize -> [-1, 1] floats, (3, H, W)."""
    try:
        with PILImage.open(path) as img:
            img = img.convert("RGB")
            if img.size != (resolution, resolution):
                img = img.resize((resolution, resolution), PILImage.Resampling.BILINEAR)
            arr = np.asarray(img, dtype=np.float32)
    except DatasetError:
        raise
    except Exception as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc
    arr = arr / 127.5 - 1.0
    return arr.transpose(2, 0, 1)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, :, ::-1].copy()


def train_augment(
    img: np.ndarray,
    rng: np.random.Generator,
    enabled: bool = True,
    crop: bool = False,
) -> np.ndarray:
    """Random horizontal flip (p=0.5); optionally enlarge 1.12x then random-crop back."""
    if not enabled:
        return img
    if crop:
        res = img.shape[-1]
        big = int(round(res * 1.12))
        pil = PILImage.fromarray(
            np.clip((img.transpose(1, 2, 0) + 1.0) * 127.5, 0, 255).astype(np.uint8)
        ).resize((big, big), PILImage.Resampling.BILINEAR)
        arr = np.asarray(pil, dtype=np.float32).transpose(2, 0, 1) / 127.5 - 1.0
        i = int(rng.integers(0, big - res, endpoint=True))
        j = int(rng.integers(0, big - res, endpoint=True))
        img = arr[:, i:i + res, j:j + res]
    if rng.random() < 0.5:
        img = hflip(img)
    return img


class UnpairedLoader:
    """Infinite shuffled iterator over two unpaired folders.

    Each domain is permuted independently per pass, so any pairing between
    positions is destroyed. Emitted batches are freshly allocated tensors.
    """

    def __init__(
        self,
        spec: DatasetSpec,
        batch_size: int = 1,
        seed: int = 0,
        augment: bool = False,
        augment_crop: bool = False,
    ):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.spec = spec
        self.batch_size = batch_size
        self.augment = augment
        self.augment_crop = augment_crop
        self.files_a = list_images(spec.root_a)
        self.files_b = list_images(spec.root_b)
        self._rng = np.random.default_rng(seed)
        self._queue_a: list[int] = []
        self._queue_b: list[int] = []

    def _next_index(self, queue: list[int], n: int) -> int:
        if not queue:
            queue.extend(self._rng.permutation(n).tolist())
        return queue.pop()

    def _load(self, files: list[Path], queue: list[int]) -> np.ndarray:
        idx = self._next_index(queue, len(files))
        img = load_image_file(files[idx], self.spec.resolution)
        if self.augment:
            img = train_augment(img, self._rng, enabled=True, crop=self.augment_crop)
        return img

    def __iter__(self) -> Iterator[Batch]:
        return self

    def __next__(self) -> Batch:
        a = np.stack([self._load(self.files_a, self._queue_a) for _ in range(self.batch_size)])
        b = np.stack([self._load(self.files_b, self._queue_b) for _ in range(self.batch_size)])
        return Batch(a=torch.from_numpy(a), b=torch.from_numpy(b))


def load_dataset(
    spec: DatasetSpec,
    batch_size: int = 1,
    seed: int = 0,
    augment: bool = False,
    augment_crop: bool = False,
) -> UnpairedLoader:
    return UnpairedLoader(spec, batch_size=batch_size, seed=seed,
                          augment=augment, augment_crop=augment_crop)


def load_image_stack(directory: str | Path, resolution: int, limit: int | None = None) -> torch.Tensor:
    """Every image in a folder as one (n, 3, res, res) tensor, sorted by filename."""
    files = list_images(directory)
    if limit is not None:
        files = files[:limit]
    arrs = [load_image_file(p, resolution) for p in files]
    return torch.from_numpy(np.stack(arrs))
