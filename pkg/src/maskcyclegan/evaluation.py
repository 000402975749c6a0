"""Fréchet-distance evaluation over fitted Gaussians, FID matrices across
mask scales, and qualitative output grids.

Feature extractors are pluggable by id so desk-scale runs can use a cheap
deterministic embedding while full-scale runs use a pretrained inception
network.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import torch
from PIL import Image as PILImage
from torch import nn

from .data import DatasetSpec, load_image_stack
from .imutil import mask_to_pil, tensor_to_pil, tile_grid
from .masks import Mask, sample_centered_square
from .networks import MaskedGenerator, mask_to_tensor

CACHE_ENV_VAR = "MASKCYCLE_CACHE"
COVARIANCE_JITTER = 1e-6


class ExtractorError(ValueError):
    """Unknown extractor id or extractor unusable in this environment."""


class FidComputationError(RuntimeError):
    """Fréchet distance could not be computed within numerical tolerance."""


# -- Feature extractors ----------------------------------------------------

class ToyFeatureExtractor(nn.Module):
    """Small fixed-weight conv embedding for 32x32 desk-scale evaluation.

    Weights are generated from a fixed seed, so the embedding is a frozen,
    deterministic function of the input; it stands in for a pretrained
    classifier head where downloading one is impractical.
    """

    INPUT_SIZE = 32
    FEATURE_DIM = 64

    def __init__(self):
        gen = torch.Generator().manual_seed(0x7071)
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, kernel_size=3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, self.FEATURE_DIM, kernel_size=3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        for m in self.features.modules():
            if isinstance(m, nn.Conv2d):
                with torch.no_grad():
                    m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * 0.2)
                    m.bias.copy_(torch.randn(m.bias.shape, generator=gen) * 0.05)
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        return self.features(x).flatten(1)


class InceptionExtractor(nn.Module):
    """Pretrained inception-v3 pool features (2048-d) for full-scale runs."""

    INPUT_SIZE = 299
    FEATURE_DIM = 2048

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import Inception_V3_Weights, inception_v3
            net = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise ExtractorError(
                f"inception-v3 weights unavailable in this environment: {exc}"
            ) from exc
        net.fc = nn.Identity()
        net.eval()
        self.net = net
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        return self.net(x)


_EXTRACTORS = {
    "toy-mnist": ToyFeatureExtractor,
    "inception-v3": InceptionExtractor,
}
_extractor_cache: dict[str, nn.Module] = {}


def get_extractor(extractor_id: str) -> nn.Module:
    if extractor_id not in _EXTRACTORS:
        raise ExtractorError(
            f"unknown extractor {extractor_id!r}; available: {sorted(_EXTRACTORS)}"
        )
    if extractor_id not in _extractor_cache:
        _extractor_cache[extractor_id] = _EXTRACTORS[extractor_id]()
    return _extractor_cache[extractor_id]


def extract_features(images: torch.Tensor, extractor_id: str, batch_size: int = 64) -> np.ndarray:
    """(n, 3, H, W) image batch in [-1, 1] -> (n, d) embedding matrix."""
    if images.ndim != 4:
        raise ValueError(f"expected (n, 3, H, W) images, got shape {tuple(images.shape)}")
    if images.shape[0] < 2:
        raise ValueError(f"need at least 2 images to fit statistics, got {images.shape[0]}")
    extractor = get_extractor(extractor_id)
    size = extractor.INPUT_SIZE
    chunks = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            x = images[start:start + batch_size].float()
            if x.shape[-1] != size or x.shape[-2] != size:
                x = torch.nn.functional.interpolate(
                    x, size=(size, size), mode="bilinear", align_corners=False
                )
            chunks.append(extractor(x).cpu().numpy())
    return np.concatenate(chunks, axis=0)


# -- Gaussian statistics and Fréchet distance -------------------------------

@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit of an embedding set: mean, unbiased covariance, count."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int
    extractor_id: str

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2 samples, got {self.n}")
        if self.sigma.shape != (self.mu.shape[0], self.mu.shape[0]):
            raise ValueError("covariance shape inconsistent with mean")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-8):
            raise ValueError("covariance must be symmetric")

    @classmethod
    def fit(cls, features: np.ndarray, extractor_id: str = "") -> "FeatureStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError(f"need an (n >= 2, d) feature matrix, got {features.shape}")
        mu = features.mean(axis=0)
        sigma = np.cov(features, rowvar=False)
        sigma = np.atleast_2d(sigma)
        sigma = (sigma + sigma.T) / 2.0
        return cls(mu=mu, sigma=sigma, n=features.shape[0], extractor_id=extractor_id)

    def save(self, path: str | Path) -> None:
        np.savez(str(path), mu=self.mu, sigma=self.sigma, n=self.n,
                 extractor_id=self.extractor_id)

    @classmethod
    def load(cls, path: str | Path) -> "FeatureStats":
        with np.load(str(path), allow_pickle=False) as z:
            return cls(mu=z["mu"], sigma=z["sigma"], n=int(z["n"]),
                       extractor_id=str(z["extractor_id"]))


def frechet_distance(p: FeatureStats, q: FeatureStats, eps: float = COVARIANCE_JITTER) -> float:
    """||mu_p - mu_q||^2 + Tr(S_p + S_q - 2 (S_p S_q)^(1/2)).

    The matrix square root gets an eps*I jitter retry when the product is
    numerically non-PSD; small negative results from floating error clamp
    to 0 with a warning.
    """
    if p.mu.shape != q.mu.shape:
        raise ValueError(f"feature dimensions differ: {p.mu.shape} vs {q.mu.shape}")
    diff = p.mu - q.mu
    covmean, _ = scipy.linalg.sqrtm(p.sigma @ q.sigma, disp=False)
    if not np.isfinite(covmean).all():
        jitter = eps * np.eye(p.sigma.shape[0])
        covmean, _ = scipy.linalg.sqrtm((p.sigma + jitter) @ (q.sigma + jitter), disp=False)
    if not np.isfinite(covmean).all():
        raise FidComputationError("covariance square root did not converge")
    if np.iscomplexobj(covmean):
        imag_max = float(np.abs(covmean.imag).max())
        scale = max(1.0, float(np.abs(covmean.real).max()))
        if imag_max > 1e-3 * scale:
            raise FidComputationError(
                f"covariance square root has imaginary magnitude {imag_max:.3e}"
            )
        covmean = covmean.real
    value = float(diff @ diff + np.trace(p.sigma) + np.trace(q.sigma) - 2.0 * np.trace(covmean))
    if value < 0:
        if value < -1e-4:
            raise FidComputationError(f"Fréchet distance {value} below numerical tolerance")
        warnings.warn(f"clamping small negative Fréchet distance {value:.3e} to 0")
        value = 0.0
    return value


# -- Feature cache -----------------------------------------------------------

def cache_root() -> Path:
    return Path(os.environ.get(CACHE_ENV_VAR, ".maskcycle-cache")) / "fid-cache"


def _cache_key(directory: str | Path, resolution: int, extractor_id: str) -> str:
    raw = f"{Path(directory).resolve()}|{resolution}|{extractor_id}"
    return hashlib.sha1(raw.encode()).hexdigest()[:16]


def stats_for_directory(
    directory: str | Path,
    resolution: int,
    extractor_id: str,
    limit: int | None = None,
    use_cache: bool = True,
) -> FeatureStats:
    """Feature statistics of every image in a folder, with on-disk caching."""
    cache_path = None
    if use_cache and limit is None:
        cache_path = cache_root() / f"{_cache_key(directory, resolution, extractor_id)}.npz"
        if cache_path.exists():
            return FeatureStats.load(cache_path)
    images = load_image_stack(directory, resolution, limit=limit)
    stats = FeatureStats.fit(extract_features(images, extractor_id), extractor_id)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        stats.save(cache_path)
    return stats


# -- FID matrix --------------------------------------------------------------

@dataclass(frozen=True)
class FidMatrix:
    """Labeled square matrix of pairwise Fréchet distances."""

    labels: tuple[str, ...]
    values: np.ndarray
    sample_counts: tuple[int, ...] = ()

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = self.labels.index(pair[0]), self.labels.index(pair[1])
        return float(self.values[i, j])

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "values": [[float(v) for v in row] for row in self.values],
            "sample_counts": list(self.sample_counts),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FidMatrix":
        return cls(
            labels=tuple(obj["labels"]),
            values=np.asarray(obj["values"], dtype=np.float64),
            sample_counts=tuple(obj.get("sample_counts", ())),
        )

    def comparisons(self) -> dict[str, bool]:
        """Qualitative ordering flags between generated sets and real splits."""
        out = {}
        gen = [l for l in self.labels if l.startswith("gen@")]
        for g in gen:
            if "train" in self.labels and "test" in self.labels:
                out[f"fid({g},train) < fid({g},test)"] = self[g, "train"] < self[g, "test"]
        for i, g1 in enumerate(gen):
            for g2 in gen[i + 1:]:
                if "test" in self.labels:
                    out[f"fid({g1},test) < fid({g2},test)"] = self[g1, "test"] < self[g2, "test"]
        return out

    def save_heatmap(self, path: str | Path) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        n = len(self.labels)
        fig, ax = plt.subplots(figsize=(1.2 * n + 2, 1.2 * n + 1.5))
        im = ax.imshow(self.values, cmap="viridis")
        ax.set_xticks(range(n), self.labels, rotation=45, ha="right")
        ax.set_yticks(range(n), self.labels)
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{self.values[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=8)
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(str(path), dpi=120)
        plt.close(fig)


def translate_set(
    gen: MaskedGenerator,
    sources: torch.Tensor,
    mask: Mask,
    batch_size: int = 16,
) -> torch.Tensor:
    """Translate a stack of source images under one shared mask."""
    m = mask_to_tensor(mask)
    gen.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, sources.shape[0], batch_size):
            outs.append(gen(sources[start:start + batch_size].float(), m))
    return torch.cat(outs, dim=0)


def fid_matrix(
    generators,
    dataset: DatasetSpec,
    scales: tuple[float, ...] = (0.5, 0.8, 1.0),
    direction: str = "b2a",
    extractor_id: str = "toy-mnist",
    limit: int | None = None,
    use_cache: bool = True,
) -> FidMatrix:
    """Pairwise Fréchet distances between the real train split, the real test
    split, and sets generated with centered-square masks at each scale.

    Direction a2b compares in domain B (sources from testA); b2a in domain A.
    """
    if direction not in ("a2b", "b2a"):
        raise ValueError(f"direction must be 'a2b' or 'b2a', got {direction!r}")
    train = dataset if dataset.split == "train" else DatasetSpec(
        dataset.root_a, dataset.root_b, dataset.resolution, "train")
    test = train.test_split()
    res = dataset.resolution

    gen = generators.by_direction(direction)
    if direction == "a2b":
        train_dir, test_dir, source_dir = train.root_b, test.root_b, test.root_a
    else:
        train_dir, test_dir, source_dir = train.root_a, test.root_a, test.root_b

    labels = ["train", "test"] + [f"gen@{s:g}" for s in scales]
    stats = [
        stats_for_directory(train_dir, res, extractor_id, limit=limit, use_cache=use_cache),
        stats_for_directory(test_dir, res, extractor_id, limit=limit, use_cache=use_cache),
    ]
    sources = load_image_stack(source_dir, res, limit=limit)
    for scale in scales:
        mask = sample_centered_square(res, scale)
        generated = translate_set(gen, sources, mask)
        stats.append(FeatureStats.fit(extract_features(generated, extractor_id), extractor_id))

    n = len(labels)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            values[i, j] = frechet_distance(stats[i], stats[j])
    return FidMatrix(labels=tuple(labels), values=values,
                     sample_counts=tuple(s.n for s in stats))


# -- Qualitative grids --------------------------------------------------------

def render_output_grid(
    gen: MaskedGenerator,
    sources: torch.Tensor,
    grid_masks: list[Mask],
) -> PILImage.Image:
    """(j sources + 1) x (k masks + 1) grid: mask header row, source header
    column, translated outputs in the body."""
    for mask in grid_masks:
        if mask.size != gen.resolution:
            raise ValueError(
                f"mask size {mask.size} does not match generator resolution {gen.resolution}"
            )
    if sources.shape[-1] != gen.resolution:
        raise ValueError(
            f"source size {sources.shape[-1]} does not match generator resolution {gen.resolution}"
        )
    header = [None] + [mask_to_pil(m) for m in grid_masks]
    rows = [header]
    for i in range(sources.shape[0]):
        row = [tensor_to_pil(sources[i])]
        for mask in grid_masks:
            out = translate_set(gen, sources[i:i + 1], mask)[0]
            row.append(tensor_to_pil(out))
        rows.append(row)
    return tile_grid(rows)
