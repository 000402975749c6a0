"""Binary pixel masks: sampling schemes, mask algebra, and PNG round-trip.

A mask partitions an image into a *masked region* (bits == 1, pixel
information kept and translated) and a *contextual region* (bits == 0,
pixel information suppressed from the core translator). All schemes
produce strictly binary masks; soft masks are deliberately unsupported.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

VARIANT_CENTERED_SQUARE = "centered-square"
VARIANT_MULTI_RECTANGLES = "multi-rectangles"
VARIANT_ATTENTION = "attention-binarize"
VARIANT_ROUND = "round"
VARIANT_FULL = "full"

VARIANTS = (
    VARIANT_CENTERED_SQUARE,
    VARIANT_MULTI_RECTANGLES,
    VARIANT_ATTENTION,
    VARIANT_ROUND,
    VARIANT_FULL,
)

RngState = np.random.Generator


class MaskParameterError(ValueError):
    """A masking-scheme parameter is outside its legal range."""


class MaskFormatError(ValueError):
    """Mask data violates the binary-mask contract."""


def make_rng(seed: int) -> RngState:
    """Seeded generator; same seed + same call sequence -> identical masks."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Mask:
    """Square binary pixel grid. ``bits`` is a (size, size) uint8 array in {0, 1}."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1] or bits.shape[0] < 1:
            raise MaskFormatError(f"mask must be a square 2-d grid, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise MaskFormatError("mask entries must be exactly 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.uint8))

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    def fraction(self) -> float:
        """Fraction of pixels in the masked region."""
        return float(self.bits.mean())

    def invert(self) -> "Mask":
        """Bitwise complement; an involution."""
        return Mask(1 - self.bits)

    def apply(self, image: np.ndarray) -> np.ndarray:
        """Channel-wise elementwise product; contextual pixels become exactly 0."""
        image = np.asarray(image)
        if image.shape[-2:] != self.bits.shape:
            raise ValueError(
                f"mask size {self.bits.shape} does not match image spatial shape {image.shape[-2:]}"
            )
        return image * self.bits

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)


def full_mask(size: int) -> Mask:
    return Mask(np.ones((size, size), dtype=np.uint8))


@dataclass(frozen=True)
class MaskSchemeConfig:
    """Tagged selection of a masking scheme plus its parameters.

    Only the fields relevant to ``variant`` are read. ``min_rect_size`` /
    ``max_rect_size`` default at sample time to max(1, size // 10) and size.
    """

    variant: str
    scale: float = 1.0                    # centered-square, round
    min_max_num_rects: int = 5            # multi-rectangles
    min_sum_rel_area: float = 0.15
    min_rect_size: int | None = None
    max_rect_size: int | None = None
    threshold: float = 0.5                # attention-binarize

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise MaskParameterError(
                f"unknown mask scheme variant {self.variant!r}; expected one of {VARIANTS}"
            )

    def validate(self, size: int) -> None:
        """Check parameter ranges against a concrete mask size."""
        if size < 1:
            raise MaskParameterError(f"mask size must be >= 1, got {size}")
        if self.variant in (VARIANT_CENTERED_SQUARE, VARIANT_ROUND):
            if not 0 < self.scale <= 1:
                raise MaskParameterError(f"scale must be in (0, 1], got {self.scale}")
        elif self.variant == VARIANT_MULTI_RECTANGLES:
            lo, hi = self.rect_bounds(size)
            if self.min_max_num_rects < 1:
                raise MaskParameterError(
                    f"min_max_num_rects must be >= 1, got {self.min_max_num_rects}"
                )
            if not 0 < self.min_sum_rel_area <= 1:
                raise MaskParameterError(
                    f"min_sum_rel_area must be in (0, 1], got {self.min_sum_rel_area}"
                )
            if not 1 <= lo <= hi <= size:
                raise MaskParameterError(
                    f"need 1 <= min_rect_size <= max_rect_size <= size, "
                    f"got {lo} and {hi} for size {size}"
                )
        elif self.variant == VARIANT_ATTENTION:
            if not 0 <= self.threshold <= 1:
                raise MaskParameterError(f"threshold must be in [0, 1], got {self.threshold}")

    def rect_bounds(self, size: int) -> tuple[int, int]:
        lo = self.min_rect_size if self.min_rect_size is not None else max(1, size // 10)
        hi = self.max_rect_size if self.max_rect_size is not None else size
        return lo, hi

    def to_json(self) -> dict:
        out = {"variant": self.variant}
        if self.variant in (VARIANT_CENTERED_SQUARE, VARIANT_ROUND):
            out["scale"] = self.scale
        elif self.variant == VARIANT_MULTI_RECTANGLES:
            out["min_max_num_rects"] = self.min_max_num_rects
            out["min_sum_rel_area"] = self.min_sum_rel_area
            if self.min_rect_size is not None:
                out["min_rect_size"] = self.min_rect_size
            if self.max_rect_size is not None:
                out["max_rect_size"] = self.max_rect_size
        elif self.variant == VARIANT_ATTENTION:
            out["threshold"] = self.threshold
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MaskSchemeConfig":
        if not isinstance(obj, dict) or "variant" not in obj:
            raise MaskParameterError("mask scheme JSON must be an object with a 'variant' key")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise MaskParameterError(f"unknown mask scheme parameters: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class MultiRectStats:
    """Per-sample bookkeeping of the multi-rectangles sampler.

    ``sum_rel_area`` accumulates raw rectangle areas (overlaps counted twice);
    ``covered_rel_area`` is the true union coverage the loop guard tracks.
    """

    min_num_rects: int
    num_rects: int
    sum_rel_area: float
    covered_rel_area: float
    rects: tuple = field(default_factory=tuple)  # (i0, j0, i1, j1) per rectangle


def sample_centered_square(size: int, scale: float) -> Mask:
    """Axis-aligned square of side round(scale * size), centered in the grid."""
    if size < 1:
        raise MaskParameterError(f"size must be >= 1, got {size}")
    if not 0 < scale <= 1:
        raise MaskParameterError(f"scale must be in (0, 1], got {scale}")
    side = int(round(scale * size))
    offset = (size - side) // 2
    bits = np.zeros((size, size), dtype=np.uint8)
    bits[offset:offset + side, offset:offset + side] = 1
    return Mask(bits)


def sample_round(size: int, scale: float) -> Mask:
    """Centered disk of diameter scale * size, by cell-center-in-disk inclusion.

    bits[i, j] = 1 iff (i + 0.5 - size/2)^2 + (j + 0.5 - size/2)^2 <= (scale*size/2)^2
    """
    if size < 1:
        raise MaskParameterError(f"size must be >= 1, got {size}")
    if not 0 < scale <= 1:
        raise MaskParameterError(f"scale must be in (0, 1], got {scale}")
    centers = np.arange(size) + 0.5 - size / 2
    dist2 = centers[:, None] ** 2 + centers[None, :] ** 2
    radius = scale * size / 2
    return Mask((dist2 <= radius * radius).astype(np.uint8))


def sample_multi_rectangles(size: int, cfg: MaskSchemeConfig, rng: RngState) -> Mask:
    """Union of randomly placed rectangles; see :func:`sample_multi_rectangles_stats`."""
    mask, _ = sample_multi_rectangles_stats(size, cfg, rng)
    return mask


def sample_multi_rectangles_stats(
    size: int, cfg: MaskSchemeConfig, rng: RngState
) -> tuple[Mask, MultiRectStats]:
    """Draw rectangles until both a count target and an area target are met.

    Per call, the rectangle-count target is drawn uniformly from
    [1, min_max_num_rects]. Corner coordinates are drawn integer-uniform
    inclusive of both endpoints; rectangle slices are end-exclusive, so every
    rectangle has sides in [min_rect_size, max_rect_size] and stays in bounds.

    The loop runs until the mask's true covered fraction reaches
    ``min_sum_rel_area``. Tracking real coverage (rather than the raw
    accumulated rectangle area, which double-counts overlaps) is what makes
    ``min_sum_rel_area=1`` always return the full mask; the raw accumulated
    area is still reported in the stats and is always >= the covered fraction.
    """
    if cfg.variant != VARIANT_MULTI_RECTANGLES:
        raise MaskParameterError(f"expected a multi-rectangles config, got {cfg.variant!r}")
    cfg.validate(size)
    min_rect, max_rect = cfg.rect_bounds(size)

    min_num_rects = int(rng.integers(1, cfg.min_max_num_rects, endpoint=True))
    bits = np.zeros((size, size), dtype=np.uint8)
    num_rects = 0
    sum_rel_area = 0.0
    covered = 0
    total = size * size
    target = cfg.min_sum_rel_area * total
    rects = []

    # corner coordinates are drawn in vectorized chunks; the coverage-complete
    # degenerate case can need thousands of rectangles, and per-rectangle
    # generator calls dominate its runtime otherwise
    chunk = 256
    pos = chunk
    i0s = j0s = i1s = j1s = None

    while num_rects < min_num_rects or covered < target:
        if pos == chunk:
            i0s = rng.integers(0, size - min_rect, size=chunk, endpoint=True)
            j0s = rng.integers(0, size - min_rect, size=chunk, endpoint=True)
            i1s = rng.integers(i0s + min_rect, np.minimum(i0s + max_rect, size), endpoint=True)
            j1s = rng.integers(j0s + min_rect, np.minimum(j0s + max_rect, size), endpoint=True)
            pos = 0
        i0, j0 = int(i0s[pos]), int(j0s[pos])
        i1, j1 = int(i1s[pos]), int(j1s[pos])
        pos += 1
        region = bits[i0:i1, j0:j1]
        area = (i1 - i0) * (j1 - j0)
        covered += area - int(np.count_nonzero(region))
        region[:] = 1
        num_rects += 1
        sum_rel_area += area / total
        rects.append((i0, j0, i1, j1))

    stats = MultiRectStats(
        min_num_rects=min_num_rects,
        num_rects=num_rects,
        sum_rel_area=sum_rel_area,
        covered_rel_area=covered / total,
        rects=tuple(rects),
    )
    return Mask(bits), stats


def binarize_attention(attention: np.ndarray, threshold: float) -> Mask:
    """Threshold a real-valued attention map: bits[i, j] = 1 iff map[i, j] >= threshold."""
    if not 0 <= threshold <= 1:
        raise MaskParameterError(f"threshold must be in [0, 1], got {threshold}")
    attention = np.asarray(attention, dtype=np.float64)
    if not np.isfinite(attention).all():
        raise MaskFormatError("attention map contains non-finite entries")
    if attention.min() < 0 or attention.max() > 1:
        raise MaskFormatError("attention map entries must lie in [0, 1]")
    return Mask((attention >= threshold).astype(np.uint8))


def sample_mask(
    cfg: MaskSchemeConfig,
    size: int,
    rng: RngState | None = None,
    attention: np.ndarray | None = None,
) -> Mask:
    """Dispatch on the scheme variant. Attention maps are supplied externally."""
    cfg.validate(size)
    if cfg.variant == VARIANT_FULL:
        return full_mask(size)
    if cfg.variant == VARIANT_CENTERED_SQUARE:
        return sample_centered_square(size, cfg.scale)
    if cfg.variant == VARIANT_ROUND:
        return sample_round(size, cfg.scale)
    if cfg.variant == VARIANT_MULTI_RECTANGLES:
        if rng is None:
            raise MaskParameterError("multi-rectangles sampling requires an rng")
        return sample_multi_rectangles(size, cfg, rng)
    if cfg.variant == VARIANT_ATTENTION:
        if attention is None:
            raise MaskParameterError("attention-binarize requires an externally supplied map")
        if attention.shape != (size, size):
            raise MaskParameterError(
                f"attention map shape {attention.shape} does not match size {size}"
            )
        return binarize_attention(attention, cfg.threshold)
    raise MaskParameterError(f"unhandled variant {cfg.variant!r}")


def write_mask_png(mask: Mask, path: str | Path) -> None:
    """Persist as a 1-bit grayscale PNG (0 -> black, 1 -> white)."""
    Path(path).write_bytes(mask_png_bytes(mask))


def mask_png_bytes(mask: Mask) -> bytes:
    img = PILImage.fromarray(mask.bits * np.uint8(255), mode="L").convert("1", dither=PILImage.Dither.NONE)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def read_mask_png(path: str | Path) -> Mask:
    """Load a mask PNG; rejects any pixel outside {0, 255} / {0, 1}."""
    with PILImage.open(path) as img:
        return _mask_from_pil(img)


def mask_from_png_bytes(data: bytes) -> Mask:
    try:
        img = PILImage.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise MaskFormatError(f"not a decodable image: {exc}") from exc
    return _mask_from_pil(img)


def _mask_from_pil(img: PILImage.Image) -> Mask:
    if img.mode == "1":
        bits = np.asarray(img, dtype=np.uint8)
    elif img.mode == "L":
        arr = np.asarray(img)
        if not np.isin(arr, (0, 255)).all():
            raise MaskFormatError("grayscale mask PNG has pixels outside {0, 255}")
        bits = (arr == 255).astype(np.uint8)
    else:
        raise MaskFormatError(f"mask PNG must be 1-bit or binary grayscale, got mode {img.mode!r}")
    return Mask(bits)
