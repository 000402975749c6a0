"""Loss terms for mask-conditioned cycle-consistent translation.

Each adversarial objective is a convex combination of a full-image
discriminator term and a masked-image discriminator term; the cycle loss
is a convex combination of masked-region and contextual-region L1 terms.
With a full mask and weights (lambda_gan_m=0, lambda_cyc_m=0.5) every term
reduces to its plain CycleGAN counterpart (cycle up to an exact 0.5 factor).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Callable

import torch
import torch.nn.functional as F

GAN_MODES = ("lsgan", "logistic")


class NonFiniteLossError(FloatingPointError):
    """A loss or score became NaN/Inf; surfaced instead of contaminating updates."""


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: masked-vs-full GAN, masked-vs-context cycle, and term scales."""

    lambda_gan_m: float = 0.7
    lambda_cyc_m: float = 0.3
    lambda_cyc: float = 10.0
    lambda_idt: float = 5.0

    def __post_init__(self):
        if not 0 <= self.lambda_gan_m <= 1:
            raise ValueError(f"lambda_gan_m must be in [0, 1], got {self.lambda_gan_m}")
        if not 0 <= self.lambda_cyc_m <= 1:
            raise ValueError(f"lambda_cyc_m must be in [0, 1], got {self.lambda_cyc_m}")
        if self.lambda_cyc < 0 or self.lambda_idt < 0:
            raise ValueError("lambda_cyc and lambda_idt must be >= 0")


def _require_finite(value: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(f"non-finite values in {what}")
    return value


def adversarial_criterion(scores: torch.Tensor, target_real: bool, mode: str = "lsgan") -> torch.Tensor:
    """Mean criterion over a patch score grid, targeting real (1) or fake (0)."""
    _require_finite(scores, "discriminator scores")
    if mode == "lsgan":
        target = 1.0 if target_real else 0.0
        return ((scores - target) ** 2).mean()
    if mode == "logistic":
        target = torch.ones_like(scores) if target_real else torch.zeros_like(scores)
        return F.binary_cross_entropy_with_logits(scores, target)
    raise ValueError(f"unknown gan mode {mode!r}; expected one of {GAN_MODES}")


def gan_loss_generator(
    d_full: Callable[[torch.Tensor], torch.Tensor],
    d_masked: Callable[[torch.Tensor], torch.Tensor],
    fake: torch.Tensor,
    m: torch.Tensor,
    weights: LossWeights,
    mode: str = "lsgan",
) -> torch.Tensor:
    """Generator-side adversarial loss for one fake image batch.

    lambda_gan_m * adv(D_masked(fake * m)) + (1 - lambda_gan_m) * adv(D_full(fake)),
    with adv targeting "real". At lambda_gan_m = 0 this is exactly the plain
    full-image GAN objective.
    """
    lam = weights.lambda_gan_m
    masked_term = adversarial_criterion(d_masked(fake * m), target_real=True, mode=mode)
    full_term = adversarial_criterion(d_full(fake), target_real=True, mode=mode)
    return _require_finite(lam * masked_term + (1.0 - lam) * full_term, "generator GAN loss")


def gan_loss_discriminator(
    d: Callable[[torch.Tensor], torch.Tensor],
    real: torch.Tensor,
    fake: torch.Tensor,
    mode: str = "lsgan",
) -> torch.Tensor:
    """Discriminator loss, halved: 0.5 * (adv(D(real) -> real) + adv(D(fake) -> fake)).

    ``fake`` must already be detached from the generator graph.
    """
    if real.shape != fake.shape:
        raise ValueError(f"real/fake shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}")
    loss_real = adversarial_criterion(d(real), target_real=True, mode=mode)
    loss_fake = adversarial_criterion(d(fake), target_real=False, mode=mode)
    return _require_finite(0.5 * (loss_real + loss_fake), "discriminator loss")


def cycle_loss(a: torch.Tensor, a_rec: torch.Tensor, m: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """Region-weighted reconstruction error.

    lambda_cyc_m * ||(a - a_rec) * m||_1 + (1 - lambda_cyc_m) * ||(a - a_rec) * (1 - m)||_1,
    where ||.||_1 is the mean absolute value over all elements (not
    region-normalized). The all-element mean makes lambda_cyc_m = 0.5 equal
    0.5 * mean|a - a_rec| exactly, for every binary mask.
    """
    if a.shape != a_rec.shape:
        raise ValueError(f"image shape mismatch: {tuple(a.shape)} vs {tuple(a_rec.shape)}")
    diff = (a - a_rec).abs()
    masked = (diff * m).mean()
    context = (diff * (1.0 - m)).mean()
    lam = weights.lambda_cyc_m
    return _require_finite(lam * masked + (1.0 - lam) * context, "cycle loss")


def identity_loss(a: torch.Tensor, a_idt: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference; by construction has no mask dependence."""
    if a.shape != a_idt.shape:
        raise ValueError(f"image shape mismatch: {tuple(a.shape)} vs {tuple(a_idt.shape)}")
    return _require_finite((a - a_idt).abs().mean(), "identity loss")


_REPORT_KEYS = {
    "iteration": "iter",
    "gan_a": "ganA", "gan_b": "ganB",
    "cyc_a": "cycA", "cyc_b": "cycB",
    "idt_a": "idtA", "idt_b": "idtB",
    "total": "total",
    "d_a": "dA", "d_b": "dB",
}


@dataclass(frozen=True)
class LossReport:
    """Per-iteration scalars; serializes to one JSON line of the training log."""

    iteration: int
    gan_a: float
    gan_b: float
    cyc_a: float
    cyc_b: float
    idt_a: float
    idt_b: float
    total: float
    d_a: float = 0.0
    d_b: float = 0.0

    def to_json_line(self) -> str:
        d = asdict(self)
        return json.dumps({wire: d[field] for field, wire in _REPORT_KEYS.items()})

    @classmethod
    def from_json_line(cls, line: str) -> "LossReport":
        d = json.loads(line)
        return cls(**{field: d[wire] for field, wire in _REPORT_KEYS.items()})


def full_objective(
    gan_a: float,
    gan_b: float,
    cyc_a: float,
    cyc_b: float,
    idt_a: float,
    idt_b: float,
    weights: LossWeights,
    iteration: int = 0,
    d_a: float = 0.0,
    d_b: float = 0.0,
) -> LossReport:
    """Combine per-term scalars into the generator objective and a report.

    total = (gan_a + gan_b) + lambda_cyc * (cyc_a + cyc_b) + lambda_idt * (idt_a + idt_b)
    """
    parts = (gan_a, gan_b, cyc_a, cyc_b, idt_a, idt_b, d_a, d_b)
    floats = [float(p) for p in parts]
    if not all(f == f and abs(f) != float("inf") for f in floats):
        raise NonFiniteLossError(f"non-finite loss component in {floats}")
    gan_a, gan_b, cyc_a, cyc_b, idt_a, idt_b, d_a, d_b = floats
    total = (gan_a + gan_b) + weights.lambda_cyc * (cyc_a + cyc_b) + weights.lambda_idt * (idt_a + idt_b)
    return LossReport(
        iteration=iteration,
        gan_a=gan_a, gan_b=gan_b,
        cyc_a=cyc_a, cyc_b=cyc_b,
        idt_a=idt_a, idt_b=idt_b,
        total=total, d_a=d_a, d_b=d_b,
    )
