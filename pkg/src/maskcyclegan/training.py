"""Training loop: per-iteration mask sampling, forward cycles, alternating
generator and discriminator updates, logging, checkpoints, snapshots.

One mask is sampled per iteration and shared by the batch, the forward and
backward translations, both cycle reconstructions, the identity passes, and
both masked discriminators.
"""

from __future__ import annotations

import itertools
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import networks
from .data import Batch, DatasetSpec, load_dataset
from .imutil import mask_to_pil, save_png, tensor_to_pil, tile_grid
from .losses import (
    LossReport,
    LossWeights,
    NonFiniteLossError,
    cycle_loss,
    full_objective,
    gan_loss_discriminator,
    gan_loss_generator,
    identity_loss,
)
from .masks import Mask, MaskSchemeConfig, sample_mask
from .networks import Checkpoint, load_checkpoint, mask_to_tensor, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    dataset: DatasetSpec
    weights: LossWeights = field(default_factory=LossWeights)
    scheme: MaskSchemeConfig = field(default_factory=lambda: MaskSchemeConfig("multi-rectangles"))
    iterations: int = 1000
    learning_rate: float = 2e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 1
    checkpoint_every: int = 0     # 0 writes only the final checkpoint
    snapshot_every: int = 0
    seed: int = 0
    gan_mode: str = "lsgan"
    fake_buffer_size: int = 50
    lr_decay: bool = False        # linear decay to 0 over the run
    augment: bool = False
    augment_crop: bool = False
    base_width: int = 64
    n_blocks: int | None = None
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError(f"iterations must be > 0, got {self.iterations}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.fake_buffer_size <= 50:
            raise ValueError(f"fake_buffer_size must be in [0, 50], got {self.fake_buffer_size}")

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.to_json(),
            "weights": {
                "lambda_gan_m": self.weights.lambda_gan_m,
                "lambda_cyc_m": self.weights.lambda_cyc_m,
                "lambda_cyc": self.weights.lambda_cyc,
                "lambda_idt": self.weights.lambda_idt,
            },
            "scheme": self.scheme.to_json(),
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "adam_betas": list(self.adam_betas),
            "batch_size": self.batch_size,
            "checkpoint_every": self.checkpoint_every,
            "snapshot_every": self.snapshot_every,
            "seed": self.seed,
            "gan_mode": self.gan_mode,
            "fake_buffer_size": self.fake_buffer_size,
            "lr_decay": self.lr_decay,
            "augment": self.augment,
            "augment_crop": self.augment_crop,
            "base_width": self.base_width,
            "n_blocks": self.n_blocks,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        obj["dataset"] = DatasetSpec.from_json(obj["dataset"])
        obj["weights"] = LossWeights(**obj.get("weights", {}))
        obj["scheme"] = MaskSchemeConfig.from_json(obj.get("scheme", {"variant": "multi-rectangles"}))
        if "adam_betas" in obj:
            obj["adam_betas"] = tuple(obj["adam_betas"])
        return cls(**obj)


class FakeBuffer:
    """Bounded pool of past generated images fed to discriminators.

    Until full, stores each fresh fake and returns it. Once full, returns the
    fresh fake with p=0.5 or swaps it against a random stored one and returns
    the stored image. Capacity 0 disables the buffer.
    """

    def __init__(self, capacity: int = 50, rng: np.random.Generator | None = None):
        self.capacity = capacity
        self.images: list[torch.Tensor] = []
        self._rng = rng if rng is not None else np.random.default_rng(0)

    def __len__(self) -> int:
        return len(self.images)

    def query(self, fresh: torch.Tensor) -> torch.Tensor:
        if self.capacity == 0:
            return fresh
        out = []
        for img in fresh:
            img = img.detach()
            if len(self.images) < self.capacity:
                self.images.append(img.clone())
                out.append(img)
            elif self._rng.random() < 0.5:
                out.append(img)
            else:
                idx = int(self._rng.integers(0, len(self.images)))
                old = self.images[idx]
                self.images[idx] = img.clone()
                out.append(old)
        return torch.stack(out)


class Trainer:
    """Owns the six networks, two optimizers, fake buffers, and the mask rng."""

    def __init__(self, cfg: TrainConfig, checkpoint: Checkpoint | None = None):
        self.cfg = cfg
        self.resolution = cfg.dataset.resolution
        cfg.scheme.validate(self.resolution)

        seq = np.random.SeedSequence(cfg.seed)
        mask_seed, pool_a_seed, pool_b_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
        self.mask_rng = np.random.default_rng(mask_seed)
        self.pool_a = FakeBuffer(cfg.fake_buffer_size, np.random.default_rng(pool_a_seed))
        self.pool_b = FakeBuffer(cfg.fake_buffer_size, np.random.default_rng(pool_b_seed))

        if checkpoint is None:
            self.gens, self.discs = networks.build_models(
                self.resolution, seed=cfg.seed,
                base_width=cfg.base_width, n_blocks=cfg.n_blocks,
            )
            self.iteration = 0
        else:
            self.gens, self.discs = checkpoint.generators, checkpoint.discriminators
            self.iteration = checkpoint.iteration

        self.opt_g = torch.optim.Adam(
            itertools.chain(self.gens.a2b.parameters(), self.gens.b2a.parameters()),
            lr=cfg.learning_rate, betas=cfg.adam_betas,
        )
        self.opt_d = torch.optim.Adam(
            itertools.chain(*(d.parameters() for d in self.discs.all())),
            lr=cfg.learning_rate, betas=cfg.adam_betas,
        )
        if checkpoint is not None and checkpoint.optimizer_state:
            self.opt_g.load_state_dict(checkpoint.optimizer_state["generator"])
            self.opt_d.load_state_dict(checkpoint.optimizer_state["discriminator"])
            rng_state = checkpoint.optimizer_state.get("rng")
            if rng_state:
                self.mask_rng.bit_generator.state = rng_state["mask_rng"]
                torch.set_rng_state(torch.tensor(rng_state["torch"], dtype=torch.uint8))

        self.last_mask: Mask | None = None

    # -- Algorithm step --------------------------------------------------

    def sample_iteration_mask(self) -> tuple[Mask, torch.Tensor]:
        mask = sample_mask(self.cfg.scheme, self.resolution, rng=self.mask_rng)
        self.last_mask = mask
        return mask, mask_to_tensor(mask)

    def train_step(self, batch: Batch) -> LossReport:
        """One full iteration: sample mask, both cycles, generator update,
        then discriminator update on buffered fakes."""
        a, b = batch.a, batch.b
        if a.shape[-1] != self.resolution:
            raise ValueError(
                f"batch resolution {a.shape[-1]} does not match model resolution {self.resolution}"
            )
        _, m = self.sample_iteration_mask()

        fakes, gen_terms = self._generator_step(a, b, m)
        d_a, d_b = self._discriminator_step(a, b, m, *fakes)

        self.iteration += 1
        report = full_objective(
            *gen_terms, self.cfg.weights,
            iteration=self.iteration, d_a=d_a, d_b=d_b,
        )
        if self.cfg.lr_decay:
            self._decay_lr()
        return report

    def _generator_step(self, a, b, m):
        cfg = self.cfg
        w = cfg.weights
        fake_b = self.gens.a2b(a, m)
        fake_a = self.gens.b2a(b, m)
        rec_a = self.gens.b2a(fake_b, m)
        rec_b = self.gens.a2b(fake_a, m)
        idt_a = self.gens.b2a(a, m)
        idt_b = self.gens.a2b(b, m)

        l_gan_a = gan_loss_generator(self.discs.a_full, self.discs.a_masked, fake_a, m, w, cfg.gan_mode)
        l_gan_b = gan_loss_generator(self.discs.b_full, self.discs.b_masked, fake_b, m, w, cfg.gan_mode)
        l_cyc_a = cycle_loss(a, rec_a, m, w)
        l_cyc_b = cycle_loss(b, rec_b, m, w)
        l_idt_a = identity_loss(a, idt_a)
        l_idt_b = identity_loss(b, idt_b)

        loss_g = (l_gan_a + l_gan_b) \
            + w.lambda_cyc * (l_cyc_a + l_cyc_b) \
            + w.lambda_idt * (l_idt_a + l_idt_b)
        if not torch.isfinite(loss_g):
            terms = {
                "gan_a": float(l_gan_a), "gan_b": float(l_gan_b),
                "cyc_a": float(l_cyc_a), "cyc_b": float(l_cyc_b),
                "idt_a": float(l_idt_a), "idt_b": float(l_idt_b),
            }
            raise NonFiniteLossError(self._diagnostic("generator", loss_g, terms))
        self.opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        self.opt_g.step()

        terms = tuple(float(t.detach()) for t in
                      (l_gan_a, l_gan_b, l_cyc_a, l_cyc_b, l_idt_a, l_idt_b))
        return (fake_a.detach(), fake_b.detach()), terms

    def _discriminator_step(self, a, b, m, fake_a, fake_b):
        cfg = self.cfg
        lam = cfg.weights.lambda_gan_m
        pooled_a = self.pool_a.query(fake_a)
        pooled_b = self.pool_b.query(fake_b)

        l_da = (1.0 - lam) * gan_loss_discriminator(self.discs.a_full, a, pooled_a, cfg.gan_mode) \
            + lam * gan_loss_discriminator(self.discs.a_masked, a * m, pooled_a * m, cfg.gan_mode)
        l_db = (1.0 - lam) * gan_loss_discriminator(self.discs.b_full, b, pooled_b, cfg.gan_mode) \
            + lam * gan_loss_discriminator(self.discs.b_masked, b * m, pooled_b * m, cfg.gan_mode)
        loss_d = l_da + l_db
        if not torch.isfinite(loss_d):
            raise NonFiniteLossError(self._diagnostic(
                "discriminator", loss_d, {"d_a": float(l_da), "d_b": float(l_db)}))
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()
        return float(l_da.detach()), float(l_db.detach())

    def _decay_lr(self):
        frac = max(0.0, 1.0 - self.iteration / self.cfg.iterations)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = self.cfg.learning_rate * frac

    def _diagnostic(self, stage: str, loss, terms: dict | None = None) -> str:
        mask_frac = self.last_mask.fraction() if self.last_mask is not None else float("nan")
        detail = f"; per-term losses {terms}" if terms else ""
        return (
            f"non-finite {stage} loss at iteration {self.iteration + 1}: {loss}; "
            f"mask fraction {mask_frac:.4f}, scheme {self.cfg.scheme.variant}{detail}"
        )

    # -- Checkpointing ---------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            generators=self.gens,
            discriminators=self.discs,
            optimizer_state={
                "generator": self.opt_g.state_dict(),
                "discriminator": self.opt_d.state_dict(),
                "rng": {
                    "mask_rng": self.mask_rng.bit_generator.state,
                    "torch": torch.get_rng_state().tolist(),
                },
            },
            iteration=self.iteration,
            config=self.cfg.to_json(),
            scheme=self.cfg.scheme,
            base_width=self.cfg.base_width,
            n_blocks=self.cfg.n_blocks,
        )

    def save(self, path: str | Path) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
        os.close(fd)
        try:
            save_checkpoint(self.checkpoint(), tmp)
            os.replace(tmp, str(path))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    # -- Snapshots ---------------------------------------------------------

    def write_snapshot(self, batch: Batch, path: str | Path) -> None:
        """Grid row per sample: source a, mask, translated a->b, cycle-reconstructed a."""
        mask = self.last_mask
        if mask is None:
            mask, _ = self.sample_iteration_mask()
        m = mask_to_tensor(mask)
        with torch.no_grad():
            self.gens.eval_()
            fake_b = self.gens.a2b(batch.a, m)
            rec_a = self.gens.b2a(fake_b, m)
            self.gens.a2b.train()
            self.gens.b2a.train()
        rows = []
        for i in range(batch.a.shape[0]):
            rows.append([
                tensor_to_pil(batch.a[i]),
                mask_to_pil(mask),
                tensor_to_pil(fake_b[i]),
                tensor_to_pil(rec_a[i]),
            ])
        save_png(tile_grid(rows), path)


def fit(cfg: TrainConfig, resume: str | Path | None = None,
        log_fn=None) -> Path:
    """Run the bounded training loop; returns the final checkpoint path.

    Writes ``losses.jsonl`` (one JSON line per iteration), periodic
    checkpoints/snapshots per config, and ``checkpoint_final.pt``.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    start_ckpt = load_checkpoint(resume) if resume is not None else None
    trainer = Trainer(cfg, checkpoint=start_ckpt)
    loader = load_dataset(
        cfg.dataset, batch_size=cfg.batch_size, seed=cfg.seed,
        augment=cfg.augment, augment_crop=cfg.augment_crop,
    )

    (out_dir / "config.json").write_text(json.dumps(cfg.to_json(), indent=2))
    log_path = out_dir / "losses.jsonl"
    mode = "a" if resume is not None else "w"
    target = trainer.iteration + cfg.iterations if resume is not None else cfg.iterations

    with open(log_path, mode) as log:
        while trainer.iteration < target:
            batch = next(loader)
            try:
                report = trainer.train_step(batch)
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(f"{exc} (aborting run; log at {log_path})") from exc
            log.write(report.to_json_line() + "\n")
            if log_fn is not None:
                log_fn(report)
            it = trainer.iteration
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                trainer.save(out_dir / f"checkpoint_{it:06d}.pt")
            if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                trainer.write_snapshot(batch, out_dir / f"snapshot_{it:06d}.png")

    final = out_dir / "checkpoint_final.pt"
    trainer.save(final)
    return final


def read_loss_log(path: str | Path) -> list[LossReport]:
    lines = Path(path).read_text().strip().splitlines()
    return [LossReport.from_json_line(line) for line in lines if line]
