"""Generator (core translator + mask encoder) and patch discriminators.

The generator splits translation into two stages: a ResNet-style core that
sees *only* the masked region of the source (``a * m``), and a shallow
combiner that fuses the core output on the masked region with the untouched
contextual pixels. Keeping the combiner shallow confines the domain
translation logic to the core.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .masks import Mask, MaskSchemeConfig

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint file is missing, corrupt, or from an incompatible format."""


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Normal(0, std) init for conv weights, zero bias."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ResidualBlock(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(dim, dim, kernel_size=3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(dim),
            nn.ReLU(inplace=True),
            nn.Conv2d(dim, dim, kernel_size=3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(dim),
        )

    def forward(self, x):
        return x + self.block(x)


class CoreTranslator(nn.Module):
    """ResNet encoder-decoder: stem, 2 downsampling stages, residual blocks,
    2 upsampling stages, tanh head. Receives only the masked source image."""

    def __init__(self, channels: int = 3, base_width: int = 64, n_blocks: int = 6):
        super().__init__()
        w = base_width
        layers = [
            nn.Conv2d(channels, w, kernel_size=7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(w, w * 2, kernel_size=3, stride=2, padding=1),
                nn.InstanceNorm2d(w * 2),
                nn.ReLU(inplace=True),
            ]
            w *= 2
        layers += [ResidualBlock(w) for _ in range(n_blocks)]
        for _ in range(2):
            layers += [
                nn.ConvTranspose2d(w, w // 2, kernel_size=3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(w // 2),
                nn.ReLU(inplace=True),
            ]
            w //= 2
        layers += [
            nn.Conv2d(w, channels, kernel_size=7, padding=3, padding_mode="reflect"),
            nn.Tanh(),
        ]
        self.layers = nn.Sequential(*layers)

    def forward(self, x):
        return self.layers(x)


class MaskEncoder(nn.Module):
    """Shallow 3-conv combiner over [core_out * m, source * (1 - m), m].

    Deliberately too small to host translation logic; no normalization on the
    final layer, tanh output.
    """

    def __init__(self, channels: int = 3, base_width: int = 64):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(2 * channels + 1, base_width, kernel_size=3, padding=1),
            nn.InstanceNorm2d(base_width),
            nn.ReLU(inplace=True),
            nn.Conv2d(base_width, base_width, kernel_size=3, padding=1),
            nn.InstanceNorm2d(base_width),
            nn.ReLU(inplace=True),
            nn.Conv2d(base_width, channels, kernel_size=3, padding=1),
            nn.Tanh(),
        )

    def forward(self, x):
        return self.layers(x)


def default_n_blocks(resolution: int) -> int:
    return 6 if resolution >= 128 else 3


class MaskedGenerator(nn.Module):
    """One translation direction: core translator plus mask encoder."""

    def __init__(self, resolution: int, channels: int = 3, base_width: int = 64,
                 n_blocks: int | None = None):
        super().__init__()
        if n_blocks is None:
            n_blocks = default_n_blocks(resolution)
        self.resolution = resolution
        self.core = CoreTranslator(channels, base_width, n_blocks)
        self.encoder = MaskEncoder(channels, base_width)
        init_weights(self)

    @staticmethod
    def _as_mask_tensor(m: torch.Tensor) -> torch.Tensor:
        if m.dim() == 2:
            m = m[None, None]
        elif m.dim() == 3:
            m = m[:, None]
        return m

    def core_input(self, a: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        """The only tensor the core translator ever sees: the masked source."""
        return a * self._as_mask_tensor(m)

    def encoder_input(self, a: torch.Tensor, core_out: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        m = self._as_mask_tensor(m)
        context = a * (1.0 - m)
        return torch.cat([core_out * m, context, m.expand(a.shape[0], 1, *a.shape[2:])], dim=1)

    def forward(self, a: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        if a.shape[-1] != self.resolution or a.shape[-2] != self.resolution:
            raise ValueError(
                f"input spatial size {tuple(a.shape[-2:])} does not match "
                f"generator resolution {self.resolution}"
            )
        m = self._as_mask_tensor(m)
        if m.shape[-2:] != a.shape[-2:]:
            raise ValueError(
                f"mask size {tuple(m.shape[-2:])} does not match image size {tuple(a.shape[-2:])}"
            )
        core_out = self.core(self.core_input(a, m))
        return self.encoder(self.encoder_input(a, core_out, m))


class PatchDiscriminator(nn.Module):
    """Conv stack scoring overlapping patches: 4 stride-2 downsampling convs
    then a 1-channel head. Output grid side is input_size / 16 - 1."""

    def __init__(self, resolution: int, channels: int = 3, base_width: int = 64):
        super().__init__()
        if resolution < 32:
            raise ValueError(
                f"discriminator needs resolution >= 32 (four stride-2 stages), got {resolution}"
            )
        self.resolution = resolution
        w = base_width
        layers = [
            nn.Conv2d(channels, w, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for _ in range(3):
            layers += [
                nn.Conv2d(w, w * 2, kernel_size=4, stride=2, padding=1),
                nn.InstanceNorm2d(w * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            w *= 2
        layers += [nn.Conv2d(w, 1, kernel_size=4, stride=1, padding=1)]
        self.layers = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, x):
        if x.shape[-1] != self.resolution or x.shape[-2] != self.resolution:
            raise ValueError(
                f"input spatial size {tuple(x.shape[-2:])} does not match "
                f"discriminator resolution {self.resolution}"
            )
        return self.layers(x)


@dataclass
class GeneratorBundle:
    """Both translation directions at a shared resolution."""

    a2b: MaskedGenerator
    b2a: MaskedGenerator
    resolution: int

    def eval_(self) -> "GeneratorBundle":
        self.a2b.eval()
        self.b2a.eval()
        return self

    def by_direction(self, direction: str) -> MaskedGenerator:
        if direction == "a2b":
            return self.a2b
        if direction == "b2a":
            return self.b2a
        raise ValueError(f"direction must be 'a2b' or 'b2a', got {direction!r}")


@dataclass
class DiscriminatorSet:
    """Full-image and masked-image discriminators for each domain."""

    a_full: PatchDiscriminator
    a_masked: PatchDiscriminator
    b_full: PatchDiscriminator
    b_masked: PatchDiscriminator

    def all(self) -> tuple[PatchDiscriminator, ...]:
        return (self.a_full, self.a_masked, self.b_full, self.b_masked)


def build_models(
    resolution: int,
    seed: int | None = None,
    base_width: int = 64,
    n_blocks: int | None = None,
) -> tuple[GeneratorBundle, DiscriminatorSet]:
    """Construct and initialize all six networks; same seed, same parameters."""
    if seed is not None:
        torch.manual_seed(seed)
    gens = GeneratorBundle(
        a2b=MaskedGenerator(resolution, base_width=base_width, n_blocks=n_blocks),
        b2a=MaskedGenerator(resolution, base_width=base_width, n_blocks=n_blocks),
        resolution=resolution,
    )
    discs = DiscriminatorSet(
        a_full=PatchDiscriminator(resolution, base_width=base_width),
        a_masked=PatchDiscriminator(resolution, base_width=base_width),
        b_full=PatchDiscriminator(resolution, base_width=base_width),
        b_masked=PatchDiscriminator(resolution, base_width=base_width),
    )
    return gens, discs


def mask_to_tensor(mask: Mask, device: str | torch.device = "cpu") -> torch.Tensor:
    """(1, 1, size, size) float tensor view of a mask."""
    return torch.from_numpy(mask.bits).to(device=device, dtype=torch.float32)[None, None]


def translate(gen: MaskedGenerator, a: torch.Tensor, m: Mask | torch.Tensor) -> torch.Tensor:
    """Inference-mode translation of an image batch under one mask."""
    if isinstance(m, Mask):
        m = mask_to_tensor(m, device=a.device)
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(a, m)
    finally:
        if was_training:
            gen.train()
    return out


@dataclass
class Checkpoint:
    """Everything needed to resume training or serve a frozen snapshot."""

    generators: GeneratorBundle
    discriminators: DiscriminatorSet
    optimizer_state: dict | None
    iteration: int
    config: dict = field(default_factory=dict)
    scheme: MaskSchemeConfig | None = None
    base_width: int = 64
    n_blocks: int | None = None

    @property
    def resolution(self) -> int:
        return self.generators.resolution

    def manifest(self) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "resolution": self.resolution,
            "iteration": self.iteration,
            "scheme": self.scheme.to_json() if self.scheme is not None else None,
        }


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    payload = {
        "manifest": json.dumps(ckpt.manifest()),
        "base_width": ckpt.base_width,
        "n_blocks": ckpt.n_blocks,
        "config": ckpt.config,
        "generators": {
            "a2b": ckpt.generators.a2b.state_dict(),
            "b2a": ckpt.generators.b2a.state_dict(),
        },
        "discriminators": {
            "a_full": ckpt.discriminators.a_full.state_dict(),
            "a_masked": ckpt.discriminators.a_masked.state_dict(),
            "b_full": ckpt.discriminators.b_full.state_dict(),
            "b_masked": ckpt.discriminators.b_masked.state_dict(),
        },
        "optimizer_state": ckpt.optimizer_state,
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
        manifest = json.loads(payload["manifest"])
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version!r} not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    resolution = manifest["resolution"]
    base_width = payload.get("base_width", 64)
    n_blocks = payload.get("n_blocks")
    gens, discs = build_models(resolution, base_width=base_width, n_blocks=n_blocks)
    try:
        gens.a2b.load_state_dict(payload["generators"]["a2b"])
        gens.b2a.load_state_dict(payload["generators"]["b2a"])
        discs.a_full.load_state_dict(payload["discriminators"]["a_full"])
        discs.a_masked.load_state_dict(payload["discriminators"]["a_masked"])
        discs.b_full.load_state_dict(payload["discriminators"]["b_full"])
        discs.b_masked.load_state_dict(payload["discriminators"]["b_masked"])
    except (KeyError, RuntimeError) as exc:
        raise CheckpointError(f"checkpoint {path} has incompatible parameters: {exc}") from exc
    scheme = manifest.get("scheme")
    return Checkpoint(
        generators=gens,
        discriminators=discs,
        optimizer_state=payload.get("optimizer_state"),
        iteration=manifest["iteration"],
        config=payload.get("config", {}),
        scheme=MaskSchemeConfig.from_json(scheme) if scheme else None,
        base_width=base_width,
        n_blocks=n_blocks,
    )
