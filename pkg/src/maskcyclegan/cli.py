"""Single command-line entrypoint: train, fid-matrix, grid, masks, translate, serve.

Exit codes: 0 success, 1 validation error (bad flags, config, or inputs),
2 runtime error. A JSON config file can seed the train subcommand; explicit
flags override config values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, networks, training
from .data import DatasetError, DatasetSpec
from .imutil import pil_to_tensor, save_png, tensor_to_pil
from .losses import NonFiniteLossError
from .masks import (
    Mask,
    MaskFormatError,
    MaskParameterError,
    MaskSchemeConfig,
    VARIANTS,
    make_rng,
    read_mask_png,
    sample_centered_square,
    sample_mask,
    sample_round,
    write_mask_png,
)


class CliValidationError(Exception):
    """Bad flags, config values, or input files; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="maskcyclegan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", help="JSON config file; flags override its values")
    p_train.add_argument("--data", help="dataset root with {trainA,trainB,testA,testB}/")
    p_train.add_argument("--root-a", help="domain A image directory")
    p_train.add_argument("--root-b", help="domain B image directory")
    p_train.add_argument("--resolution", type=int)
    p_train.add_argument("--iterations", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--lr", type=float, dest="learning_rate")
    p_train.add_argument("--scheme", choices=VARIANTS)
    _add_scheme_params(p_train)
    p_train.add_argument("--lambda-gan-m", type=float)
    p_train.add_argument("--lambda-cyc-m", type=float)
    p_train.add_argument("--lambda-cyc", type=float)
    p_train.add_argument("--lambda-idt", type=float)
    p_train.add_argument("--checkpoint-every", type=int)
    p_train.add_argument("--snapshot-every", type=int)
    p_train.add_argument("--gan-mode", choices=("lsgan", "logistic"))
    p_train.add_argument("--fake-buffer-size", type=int)
    p_train.add_argument("--lr-decay", action="store_true", default=None)
    p_train.add_argument("--augment", action="store_true", default=None)
    p_train.add_argument("--base-width", type=int)
    p_train.add_argument("--n-blocks", type=int)
    p_train.add_argument("--out", dest="out_dir")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--dump-config", action="store_true",
                         help="print the merged config JSON and exit without training")

    p_masks = sub.add_parser("masks", help="sample masks to PNG files")
    p_masks.add_argument("--scheme", required=True, choices=VARIANTS)
    p_masks.add_argument("--size", type=int, default=128)
    p_masks.add_argument("--count", type=int, default=1)
    p_masks.add_argument("--seed", type=int, default=0)
    p_masks.add_argument("--out", required=True, help="output directory")
    _add_scheme_params(p_masks)
    p_masks.add_argument("--threshold", type=float)
    p_masks.add_argument("--attention-map",
                         help="externally produced attention map (.npy in [0,1] or grayscale PNG)")

    p_tr = sub.add_parser("translate", help="translate one image under one mask")
    p_tr.add_argument("--ckpt", required=True)
    p_tr.add_argument("--dir", required=True, choices=("a2b", "b2a"), dest="direction")
    p_tr.add_argument("--image", required=True)
    p_tr.add_argument("--mask", help="mask PNG; defaults to the full mask")
    p_tr.add_argument("--out", required=True)

    p_grid = sub.add_parser("grid", help="render an outputs grid: masks x sources")
    p_grid.add_argument("--ckpt", required=True)
    p_grid.add_argument("--dir", required=True, choices=("a2b", "b2a"), dest="direction")
    p_grid.add_argument("--image", action="append", required=True, help="source image (repeatable)")
    p_grid.add_argument("--mask", action="append", default=[], help="mask PNG file (repeatable)")
    p_grid.add_argument("--preset", action="append", default=[],
                        help="square:S, round:S, multi-rectangles, or full (repeatable)")
    p_grid.add_argument("--seed", type=int, default=0)
    p_grid.add_argument("--out", required=True)

    p_fid = sub.add_parser("fid-matrix", help="pairwise Fréchet distances across mask scales")
    p_fid.add_argument("--ckpt", required=True)
    p_fid.add_argument("--data", help="dataset root with {trainA,...} layout")
    p_fid.add_argument("--root-a")
    p_fid.add_argument("--root-b")
    p_fid.add_argument("--resolution", type=int)
    p_fid.add_argument("--direction", choices=("a2b", "b2a"), default="b2a")
    p_fid.add_argument("--scales", default="0.5,0.8,1.0")
    p_fid.add_argument("--extractor", default="toy-mnist")
    p_fid.add_argument("--limit", type=int, help="cap images per cell")
    p_fid.add_argument("--no-cache", action="store_true")
    p_fid.add_argument("--out", required=True, help="output JSON path")
    p_fid.add_argument("--heatmap", help="optional heatmap PNG path")

    p_serve = sub.add_parser("serve", help="serve a frozen checkpoint over HTTP")
    p_serve.add_argument("--ckpt", required=True)
    p_serve.add_argument("--port", type=int, default=8787)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--allow-origin", action="append", default=None,
                         help="CORS origin allowlist entry (repeatable; default *)")

    return parser


def _add_scheme_params(parser):
    parser.add_argument("--scale", type=float)
    parser.add_argument("--min-max-num-rects", type=int)
    parser.add_argument("--min-sum-rel-area", type=float)
    parser.add_argument("--min-rect-size", type=int)
    parser.add_argument("--max-rect-size", type=int)


def _scheme_from_args(args, default_variant=None) -> MaskSchemeConfig:
    variant = getattr(args, "scheme", None) or default_variant
    if variant is None:
        raise CliValidationError("a --scheme is required")
    params = {}
    for name in ("scale", "min_max_num_rects", "min_sum_rel_area",
                 "min_rect_size", "max_rect_size", "threshold"):
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    return MaskSchemeConfig(variant=variant, **params)


# -- train -------------------------------------------------------------------

_FLAG_TO_CONFIG = (
    "iterations", "seed", "batch_size", "learning_rate", "checkpoint_every",
    "snapshot_every", "gan_mode", "fake_buffer_size", "lr_decay", "augment",
    "base_width", "n_blocks", "out_dir",
)
_FLAG_TO_WEIGHTS = ("lambda_gan_m", "lambda_cyc_m", "lambda_cyc", "lambda_idt")
_SCHEME_FLAGS = ("scale", "min_max_num_rects", "min_sum_rel_area",
                 "min_rect_size", "max_rect_size")


def _merge_train_config(args) -> training.TrainConfig:
    cfg_json: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CliValidationError(f"config file not found: {path}")
        cfg_json = json.loads(path.read_text())

    resolution = args.resolution or cfg_json.get("dataset", {}).get("resolution", 128)
    if args.data:
        dataset = DatasetSpec.from_layout(args.data, resolution=resolution).to_json()
    elif args.root_a or args.root_b:
        if not (args.root_a and args.root_b):
            raise CliValidationError("--root-a and --root-b must be given together")
        dataset = DatasetSpec(args.root_a, args.root_b, resolution=resolution).to_json()
    elif "dataset" in cfg_json:
        dataset = dict(cfg_json["dataset"])
        dataset["resolution"] = resolution
    else:
        raise CliValidationError("no dataset given: use --data, --root-a/--root-b, or a config file")
    cfg_json["dataset"] = dataset

    weights = dict(cfg_json.get("weights", {}))
    for name in _FLAG_TO_WEIGHTS:
        value = getattr(args, name)
        if value is not None:
            weights[name] = value
    if weights:
        cfg_json["weights"] = weights

    scheme = dict(cfg_json.get("scheme", {"variant": "multi-rectangles"}))
    if args.scheme:
        scheme = {"variant": args.scheme}
    for name in _SCHEME_FLAGS:
        value = getattr(args, name)
        if value is not None:
            scheme[name] = value
    cfg_json["scheme"] = scheme

    for name in _FLAG_TO_CONFIG:
        value = getattr(args, name)
        if value is not None:
            cfg_json[name] = value

    try:
        return training.TrainConfig.from_json(cfg_json)
    except (TypeError, ValueError) as exc:
        raise CliValidationError(f"invalid configuration: {exc}") from exc


def _cmd_train(args) -> int:
    cfg = _merge_train_config(args)
    cfg.scheme.validate(cfg.dataset.resolution)
    if args.dump_config:
        print(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
        return 0
    if args.resume and not Path(args.resume).exists():
        raise CliValidationError(f"resume checkpoint not found: {args.resume}")
    for root in (cfg.dataset.root_a, cfg.dataset.root_b):
        if not Path(root).is_dir():
            raise CliValidationError(f"dataset directory not found: {root}")
    final = training.fit(cfg, resume=args.resume)
    print(f"final checkpoint: {final}")
    return 0


# -- masks ---------------------------------------------------------------------

def _load_attention(path: str, size: int) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise CliValidationError(f"attention map not found: {p}")
    if p.suffix == ".npy":
        return np.load(p)
    from PIL import Image as PILImage
    with PILImage.open(p) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if arr.shape != (size, size):
        raise CliValidationError(
            f"attention map shape {arr.shape} does not match --size {size}")
    return arr


def _cmd_masks(args) -> int:
    scheme = _scheme_from_args(args)
    scheme.validate(args.size)
    attention = None
    if scheme.variant == "attention-binarize":
        if not args.attention_map:
            raise CliValidationError("attention-binarize requires --attention-map")
        attention = _load_attention(args.attention_map, args.size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(args.seed)
    for i in range(args.count):
        mask = sample_mask(scheme, args.size, rng=rng, attention=attention)
        write_mask_png(mask, out / f"mask_{i:03d}.png")
    print(f"wrote {args.count} masks to {out}")
    return 0


# -- translate / grid ------------------------------------------------------------

def _load_generator(ckpt_path: str, direction: str):
    path = Path(ckpt_path)
    if not path.exists():
        raise CliValidationError(f"checkpoint not found: {path}")
    ckpt = networks.load_checkpoint(path)
    ckpt.generators.eval_()
    return ckpt, ckpt.generators.by_direction(direction)


def _load_mask_for(path_or_none, resolution: int) -> Mask:
    if path_or_none is None:
        from .masks import full_mask
        return full_mask(resolution)
    p = Path(path_or_none)
    if not p.exists():
        raise CliValidationError(f"mask file not found: {p}")
    mask = read_mask_png(p)
    if mask.size != resolution:
        raise CliValidationError(
            f"mask size {mask.size} does not match checkpoint resolution {resolution}")
    return mask


def _cmd_translate(args) -> int:
    ckpt, gen = _load_generator(args.ckpt, args.direction)
    image_path = Path(args.image)
    if not image_path.exists():
        raise CliValidationError(f"image not found: {image_path}")
    from PIL import Image as PILImage
    with PILImage.open(image_path) as img:
        source = pil_to_tensor(img, ckpt.resolution)[None]
    mask = _load_mask_for(args.mask, ckpt.resolution)
    out = networks.translate(gen, source, mask)[0]
    save_png(tensor_to_pil(out), args.out)
    print(f"wrote {args.out}")
    return 0


def _parse_preset(token: str, resolution: int, rng) -> Mask:
    kind, _, param = token.partition(":")
    if kind == "full":
        from .masks import full_mask
        return full_mask(resolution)
    if kind == "square":
        return sample_centered_square(resolution, float(param or 1.0))
    if kind == "round":
        return sample_round(resolution, float(param or 1.0))
    if kind in ("multi-rectangles", "multi-rect"):
        return sample_mask(MaskSchemeConfig("multi-rectangles"), resolution, rng=rng)
    raise CliValidationError(f"unknown mask preset {token!r}")


def _cmd_grid(args) -> int:
    ckpt, gen = _load_generator(args.ckpt, args.direction)
    rng = make_rng(args.seed)
    grid_masks = [_load_mask_for(p, ckpt.resolution) for p in args.mask]
    grid_masks += [_parse_preset(p, ckpt.resolution, rng) for p in args.preset]
    if not grid_masks:
        raise CliValidationError("no masks: give at least one --mask or --preset")
    from PIL import Image as PILImage
    import torch
    sources = []
    for path in args.image:
        p = Path(path)
        if not p.exists():
            raise CliValidationError(f"image not found: {p}")
        with PILImage.open(p) as img:
            sources.append(pil_to_tensor(img, ckpt.resolution))
    grid = evaluation.render_output_grid(gen, torch.stack(sources), grid_masks)
    save_png(grid, args.out)
    print(f"wrote {args.out}")
    return 0


# -- fid-matrix -------------------------------------------------------------------

def _cmd_fid_matrix(args) -> int:
    ckpt, _ = _load_generator(args.ckpt, args.direction)
    resolution = args.resolution or ckpt.resolution
    if args.data:
        dataset = DatasetSpec.from_layout(args.data, resolution=resolution)
    elif args.root_a and args.root_b:
        dataset = DatasetSpec(args.root_a, args.root_b, resolution=resolution)
    else:
        raise CliValidationError("give --data or both --root-a and --root-b")
    try:
        scales = tuple(float(s) for s in args.scales.split(",") if s)
    except ValueError as exc:
        raise CliValidationError(f"bad --scales: {exc}") from exc
    matrix = evaluation.fid_matrix(
        ckpt.generators, dataset, scales=scales, direction=args.direction,
        extractor_id=args.extractor, limit=args.limit, use_cache=not args.no_cache,
    )
    report = matrix.to_json()
    report["comparisons"] = matrix.comparisons()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2))
    if args.heatmap:
        matrix.save_heatmap(args.heatmap)
    print(f"wrote {out}")
    return 0


# -- serve -------------------------------------------------------------------------

def _cmd_serve(args) -> int:
    if not Path(args.ckpt).exists():
        raise CliValidationError(f"checkpoint not found: {args.ckpt}")
    import uvicorn

    from .service import create_app
    app = create_app(args.ckpt, cors_origins=tuple(args.allow_origin or ("*",)))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "masks": _cmd_masks,
    "translate": _cmd_translate,
    "grid": _cmd_grid,
    "fid-matrix": _cmd_fid_matrix,
    "serve": _cmd_serve,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (CliValidationError, MaskParameterError, MaskFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, NonFiniteLossError, networks.CheckpointError,
            evaluation.ExtractorError, evaluation.FidComputationError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
