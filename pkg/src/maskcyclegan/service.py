"""HTTP service exposing a frozen checkpoint: translation under user masks,
server-side mask sampling, and model metadata.

The loaded snapshot is immutable; requests never mutate parameters, so
concurrent handling is safe and identical requests return identical bytes.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image as PILImage
from pydantic import BaseModel

from .imutil import pil_to_tensor, png_bytes, tensor_to_pil
from .masks import (
    Mask,
    MaskFormatError,
    MaskParameterError,
    MaskSchemeConfig,
    full_mask,
    make_rng,
    mask_from_png_bytes,
    mask_png_bytes,
    sample_mask,
)
from .networks import load_checkpoint, mask_to_tensor

MAX_PAYLOAD_BYTES = 10 * 1024 * 1024


@dataclass
class ModelSnapshot:
    """Frozen generators plus the metadata served at /info."""

    generators: object
    resolution: int
    info: dict


def load_snapshot(ckpt_path: str | Path) -> ModelSnapshot:
    ckpt = load_checkpoint(ckpt_path)
    ckpt.generators.eval_()
    for gen in (ckpt.generators.a2b, ckpt.generators.b2a):
        for p in gen.parameters():
            p.requires_grad_(False)
    dataset = ckpt.config.get("dataset", {}) if isinstance(ckpt.config, dict) else {}
    domains = [
        Path(dataset.get("root_a", "A")).name or "A",
        Path(dataset.get("root_b", "B")).name or "B",
    ]
    info = {
        "checkpoint_id": Path(ckpt_path).name,
        "resolution": ckpt.resolution,
        "domains": domains,
        "scheme": ckpt.scheme.to_json() if ckpt.scheme else None,
        "iteration": ckpt.iteration,
    }
    return ModelSnapshot(generators=ckpt.generators, resolution=ckpt.resolution, info=info)


class TranslateRequest(BaseModel):
    direction: str
    image: str
    mask: str | None = None


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _decode_b64(field: str, payload: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MaskFormatError(f"{field} is not valid base64: {exc}") from exc


def _decode_image(data: bytes, resolution: int) -> torch.Tensor:
    try:
        img = PILImage.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise MaskFormatError(f"image is not a decodable PNG: {exc}") from exc
    return pil_to_tensor(img, resolution)[None]


def _decode_mask(data: bytes, resolution: int) -> Mask:
    mask = mask_from_png_bytes(data)
    if mask.size != resolution:
        img = PILImage.fromarray(mask.bits * np.uint8(255), mode="L")
        img = img.resize((resolution, resolution), PILImage.Resampling.NEAREST)
        mask = Mask((np.asarray(img) == 255).astype(np.uint8))
    return mask


def create_app(
    checkpoint: str | Path | None = None,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    app = FastAPI(title="maskcyclegan inference service")
    app.state.snapshot = load_snapshot(checkpoint) if checkpoint is not None else None

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, f"invalid request payload: {exc.errors()}")

    @app.middleware("http")
    async def _payload_limit(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > MAX_PAYLOAD_BYTES:
            return _error(413, f"payload exceeds {MAX_PAYLOAD_BYTES} bytes")
        return await call_next(request)

    @app.get("/health")
    async def health():
        if app.state.snapshot is None:
            return _error(503, "model not loaded")
        return {"status": "ok"}

    @app.get("/info")
    async def info():
        if app.state.snapshot is None:
            return _error(503, "model not loaded")
        return app.state.snapshot.info

    @app.post("/translate")
    async def translate_endpoint(req: TranslateRequest):
        snapshot: ModelSnapshot = app.state.snapshot
        if snapshot is None:
            return _error(503, "model not loaded")
        if req.direction not in ("a2b", "b2a"):
            return _error(400, f"direction must be 'a2b' or 'b2a', got {req.direction!r}")
        started = time.perf_counter()
        try:
            image = _decode_image(_decode_b64("image", req.image), snapshot.resolution)
            if req.mask is None:
                mask = full_mask(snapshot.resolution)
            else:
                mask = _decode_mask(_decode_b64("mask", req.mask), snapshot.resolution)
        except (MaskFormatError, MaskParameterError) as exc:
            return _error(400, str(exc))
        gen = snapshot.generators.by_direction(req.direction)
        with torch.no_grad():
            out = gen(image, mask_to_tensor(mask))[0]
        encoded = base64.b64encode(png_bytes(tensor_to_pil(out))).decode("ascii")
        latency_ms = (time.perf_counter() - started) * 1000.0
        return {"image": encoded, "latencyMs": latency_ms}

    @app.post("/masks/sample")
    async def sample_mask_endpoint(request: Request):
        snapshot: ModelSnapshot = app.state.snapshot
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            return _error(400, f"invalid JSON: {exc}")
        if not isinstance(payload, dict):
            return _error(400, "request body must be a JSON object")
        seed = payload.pop("seed", 0)
        size = payload.pop("size", None)
        if size is None:
            if snapshot is None:
                return _error(400, "no model loaded; an explicit 'size' is required")
            size = snapshot.resolution
        try:
            scheme = MaskSchemeConfig.from_json(payload)
            scheme.validate(int(size))
            mask = sample_mask(scheme, int(size), rng=make_rng(int(seed)))
        except (MaskParameterError, MaskFormatError, TypeError, ValueError) as exc:
            return _error(400, str(exc))
        encoded = base64.b64encode(mask_png_bytes(mask)).decode("ascii")
        return {"mask": encoded}

    return app
