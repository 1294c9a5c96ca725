"""HTTP service implementing wire protocol v1 over the configured engines.

Images whose long edge exceeds the configured limit are downscaled before
inference; boxes are rescaled and masks are re-encoded at the original
resolution, so callers always receive full-resolution geometry. The adapter
holds no per-request state. Engine calls run under a bounded worker pool;
requests beyond capacity queue.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image as PILImage

from .config import AdapterConfig
from .engines import build_engines
from .wire import WireError, decode_image, mask_to_rle, parse_box, require


def _downscale(array: np.ndarray, max_edge: int) -> tuple[np.ndarray, float]:
    """Returns (work image, scale) with scale = work/original size ratio."""
    height, width = array.shape[:2]
    long_edge = max(height, width)
    if long_edge <= max_edge:
        return array, 1.0
    scale = max_edge / long_edge
    new_size = (max(1, round(width * scale)), max(1, round(height * scale)))
    resized = PILImage.fromarray(array).resize(new_size, PILImage.BILINEAR)
    return np.asarray(resized, dtype=np.uint8), scale


def _upscale_mask(bits: np.ndarray, width: int, height: int) -> np.ndarray:
    if bits.shape == (height, width):
        return bits
    image = PILImage.fromarray(bits.astype(np.uint8) * 255, mode="L")
    return np.asarray(image.resize((width, height), PILImage.NEAREST)) != 0


def _clip_box(box, width, height):
    x0, y0, x1, y1 = box
    x0 = min(max(x0, 0.0), width - 1.0)
    y0 = min(max(y0, 0.0), height - 1.0)
    return (x0, y0, max(x1, x0 + 1.0), max(y1, y0 + 1.0))


def create_app(config: AdapterConfig | None = None) -> FastAPI:
    config = config or AdapterConfig()
    engines = build_engines(config)
    slots = threading.BoundedSemaphore(config.max_workers)
    app = FastAPI(title="arguard model adapter")
    app.state.config = config

    def headers_for(role: str) -> dict:
        engine = engines[role]
        out = {"X-Model-Id": getattr(engine, "model_id", "unknown")}
        decoding = getattr(engine, "decoding", None)
        if decoding:
            out["X-Decoding"] = decoding
        return out

    @app.exception_handler(WireError)
    async def _wire_error(_request: Request, exc: WireError):
        return JSONResponse(status_code=400, content={"error": str(exc), "kind": exc.kind})

    @app.exception_handler(Exception)
    async def _server_error(_request: Request, exc: Exception):
        return JSONResponse(
            status_code=500, content={"error": str(exc), "kind": "inference_failed"}
        )

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "models": config.model_identifiers()}

    def _role_or_503(role: str):
        if engines[role] is None:
            return JSONResponse(
                status_code=503,
                content={"error": f"{role} role is not enabled", "kind": "role_disabled"},
            )
        return None

    @app.post("/v1/detect")
    async def detect(request: Request):
        disabled = _role_or_503("detector")
        if disabled:
            return disabled
        payload = await _json(request)
        array = decode_image(require(payload, "image"))
        phrases = require(payload, "phrases")
        if not isinstance(phrases, list) or not phrases or any(
            not isinstance(p, str) or not p for p in phrases
        ):
            raise WireError("phrases must be a non-empty list of non-empty strings")
        height, width = array.shape[:2]
        work, scale = _downscale(array, config.max_image_edge)
        with slots:
            detections = engines["detector"].detect(work, phrases)
        for detection in detections:
            box = [float(v) / scale for v in detection["box"]]
            detection["box"] = list(_clip_box(box, width, height))
            detection["score"] = float(min(1.0, max(0.0, detection["score"])))
        return JSONResponse(content={"detections": detections}, headers=headers_for("detector"))

    @app.post("/v1/segment")
    async def segment(request: Request):
        disabled = _role_or_503("segmenter")
        if disabled:
            return disabled
        payload = await _json(request)
        array = decode_image(require(payload, "image"))
        height, width = array.shape[:2]
        boxes = require(payload, "boxes")
        if not isinstance(boxes, list):
            raise WireError("boxes must be a list")
        parsed = [parse_box(box, width, height) for box in boxes]
        work, scale = _downscale(array, config.max_image_edge)
        masks = []
        with slots:
            for box in parsed:
                scaled_box = tuple(v * scale for v in box)
                bits = engines["segmenter"].segment(work, scaled_box)
                masks.append(mask_to_rle(_upscale_mask(bits, width, height)))
        return JSONResponse(content={"masks": masks}, headers=headers_for("segmenter"))

    @app.post("/v1/vlm/complete")
    async def vlm_complete(request: Request):
        disabled = _role_or_503("vlm")
        if disabled:
            return disabled
        payload = await _json(request)
        prompt = require(payload, "prompt")
        images = require(payload, "images")
        if not isinstance(prompt, str) or not isinstance(images, list):
            raise WireError("prompt must be a string and images a list")
        if not 1 <= len(images) <= 2:
            raise WireError("expected 1 or 2 images")
        arrays = [
            _downscale(decode_image(b64), config.max_image_edge)[0] for b64 in images
        ]
        with slots:
            text = engines["vlm"].complete(arrays, prompt)
        return JSONResponse(content={"text": text}, headers=headers_for("vlm"))

    async def _json(request: Request):
        import json

        body = await request.body()
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise WireError(f"body must be JSON: {exc}") from exc

    return app
