"""Server-side wire protocol v1 helpers (self-contained).

Masks are RLE over row-major order, runs alternating zero/one counts and
starting with the count of zeros; images travel as base64 PNG.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image as PILImage


class WireError(ValueError):
    """Raised for malformed request payloads; mapped to HTTP 400."""

    def __init__(self, message: str, kind: str = "malformed_request"):
        super().__init__(message)
        self.kind = kind


def decode_image(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with PILImage.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise WireError(f"images must be base64 PNG: {exc}") from exc


def mask_to_rle(bits: np.ndarray) -> dict:
    flat = np.asarray(bits, dtype=bool).ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate([[0], boundaries, [flat.size]])
    lengths = np.diff(edges).tolist()
    if flat[0]:
        lengths = [0] + lengths
    return {"width": int(bits.shape[1]), "height": int(bits.shape[0]), "rle": lengths}


def parse_box(value, width: int, height: int) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise WireError("box must be [x0, y0, x1, y1]")
    try:
        x0, y0, x1, y1 = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise WireError("box coordinates must be numbers") from exc
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise WireError(f"box {value} outside {width}x{height} image or degenerate")
    return (x0, y0, x1, y1)


def require(payload, key: str):
    if not isinstance(payload, dict) or key not in payload:
        raise WireError(f"request is missing field {key!r}")
    return payload[key]
