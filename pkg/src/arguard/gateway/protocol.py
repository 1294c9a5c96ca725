"""Wire protocol v1: message schemas, canonical encoding, mask RLE.

All bodies are UTF-8 JSON. Encoding is canonical (sorted keys, compact
separators) so identical messages are byte-identical, which fixture
fingerprinting and replay digests rely on. Binary masks travel as run-length
encodings over row-major order, starting with the count of zeros.

Routes (POST unless noted):
  {base}/v1/vlm/complete   VlmRequest  -> VlmResponse
  {base}/v1/detect         DetectRequest -> DetectResponse
  {base}/v1/segment        SegmentRequest -> SegmentResponse
  {base}/healthz (GET)     -> {"status": "ok"}
Errors: HTTP 4xx/5xx with an ErrorBody.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from ..errors import MalformedResponse
from ..imaging import Image, Mask

VLM_PATH = "/v1/vlm/complete"
DETECT_PATH = "/v1/detect"
SEGMENT_PATH = "/v1/segment"
HEALTH_PATH = "/healthz"

Box = tuple[float, float, float, float]


def canonical_json(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def parse_json(data: bytes | str):
    try:
        return json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedResponse(f"body is not valid JSON: {exc}") from exc


def image_to_b64(image: Image) -> str:
    return base64.b64encode(image.to_png_bytes()).decode("ascii")


def image_from_b64(data: str) -> Image:
    try:
        raw = base64.b64decode(data, validate=True)
        return Image.from_png_bytes(raw)
    except Exception as exc:
        raise MalformedResponse(f"invalid base64 PNG image: {exc}") from exc


def mask_to_rle(mask: Mask) -> dict:
    """Encode a mask as alternating run lengths, zeros first."""
    flat = mask.bits.ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate([[0], boundaries, [flat.size]])
    lengths = np.diff(edges).tolist()
    if flat[0]:
        lengths = [0] + lengths
    return {"width": mask.width, "height": mask.height, "rle": lengths}


def mask_from_rle(payload: dict) -> Mask:
    """Decode an RLE payload, rejecting non-canonical encodings."""
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        runs = list(payload["rle"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad RLE payload: {exc}") from exc
    if width < 1 or height < 1:
        raise MalformedResponse("RLE dimensions must be positive")
    if not runs or any((not isinstance(r, int)) or isinstance(r, bool) or r < 0 for r in runs):
        raise MalformedResponse("RLE runs must be non-negative integers")
    if any(r == 0 for r in runs[1:]):
        raise MalformedResponse("only the leading zero-run may be empty")
    if sum(runs) != width * height:
        raise MalformedResponse(f"RLE covers {sum(runs)} pixels, expected {width * height}")
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return Mask(flat.reshape(height, width))


@dataclass(frozen=True)
class Detection:
    """One detector hit: a pixel box, its confidence, and the matched phrase."""

    box: Box
    score: float
    phrase: str

    def validate(self, width: int, height: int) -> "Detection":
        x0, y0, x1, y1 = self.box
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise MalformedResponse(
                f"box {self.box} outside {width}x{height} image or degenerate"
            )
        if not 0.0 <= self.score <= 1.0:
            raise MalformedResponse(f"score {self.score} outside [0, 1]")
        return self


def _require(payload: dict, key: str, kind_name: str):
    if not isinstance(payload, dict) or key not in payload:
        raise MalformedResponse(f"{kind_name} payload missing field {key!r}")
    return payload[key]


def _box_from(value, kind_name: str) -> Box:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise MalformedResponse(f"{kind_name}: box must be [x0, y0, x1, y1]")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise MalformedResponse(f"{kind_name}: box coordinates must be numbers")
    return (float(value[0]), float(value[1]), float(value[2]), float(value[3]))


@dataclass(frozen=True)
class VlmRequest:
    prompt: str
    images: tuple[str, ...]  # base64 PNG, request order

    def to_payload(self) -> dict:
        return {"prompt": self.prompt, "images": list(self.images)}

    @classmethod
    def from_payload(cls, payload: dict) -> "VlmRequest":
        prompt = _require(payload, "prompt", "VlmRequest")
        images = _require(payload, "images", "VlmRequest")
        if not isinstance(prompt, str) or not isinstance(images, list):
            raise MalformedResponse("VlmRequest: prompt must be str, images a list")
        if not all(isinstance(i, str) for i in images):
            raise MalformedResponse("VlmRequest: images must be base64 strings")
        return cls(prompt=prompt, images=tuple(images))


@dataclass(frozen=True)
class VlmResponse:
    text: str

    def to_payload(self) -> dict:
        return {"text": self.text}

    @classmethod
    def from_payload(cls, payload: dict) -> "VlmResponse":
        text = _require(payload, "text", "VlmResponse")
        if not isinstance(text, str):
            raise MalformedResponse("VlmResponse: text must be a string")
        return cls(text=text)


@dataclass(frozen=True)
class DetectRequest:
    image: str
    phrases: tuple[str, ...]

    def to_payload(self) -> dict:
        return {"image": self.image, "phrases": list(self.phrases)}

    @classmethod
    def from_payload(cls, payload: dict) -> "DetectRequest":
        image = _require(payload, "image", "DetectRequest")
        phrases = _require(payload, "phrases", "DetectRequest")
        if not isinstance(image, str) or not isinstance(phrases, list):
            raise MalformedResponse("DetectRequest: bad field types")
        if not all(isinstance(p, str) for p in phrases):
            raise MalformedResponse("DetectRequest: phrases must be strings")
        return cls(image=image, phrases=tuple(phrases))


@dataclass(frozen=True)
class DetectResponse:
    detections: tuple[Detection, ...]

    def to_payload(self) -> dict:
        return {
            "detections": [
                {"box": list(d.box), "score": d.score, "phrase": d.phrase}
                for d in self.detections
            ]
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "DetectResponse":
        raw = _require(payload, "detections", "DetectResponse")
        if not isinstance(raw, list):
            raise MalformedResponse("DetectResponse: detections must be a list")
        detections = []
        for item in raw:
            box = _box_from(_require(item, "box", "DetectResponse"), "DetectResponse")
            score = _require(item, "score", "DetectResponse")
            phrase = _require(item, "phrase", "DetectResponse")
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise MalformedResponse("DetectResponse: score must be a number")
            if not isinstance(phrase, str):
                raise MalformedResponse("DetectResponse: phrase must be a string")
            detections.append(Detection(box=box, score=float(score), phrase=phrase))
        return cls(detections=tuple(detections))


@dataclass(frozen=True)
class SegmentRequest:
    image: str
    boxes: tuple[Box, ...]

    def to_payload(self) -> dict:
        return {"image": self.image, "boxes": [list(b) for b in self.boxes]}

    @classmethod
    def from_payload(cls, payload: dict) -> "SegmentRequest":
        image = _require(payload, "image", "SegmentRequest")
        boxes = _require(payload, "boxes", "SegmentRequest")
        if not isinstance(image, str) or not isinstance(boxes, list):
            raise MalformedResponse("SegmentRequest: bad field types")
        return cls(image=image, boxes=tuple(_box_from(b, "SegmentRequest") for b in boxes))


@dataclass(frozen=True)
class SegmentResponse:
    masks: tuple[Mask, ...]

    def to_payload(self) -> dict:
        return {"masks": [mask_to_rle(m) for m in self.masks]}

    @classmethod
    def from_payload(cls, payload: dict) -> "SegmentResponse":
        raw = _require(payload, "masks", "SegmentResponse")
        if not isinstance(raw, list):
            raise MalformedResponse("SegmentResponse: masks must be a list")
        return cls(masks=tuple(mask_from_rle(m) for m in raw))


@dataclass(frozen=True)
class ErrorBody:
    error: str
    kind: str

    def to_payload(self) -> dict:
        return {"error": self.error, "kind": self.kind}

    @classmethod
    def from_payload(cls, payload: dict) -> "ErrorBody":
        error = _require(payload, "error", "ErrorBody")
        kind = _require(payload, "kind", "ErrorBody")
        if not isinstance(error, str) or not isinstance(kind, str):
            raise MalformedResponse("ErrorBody: fields must be strings")
        return cls(error=error, kind=kind)


MESSAGE_TYPES = (
    VlmRequest,
    VlmResponse,
    DetectRequest,
    DetectResponse,
    SegmentRequest,
    SegmentResponse,
    ErrorBody,
)


def encode_message(message) -> bytes:
    return canonical_json(message.to_payload())


def decode_message(cls, data: bytes | str):
    return cls.from_payload(parse_json(data))
