"""Backend client interfaces and the HTTP implementation of wire protocol v1."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import httpx

from ..errors import BackendUnavailable, CountMismatch, MalformedResponse, Unauthorized
from ..imaging import Image, Mask
from . import protocol
from .protocol import Box, Detection


@runtime_checkable
class VlmBackend(Protocol):
    def complete(self, images: Sequence[Image], prompt: str) -> str: ...


@runtime_checkable
class DetectionBackend(Protocol):
    def detect(self, image: Image, phrases: Sequence[str]) -> list[Detection]: ...


@runtime_checkable
class SegmentationBackend(Protocol):
    def segment(self, image: Image, boxes: Sequence[Box]) -> list[Mask]: ...


@dataclass(frozen=True)
class BackendEndpoint:
    """Where and how to reach one backend service."""

    base_url: str
    timeout_ms: int = 10_000
    retries: int = 2
    auth_token: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def _check_images(images: Sequence[Image]) -> None:
    if not 1 <= len(images) <= 2:
        raise ValueError(f"expected 1 or 2 images, got {len(images)}")


def _check_phrases(phrases: Sequence[str]) -> None:
    if not phrases or any(not p for p in phrases):
        raise ValueError("phrases must be non-empty strings")


class HttpBackend:
    """HTTP client for all three backend roles at one endpoint.

    Transport errors and 5xx responses are retried up to ``endpoint.retries``
    times (so at most retries + 1 attempts) before BackendUnavailable. A
    bounded semaphore caps in-flight requests per endpoint.
    """

    def __init__(self, endpoint: BackendEndpoint, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        headers = {}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        self._client = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"),
            timeout=endpoint.timeout_ms / 1000.0,
            headers=headers,
            transport=transport,
        )
        self._slots = threading.BoundedSemaphore(endpoint.max_in_flight)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, body: bytes) -> bytes:
        attempts = self.endpoint.retries + 1
        last_error: Exception | None = None
        for _ in range(attempts):
            try:
                with self._slots:
                    response = self._client.post(
                        path, content=body, headers={"Content-Type": "application/json"}
                    )
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise Unauthorized(f"{path}: HTTP {response.status_code}")
            if 400 <= response.status_code < 500:
                raise MalformedResponse(
                    f"{path}: HTTP {response.status_code}: {response.text[:200]}"
                )
            if response.status_code >= 500:
                last_error = BackendUnavailable(
                    f"{path}: HTTP {response.status_code}: {response.text[:200]}"
                )
                continue
            return response.content
        raise BackendUnavailable(
            f"{path} failed after {attempts} attempt(s): {last_error}"
        ) from last_error

    def complete(self, images: Sequence[Image], prompt: str) -> str:
        _check_images(images)
        request = protocol.VlmRequest(
            prompt=prompt, images=tuple(protocol.image_to_b64(i) for i in images)
        )
        body = self._post(protocol.VLM_PATH, protocol.encode_message(request))
        return protocol.decode_message(protocol.VlmResponse, body).text

    def detect(self, image: Image, phrases: Sequence[str]) -> list[Detection]:
        _check_phrases(phrases)
        request = protocol.DetectRequest(
            image=protocol.image_to_b64(image), phrases=tuple(phrases)
        )
        body = self._post(protocol.DETECT_PATH, protocol.encode_message(request))
        response = protocol.decode_message(protocol.DetectResponse, body)
        return [d.validate(image.width, image.height) for d in response.detections]

    def segment(self, image: Image, boxes: Sequence[Box]) -> list[Mask]:
        for box in boxes:
            Detection(box=box, score=0.0, phrase="").validate(image.width, image.height)
        request = protocol.SegmentRequest(
            image=protocol.image_to_b64(image), boxes=tuple(tuple(b) for b in boxes)
        )
        body = self._post(protocol.SEGMENT_PATH, protocol.encode_message(request))
        response = protocol.decode_message(protocol.SegmentResponse, body)
        if len(response.masks) != len(boxes):
            raise CountMismatch(
                f"asked for {len(boxes)} masks, backend returned {len(response.masks)}"
            )
        for mask in response.masks:
            if mask.width != image.width or mask.height != image.height:
                raise MalformedResponse(
                    f"mask is {mask.width}x{mask.height}, image is {image.width}x{image.height}"
                )
        return list(response.masks)

    def health(self) -> bool:
        try:
            response = self._client.get(protocol.HEALTH_PATH)
            return response.status_code == 200
        except httpx.HTTPError:
            return False


@dataclass
class Backends:
    """The three model roles the detectors consume."""

    vlm: VlmBackend
    detector: DetectionBackend
    segmenter: SegmentationBackend

    @classmethod
    def from_urls(
        cls,
        vlm_url: str,
        detector_url: str | None = None,
        segmenter_url: str | None = None,
        **endpoint_kwargs,
    ) -> "Backends":
        """Build HTTP clients; one URL serves all roles unless overridden."""
        vlm = HttpBackend(BackendEndpoint(vlm_url, **endpoint_kwargs))
        detector = (
            vlm
            if detector_url in (None, vlm_url)
            else HttpBackend(BackendEndpoint(detector_url, **endpoint_kwargs))
        )
        if segmenter_url in (None, vlm_url):
            segmenter = vlm
        elif segmenter_url == detector_url:
            segmenter = detector
        else:
            segmenter = HttpBackend(BackendEndpoint(segmenter_url, **endpoint_kwargs))
        return cls(vlm=vlm, detector=detector, segmenter=segmenter)
