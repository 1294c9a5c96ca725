"""Deterministic fixture replay and capture for model-free testing.

Fixtures are keyed by a fingerprint of the backend kind plus the canonical
wire payload, so an identical request always replays the identical response,
across process restarts when backed by a directory of files.
"""

from __future__ import annotations

import hashlib
import time
from pathlib import Path
from typing import Sequence

from ..errors import FixtureMiss
from ..imaging import Image, Mask
from . import protocol
from .backends import Backends
from .protocol import Box, Detection

KIND_VLM = "vlm"
KIND_DETECT = "detect"
KIND_SEGMENT = "segment"


def fingerprint(kind: str, payload: dict) -> str:
    digest = hashlib.sha256()
    digest.update(protocol.canonical_json({"kind": kind, "payload": payload}))
    return digest.hexdigest()


def vlm_payload(images: Sequence[Image], prompt: str) -> dict:
    return protocol.VlmRequest(
        prompt=prompt, images=tuple(protocol.image_to_b64(i) for i in images)
    ).to_payload()


def detect_payload(image: Image, phrases: Sequence[str]) -> dict:
    return protocol.DetectRequest(
        image=protocol.image_to_b64(image), phrases=tuple(phrases)
    ).to_payload()


def segment_payload(image: Image, boxes: Sequence[Box]) -> dict:
    return protocol.SegmentRequest(
        image=protocol.image_to_b64(image), boxes=tuple(tuple(b) for b in boxes)
    ).to_payload()


class FixtureStore:
    """Fingerprint-keyed store of request/response pairs.

    With a root directory every entry lives in its own JSON file and survives
    restarts; without one the store is memory-only.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._entries: dict[str, dict] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.root.glob("*.json")):
                entry = protocol.parse_json(path.read_bytes())
                self._entries[path.stem] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> dict | None:
        entry = self._entries.get(key)
        return entry["response"] if entry else None

    def put(self, kind: str, payload: dict, response: dict) -> str:
        key = fingerprint(kind, payload)
        entry = {"kind": kind, "payload": payload, "response": response}
        self._entries[key] = entry
        if self.root is not None:
            (self.root / f"{key}.json").write_bytes(protocol.canonical_json(entry))
        return key

    def delete(self, key: str) -> None:
        self._entries.pop(key, None)
        if self.root is not None:
            path = self.root / f"{key}.json"
            if path.exists():
                path.unlink()

    def fingerprints(self) -> list[str]:
        return sorted(self._entries)

    def digest(self) -> str:
        """Stable digest over every fixture, for report provenance."""
        acc = hashlib.sha256()
        for key in self.fingerprints():
            acc.update(key.encode("ascii"))
            acc.update(protocol.canonical_json(self._entries[key]))
        return acc.hexdigest()


class ScriptedBackend:
    """Replays canned responses for all three backend roles.

    In strict mode an unknown fingerprint raises FixtureMiss naming it; in
    lenient mode the defaults are an empty transcript, no detections, and
    all-zero masks.
    """

    def __init__(self, store: FixtureStore, strict: bool = True):
        self.store = store
        self.strict = strict

    def _lookup(self, kind: str, payload: dict) -> dict | None:
        key = fingerprint(kind, payload)
        response = self.store.get(key)
        if response is None and self.strict:
            raise FixtureMiss(f"no fixture for {kind} request {key}")
        return response

    def complete(self, images: Sequence[Image], prompt: str) -> str:
        response = self._lookup(KIND_VLM, vlm_payload(images, prompt))
        if response is None:
            return ""
        return protocol.VlmResponse.from_payload(response).text

    def detect(self, image: Image, phrases: Sequence[str]) -> list[Detection]:
        response = self._lookup(KIND_DETECT, detect_payload(image, phrases))
        if response is None:
            return []
        decoded = protocol.DetectResponse.from_payload(response)
        return [d.validate(image.width, image.height) for d in decoded.detections]

    def segment(self, image: Image, boxes: Sequence[Box]) -> list[Mask]:
        response = self._lookup(KIND_SEGMENT, segment_payload(image, boxes))
        if response is None:
            return [Mask.empty(image.width, image.height) for _ in boxes]
        return list(protocol.SegmentResponse.from_payload(response).masks)

    # Seeding helpers so tests and capture produce identical fixture shapes.
    def script_vlm(self, images: Sequence[Image], prompt: str, text: str) -> str:
        return self.store.put(
            KIND_VLM, vlm_payload(images, prompt), protocol.VlmResponse(text).to_payload()
        )

    def script_detect(
        self, image: Image, phrases: Sequence[str], detections: Sequence[Detection]
    ) -> str:
        return self.store.put(
            KIND_DETECT,
            detect_payload(image, phrases),
            protocol.DetectResponse(tuple(detections)).to_payload(),
        )

    def script_segment(self, image: Image, boxes: Sequence[Box], masks: Sequence[Mask]) -> str:
        return self.store.put(
            KIND_SEGMENT,
            segment_payload(image, boxes),
            protocol.SegmentResponse(tuple(masks)).to_payload(),
        )

    def as_backends(self) -> Backends:
        return Backends(vlm=self, detector=self, segmenter=self)


class _CaptureVlm:
    def __init__(self, inner, store: FixtureStore):
        self.inner, self.store = inner, store

    def complete(self, images, prompt):
        text = self.inner.complete(images, prompt)
        self.store.put(KIND_VLM, vlm_payload(images, prompt), protocol.VlmResponse(text).to_payload())
        return text


class _CaptureDetector:
    def __init__(self, inner, store: FixtureStore):
        self.inner, self.store = inner, store

    def detect(self, image, phrases):
        detections = self.inner.detect(image, phrases)
        self.store.put(
            KIND_DETECT,
            detect_payload(image, phrases),
            protocol.DetectResponse(tuple(detections)).to_payload(),
        )
        return detections


class _CaptureSegmenter:
    def __init__(self, inner, store: FixtureStore):
        self.inner, self.store = inner, store

    def segment(self, image, boxes):
        masks = self.inner.segment(image, boxes)
        self.store.put(
            KIND_SEGMENT,
            segment_payload(image, boxes),
            protocol.SegmentResponse(tuple(masks)).to_payload(),
        )
        return masks


def CaptureBackends(inner: Backends, store: FixtureStore) -> Backends:
    """Wrap live backends so every request/response lands in the store."""
    return Backends(
        vlm=_CaptureVlm(inner.vlm, store),
        detector=_CaptureDetector(inner.detector, store),
        segmenter=_CaptureSegmenter(inner.segmenter, store),
    )


class _Delayed:
    def __init__(self, inner, delay_s: float):
        self.inner, self.delay_s = inner, delay_s

    def complete(self, images, prompt):
        time.sleep(self.delay_s)
        return self.inner.complete(images, prompt)

    def detect(self, image, phrases):
        time.sleep(self.delay_s)
        return self.inner.detect(image, phrases)

    def segment(self, image, boxes):
        time.sleep(self.delay_s)
        return self.inner.segment(image, boxes)


def DelayedBackends(inner: Backends, delay_s: float) -> Backends:
    """Add a fixed per-call delay to every backend role (latency testing)."""
    return Backends(
        vlm=_Delayed(inner.vlm, delay_s),
        detector=_Delayed(inner.detector, delay_s),
        segmenter=_Delayed(inner.segmenter, delay_s),
    )
