"""Shared protocol conformance checks.

One suite validates every implementation of wire protocol v1 — the scripted
replay backend and any live adapter service — so there is a single source of
truth for message shapes and invariants.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx
import numpy as np

from ..imaging import Image, Mask
from . import protocol
from .backends import Backends
from .protocol import Box
from .scripted import ScriptedBackend


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class TestScene:
    """A synthetic scene with one unambiguous object at a known box."""

    image: Image
    box: Box
    mask: Mask
    phrase: str


def make_test_scene(size: int = 128) -> TestScene:
    """Bright solid square on a plain background."""
    array = np.full((size, size, 3), 235, dtype=np.uint8)
    x0, y0, x1, y1 = size // 4, size // 4, 3 * size // 4, 3 * size // 4
    array[y0:y1, x0:x1] = (200, 30, 30)
    bits = np.zeros((size, size), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return TestScene(
        image=Image(array),
        box=(float(x0), float(y0), float(x1), float(y1)),
        mask=Mask(bits),
        phrase="red square",
    )


def seed_scene_fixtures(backend: ScriptedBackend, scene: TestScene) -> None:
    """Script ideal responses for the conformance scene."""
    backend.script_vlm([scene.image], "Describe the scene.", "a red square on a white wall")
    backend.script_vlm(
        [scene.image, scene.image], "Compare the two images.", "the images are identical"
    )
    backend.script_detect(
        scene.image,
        [scene.phrase],
        [protocol.Detection(box=scene.box, score=0.95, phrase=scene.phrase)],
    )
    backend.script_segment(scene.image, [scene.box], [scene.mask])
    backend.script_segment(scene.image, [scene.box, scene.box], [scene.mask, scene.mask])


def _dilated_box(box: Box, width: int, height: int, slack: float = 0.1) -> Box:
    x0, y0, x1, y1 = box
    dx = max(5.0, (x1 - x0) * slack)
    dy = max(5.0, (y1 - y0) * slack)
    return (max(0.0, x0 - dx), max(0.0, y0 - dy), min(float(width), x1 + dx), min(float(height), y1 + dy))


def _mask_within(mask: Mask, box: Box) -> bool:
    bbox = mask.bounding_box()
    if bbox is None:
        return False
    x0, y0, x1, y1 = box
    return bbox[0] >= x0 and bbox[1] >= y0 and bbox[2] <= x1 and bbox[3] <= y1


def run_protocol_suite(
    backends: Backends,
    *,
    base_url: str | None = None,
    scene: TestScene | None = None,
) -> list[CheckResult]:
    """Exercise all three roles and (optionally) the raw HTTP error contract.

    Returns one result per check; callers assert all ``ok``.
    """
    scene = scene or make_test_scene()
    results: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            detail = fn() or ""
            results.append(CheckResult(name, True, detail))
        except Exception as exc:  # noqa: BLE001 - the suite reports, never raises
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))

    def vlm_single():
        text = backends.vlm.complete([scene.image], "Describe the scene.")
        assert isinstance(text, str), "vlm must return text"
        return f"text={text[:40]!r}"

    def vlm_pair():
        text = backends.vlm.complete([scene.image, scene.image], "Compare the two images.")
        assert isinstance(text, str)
        return f"text={text[:40]!r}"

    def detect_square():
        detections = backends.detector.detect(scene.image, [scene.phrase])
        assert detections, "expected at least one detection"
        for d in detections:
            d.validate(scene.image.width, scene.image.height)
        return f"{len(detections)} detection(s), top score {detections[0].score:.2f}"

    def segment_square():
        masks = backends.segmenter.segment(scene.image, [scene.box])
        assert len(masks) == 1, "one mask per box"
        mask = masks[0]
        assert mask.width == scene.image.width and mask.height == scene.image.height
        dilated = _dilated_box(scene.box, scene.image.width, scene.image.height)
        assert _mask_within(mask, dilated), "mask bits must stay near the prompt box"
        coverage = np.count_nonzero(mask.bits & scene.mask.bits) / scene.mask.area
        return f"coverage={coverage:.2%}"

    def segment_two_boxes():
        masks = backends.segmenter.segment(scene.image, [scene.box, scene.box])
        assert len(masks) == 2, "mask count must match box count"
        return ""

    check("vlm_complete_single_image", vlm_single)
    check("vlm_complete_image_pair", vlm_pair)
    check("detect_returns_valid_boxes", detect_square)
    check("segment_one_mask_per_box", segment_square)
    check("segment_count_matches_boxes", segment_two_boxes)

    if base_url is not None:
        def health():
            response = httpx.get(base_url.rstrip("/") + protocol.HEALTH_PATH, timeout=10)
            assert response.status_code == 200
            return ""

        def error_body_shape():
            response = httpx.post(
                base_url.rstrip("/") + protocol.DETECT_PATH,
                content=b'{"not": "a detect request"}',
                headers={"Content-Type": "application/json"},
                timeout=10,
            )
            assert response.status_code >= 400, "malformed request must be rejected"
            body = protocol.ErrorBody.from_payload(protocol.parse_json(response.content))
            return f"kind={body.kind}"

        check("healthz", health)
        check("error_body_shape", error_body_shape)

    return results


def segment_coverage(backends: Backends, scene: TestScene) -> float:
    """Fraction of the scene object's pixels covered by the returned mask."""
    masks = backends.segmenter.segment(scene.image, [scene.box])
    return float(np.count_nonzero(masks[0].bits & scene.mask.bits)) / scene.mask.area
