from __future__ import annotations

import numpy as np
import pytest

from arguard.gateway.backends import Backends
from arguard.imaging import Image, Mask


def solid_image(width: int, height: int, color=(128, 128, 128)) -> Image:
    array = np.zeros((height, width, 3), dtype=np.uint8)
    array[:, :] = color
    return Image(array)


def image_with_patch(width, height, base, patch_color, x, y, w, h) -> Image:
    array = np.zeros((height, width, 3), dtype=np.uint8)
    array[:, :] = base
    array[y : y + h, x : x + w] = patch_color
    return Image(array)


def rect_mask(width, height, x, y, w, h) -> Mask:
    bits = np.zeros((height, width), dtype=bool)
    bits[y : y + h, x : x + w] = True
    return Mask(bits)


def random_mask(rng: np.random.Generator, width: int, height: int, density=0.5) -> Mask:
    return Mask(rng.random((height, width)) < density)


class FakeVlm:
    """Returns scripted text (or raises); records every call."""

    def __init__(self, text="", error: Exception | None = None):
        self.text = text
        self.error = error
        self.calls: list[tuple[int, str]] = []

    def complete(self, images, prompt):
        self.calls.append((len(images), prompt))
        if self.error is not None:
            raise self.error
        return self.text(images, prompt) if callable(self.text) else self.text


class FakeDetector:
    def __init__(self, detections=()):
        self.detections = list(detections)
        self.calls = []

    def detect(self, image, phrases):
        self.calls.append(list(phrases))
        return list(self.detections)


class FakeSegmenter:
    def __init__(self, masks=()):
        self.masks = list(masks)
        self.calls = []

    def segment(self, image, boxes):
        self.calls.append(list(boxes))
        if self.masks:
            return [self.masks[min(i, len(self.masks) - 1)] for i in range(len(boxes))]
        return [Mask.empty(image.width, image.height) for _ in boxes]


def fake_backends(vlm=None, detector=None, segmenter=None) -> Backends:
    return Backends(
        vlm=vlm or FakeVlm(),
        detector=detector or FakeDetector(),
        segmenter=segmenter or FakeSegmenter(),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)
