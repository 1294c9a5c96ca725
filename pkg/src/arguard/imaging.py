"""Exact pixel-level image and mask arithmetic.

Images are RGB8 (alpha ignored), masks are one bit per pixel. All counts are
exact integer arithmetic; ratios are computed in double precision from exact
counts. Everything here is a pure function on immutable values and safe to
call concurrently.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import BothEmpty, DimensionMismatch, EmptyKeyMask

# 8-connectivity structuring element for component analysis
_CONN8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class Image:
    """An RGB8 frame stored as a row-major (height, width, 3) uint8 array."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) RGB8 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    def same_size(self, other: "Image | Mask") -> bool:
        return self.width == other.width and self.height == other.height

    def to_png_bytes(self) -> bytes:
        """Canonical PNG encoding (used on the wire and for fingerprints)."""
        buf = io.BytesIO()
        PILImage.fromarray(np.asarray(self.array), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "Image":
        with PILImage.open(io.BytesIO(data)) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    @classmethod
    def load(cls, path) -> "Image":
        with PILImage.open(path) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    def save(self, path) -> None:
        PILImage.fromarray(np.asarray(self.array), mode="RGB").save(path, format="PNG")


@dataclass(frozen=True, eq=False)
class Mask:
    """A binary pixel set over the same grid as the image it annotates."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"expected (h, w) binary array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("mask dimensions must be positive")
        arr = np.ascontiguousarray(arr.astype(bool))
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        """Number of set bits."""
        return int(np.count_nonzero(self.bits))

    def same_size(self, other: "Image | Mask") -> bool:
        return self.width == other.width and self.height == other.height

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    def bounding_box(self) -> tuple[int, int, int, int] | None:
        """Tight (x_min, y_min, x_max, y_max) around the set bits, exclusive max."""
        ys, xs = np.nonzero(self.bits)
        if ys.size == 0:
            return None
        return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1

    # Mask fixture file format: single-channel 8-bit PNG, 0 = outside,
    # 255 = inside. The reader is tolerant (any nonzero loads as set),
    # the writer is strict (emits only 0 and 255).
    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        arr = np.where(self.bits, 255, 0).astype(np.uint8)
        PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "Mask":
        with PILImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("L"))
        return cls(arr != 0)

    @classmethod
    def load(cls, path) -> "Mask":
        with open(path, "rb") as fh:
            return cls.from_png_bytes(fh.read())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())


@dataclass(frozen=True)
class DiffConfig:
    """Parameters for frame differencing.

    ``tolerance`` is the per-channel absolute intensity difference below which
    a pixel counts as unchanged; ``min_component_area`` drops 8-connected
    diff components smaller than that many pixels (speckle suppression).
    Defaults absorb camera noise and codec artifacts; use tolerance 0 for
    synthetic pixel-exact tests.
    """

    tolerance: int = 8
    min_component_area: int = 16

    def __post_init__(self):
        if not 0 <= self.tolerance <= 255:
            raise ValueError(f"tolerance must be in [0, 255], got {self.tolerance}")
        if self.min_component_area < 0:
            raise ValueError("min_component_area must be >= 0")


@dataclass(frozen=True)
class ImagePair:
    """A simultaneously captured (raw, augmented) frame pair."""

    raw: Image
    aug: Image

    def __post_init__(self):
        if not self.raw.same_size(self.aug):
            raise DimensionMismatch(
                f"raw is {self.raw.width}x{self.raw.height}, "
                f"augmented is {self.aug.width}x{self.aug.height}"
            )

    @property
    def width(self) -> int:
        return self.raw.width

    @property
    def height(self) -> int:
        return self.raw.height


def _require_same_size(a, b) -> None:
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")


def extract_virtual_mask(raw: Image, aug: Image, cfg: DiffConfig = DiffConfig()) -> Mask:
    """Extract the virtual-content mask by per-pixel frame differencing.

    A bit is set exactly where any channel differs by more than
    ``cfg.tolerance``; connected components (8-connectivity) smaller than
    ``cfg.min_component_area`` are then removed.
    """
    _require_same_size(raw, aug)
    diff = np.abs(raw.array.astype(np.int16) - aug.array.astype(np.int16))
    bits = (diff > cfg.tolerance).any(axis=2)
    if cfg.min_component_area > 0 and bits.any():
        labels, count = ndimage.label(bits, structure=_CONN8)
        if count:
            areas = np.bincount(labels.ravel())
            keep = areas >= cfg.min_component_area
            keep[0] = False
            bits = keep[labels]
    return Mask(bits)


def mask_intersection_area(a: Mask, b: Mask) -> int:
    """Exact count of pixels set in both masks."""
    _require_same_size(a, b)
    return int(np.count_nonzero(a.bits & b.bits))


def obstruction_ratio(key_mask: Mask, content_mask: Mask) -> float:
    """Fraction of the key object's pixels covered by virtual content."""
    _require_same_size(key_mask, content_mask)
    key_area = key_mask.area
    if key_area == 0:
        raise EmptyKeyMask("key-object mask has no pixels")
    return mask_intersection_area(key_mask, content_mask) / key_area


def mask_iou(a: Mask, b: Mask) -> float:
    """Intersection over union of two masks."""
    _require_same_size(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        raise BothEmpty("IoU undefined for two empty masks")
    return inter / union


def luminance(image: Image) -> np.ndarray:
    """ITU-R BT.601 grayscale as float64, range [0, 255]."""
    return image.array @ np.array([0.2989, 0.5870, 0.1140])
