"""Traditional-vision obstruction baselines: saliency map and Canny edges.

Both share the same comparison rule: the covered area is compared against the
whole raw frame, and only a strictly richer covered area counts as an
obstruction. The saliency field uses the spectral-residual method (chosen for
determinism, no training data); the field implementation is swappable as long
as it produces a normalized per-pixel score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyContentMask, ImageTooSmall
from .imaging import Image, Mask, luminance

_MIN_SIDE = 8
_GRADIENT_CEIL = 255.0 * math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SaliencyField:
    """Per-pixel saliency scores normalized to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError(f"expected (h, w) field, got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")
        if arr.max() not in (0.0, 1.0):
            raise ValueError("field must be min-max normalized (max 1 unless all-zero)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CannyParams:
    """Gaussian blur scale plus hysteresis bounds on the 8-bit gradient scale.

    Gradients are normalized so a full 0-255 step edge has magnitude 255 per
    axis (ceiling 255 * sqrt(2) for the magnitude).
    """

    gaussian_sigma: float = 1.4
    low_threshold: float = 30.0
    high_threshold: float = 90.0

    def __post_init__(self):
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")
        if not 0 < self.low_threshold < self.high_threshold <= _GRADIENT_CEIL:
            raise ValueError(
                f"need 0 < low < high <= {_GRADIENT_CEIL:.1f}, "
                f"got {self.low_threshold}/{self.high_threshold}"
            )


def _check_size(image: Image) -> None:
    if image.width < _MIN_SIDE or image.height < _MIN_SIDE:
        raise ImageTooSmall(f"need at least {_MIN_SIDE}x{_MIN_SIDE}, got {image.width}x{image.height}")


def compute_saliency(image: Image, smoothing_sigma: float = 3.0) -> SaliencyField:
    """Spectral-residual saliency of the grayscale image.

    Log-amplitude residual of the frequency spectrum against its local
    average, inverse-transformed, squared, Gaussian-smoothed, then min-max
    normalized. A constant image has no spectral residual and yields the
    all-zero field.
    """
    _check_size(image)
    gray = luminance(image)
    if np.ptp(gray) == 0.0:
        return SaliencyField(np.zeros(gray.shape))

    spectrum = np.fft.fft2(gray)
    amplitude = np.abs(spectrum)
    # relative floor keeps exact spectral zeros from blowing up the local
    # residual of their neighbors (synthetic scenes hit exact zeros)
    log_amplitude = np.log(amplitude + amplitude.max() * 1e-4)
    phase = np.angle(spectrum)
    # local average over the (periodic) spectrum
    residual = log_amplitude - ndimage.uniform_filter(log_amplitude, size=3, mode="wrap")
    magnitude = np.exp(residual)
    # bins with no energy carry an arbitrary phase; keep them silent
    magnitude[amplitude <= amplitude.max() * 1e-12] = 0.0
    saliency = np.abs(np.fft.ifft2(magnitude * np.exp(1j * phase))) ** 2
    saliency = ndimage.gaussian_filter(saliency, sigma=smoothing_sigma)

    saliency -= saliency.min()
    peak = saliency.max()
    if peak > 0.0:
        saliency /= peak
    return SaliencyField(saliency)


def saliency_obstruction(raw: Image, content_mask: Mask) -> bool:
    """True iff mean saliency under the content strictly exceeds the frame mean."""
    if not raw.same_size(content_mask):
        raise DimensionMismatch(
            f"image {raw.width}x{raw.height} vs mask {content_mask.width}x{content_mask.height}"
        )
    if content_mask.area == 0:
        raise EmptyContentMask("content mask has no pixels")
    field = compute_saliency(raw).values
    return float(field[content_mask.bits].mean()) > float(field.mean())


def _nonmax_suppress(magnitude: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are local maxima along the quantized gradient direction."""
    padded = np.pad(magnitude, 1, mode="constant")

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + magnitude.shape[0], 1 + dx : 1 + dx + magnitude.shape[1]]

    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    horizontal = (angle < 22.5) | (angle >= 157.5)
    diag_up = (angle >= 22.5) & (angle < 67.5)
    vertical = (angle >= 67.5) & (angle < 112.5)
    diag_down = ~(horizontal | diag_up | vertical)

    n1 = np.where(
        horizontal, shifted(0, 1),
        np.where(diag_up, shifted(1, -1), np.where(vertical, shifted(1, 0), shifted(-1, -1))),
    )
    n2 = np.where(
        horizontal, shifted(0, -1),
        np.where(diag_up, shifted(-1, 1), np.where(vertical, shifted(-1, 0), shifted(1, 1))),
    )
    # asymmetric tie-break so a two-pixel plateau keeps exactly one pixel
    keep = (magnitude >= n1) & (magnitude > n2)
    return np.where(keep, magnitude, 0.0)


def compute_canny(image: Image, params: CannyParams = CannyParams()) -> Mask:
    """Classical Canny edge mask.

    Gaussian blur at sigma, Sobel gradients (normalized to the 8-bit scale),
    non-maximum suppression, then double-threshold hysteresis: weak edge
    pixels survive only in 8-connected components that touch a strong pixel.
    """
    _check_size(image)
    smoothed = ndimage.gaussian_filter(luminance(image), sigma=params.gaussian_sigma)
    gx = ndimage.sobel(smoothed, axis=1) / 4.0
    gy = ndimage.sobel(smoothed, axis=0) / 4.0
    magnitude = np.hypot(gx, gy)

    suppressed = _nonmax_suppress(magnitude, gx, gy)
    weak = suppressed >= params.low_threshold
    strong = suppressed >= params.high_threshold
    if not weak.any():
        return Mask(np.zeros_like(weak))

    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return Mask(np.zeros_like(weak))
    anchored = np.zeros(count + 1, dtype=bool)
    anchored[np.unique(labels[strong])] = True
    anchored[0] = False
    return Mask(anchored[labels])


def canny_obstruction(raw: Image, content_mask: Mask, params: CannyParams = CannyParams()) -> bool:
    """True iff edge density under the content strictly exceeds the frame density."""
    if not raw.same_size(content_mask):
        raise DimensionMismatch(
            f"image {raw.width}x{raw.height} vs mask {content_mask.width}x{content_mask.height}"
        )
    if content_mask.area == 0:
        raise EmptyContentMask("content mask has no pixels")
    edges = compute_canny(raw, params).bits
    covered_density = float(np.count_nonzero(edges & content_mask.bits)) / content_mask.area
    overall_density = float(np.count_nonzero(edges)) / edges.size
    return covered_density > overall_density
