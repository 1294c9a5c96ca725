"""Synthetic scene composition with exact ground truth.

``composite_scene`` overlays RGBA content onto a raw frame: fully opaque
content pixels overwrite the frame and form the ground-truth content mask bit
for bit, so frame differencing at tolerance 0 can be checked against a known
answer. The dataset generator builds labeled obstruction pairs whose
obstructed flag is computed from the masks with exact integer arithmetic at
the configured ratio threshold.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import OutOfBounds
from ..imaging import Image, Mask, mask_intersection_area

# phrase pool for synthetic key objects; the detector oracle matches on these
KEY_OBJECT_CLASSES = (
    "stop sign",
    "exit sign",
    "caution sign",
    "fire extinguisher",
    "biohazard sign",
    "no parking sign",
    "scissors",
    "ceiling fan",
)

_BG_LOW, _BG_HIGH = 60, 180  # background stays inside this band
_KEY_COLOR = (200, 30, 30)
_CONTENT_COLOR = (15, 220, 235)  # channel 0 differs from both band and key color


def composite_scene(
    raw: Image, content: np.ndarray, position: tuple[int, int]
) -> tuple[Image, Mask]:
    """Overlay RGBA content at (x, y); returns the augmented frame and the
    exact mask of overwritten pixels.

    Only fully opaque content pixels (alpha 255) overwrite the frame; the
    content must fit inside it.
    """
    content = np.asarray(content)
    if content.ndim != 3 or content.shape[2] != 4:
        raise ValueError(f"content must be (h, w, 4) RGBA, got shape {content.shape}")
    x, y = position
    ch, cw = content.shape[:2]
    if x < 0 or y < 0 or x + cw > raw.width or y + ch > raw.height:
        raise OutOfBounds(
            f"content {cw}x{ch} at ({x}, {y}) does not fit in {raw.width}x{raw.height}"
        )
    opaque = content[:, :, 3] == 255
    out = np.array(raw.array, copy=True)
    region = out[y : y + ch, x : x + cw]
    region[opaque] = content[:, :, :3][opaque]
    bits = np.zeros((raw.height, raw.width), dtype=bool)
    bits[y : y + ch, x : x + cw] = opaque
    return Image(out), Mask(bits)


def make_sprite(
    width: int, height: int, color: tuple[int, int, int], shape: str = "rect"
) -> np.ndarray:
    """Opaque RGBA sprite, rectangular or elliptical footprint."""
    sprite = np.zeros((height, width, 4), dtype=np.uint8)
    if shape == "rect":
        footprint = np.ones((height, width), dtype=bool)
    elif shape == "ellipse":
        yy, xx = np.mgrid[0:height, 0:width]
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        footprint = ((xx - cx) / max(cx, 0.5)) ** 2 + ((yy - cy) / max(cy, 0.5)) ** 2 <= 1.0
    else:
        raise ValueError(f"unknown sprite shape {shape!r}")
    sprite[footprint] = (*color, 255)
    return sprite


def make_background(rng: np.random.Generator, size: int) -> Image:
    """Smooth noise field confined to the mid-intensity band."""
    coarse = rng.integers(_BG_LOW, _BG_HIGH, (size // 8 + 1, size // 8 + 1, 3))
    field = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:size, :size]
    return Image(field.astype(np.uint8))


def generate_obstruction_dataset(
    out_dir: str | Path,
    n: int,
    seed: int,
    *,
    alpha: float = 0.25,
    size: int = 96,
    single_class: bool = False,
) -> Path:
    """Write n labeled pairs under out_dir and return the manifest path.

    Content placement sweeps the overlap range so both labels occur; the
    obstructed flag comes straight from the mask intersection at ``alpha``.
    Content pixels always differ from the raw frame in channel 0, so the
    ground-truth content mask is recoverable at tolerance 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir = Path(out_dir)
    for sub in ("raw", "aug", "masks"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    records = []
    for index in range(n):
        sample_id = f"{index:04d}"
        background = make_background(rng, size)

        key_w = int(rng.integers(16, 33))
        key_h = int(rng.integers(16, 33))
        key_x = int(rng.integers(4, size - key_w - 4))
        key_y = int(rng.integers(4, size - key_h - 4))
        key_shape = "ellipse" if rng.random() < 0.5 else "rect"
        raw, key_mask = composite_scene(
            background, make_sprite(key_w, key_h, _KEY_COLOR, key_shape), (key_x, key_y)
        )

        content_w = int(rng.integers(12, 29))
        content_h = int(rng.integers(12, 29))
        # slide the content from full overlap to clear of the key object
        spread = rng.random()
        offset_x = int(round(spread * (key_w + content_w)))
        content_x = min(max(0, key_x - content_w // 2 + offset_x), size - content_w)
        content_y = min(max(0, key_y + int(rng.integers(-6, 7))), size - content_h)
        aug, content_mask = composite_scene(
            raw, make_sprite(content_w, content_h, _CONTENT_COLOR, "rect"), (content_x, content_y)
        )

        overlap = mask_intersection_area(key_mask, content_mask)
        obstructed = overlap >= alpha * key_mask.area

        raw.save(out_dir / "raw" / f"{sample_id}.png")
        aug.save(out_dir / "aug" / f"{sample_id}.png")
        key_mask.save(out_dir / "masks" / f"{sample_id}.png")
        key_object = (
            KEY_OBJECT_CLASSES[0]
            if single_class
            else KEY_OBJECT_CLASSES[int(rng.integers(0, len(KEY_OBJECT_CLASSES)))]
        )
        records.append(
            {
                "id": sample_id,
                "raw": f"raw/{sample_id}.png",
                "aug": f"aug/{sample_id}.png",
                "key_object": key_object,
                "gt_mask": f"masks/{sample_id}.png",
                "obstructed": bool(obstructed),
            }
        )

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps({"kind": "obstruction", "alpha": alpha, "samples": records}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    return manifest_path
