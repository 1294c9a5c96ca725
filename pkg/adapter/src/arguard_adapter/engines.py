"""Inference engines.

The builtin engines are deterministic classical-vision stand-ins that run
anywhere with no weights: a blob-proposal detector, a box-prompted
color-contrast segmenter and a rule-based image describer. They make the
adapter fully testable offline; swap in the hf/proxy engines for real models.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_CONN8 = np.ones((3, 3), dtype=bool)

_COLOR_NAMES = {
    "red": (200, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 70, 200),
    "yellow": (220, 210, 50),
    "orange": (240, 140, 30),
    "purple": (140, 60, 180),
    "cyan": (60, 200, 210),
    "white": (240, 240, 240),
    "black": (20, 20, 20),
    "gray": (128, 128, 128),
}


def _border_median(array: np.ndarray, thickness: int = 2) -> np.ndarray:
    ring = np.concatenate(
        [
            array[:thickness].reshape(-1, 3),
            array[-thickness:].reshape(-1, 3),
            array[:, :thickness].reshape(-1, 3),
            array[:, -thickness:].reshape(-1, 3),
        ]
    )
    return np.median(ring, axis=0)


def _color_name(rgb: np.ndarray) -> str:
    distances = {
        name: float(np.abs(np.asarray(ref, dtype=float) - rgb).sum())
        for name, ref in _COLOR_NAMES.items()
    }
    return min(distances, key=distances.get)


class BuiltinDetector:
    """Proposes boxes around blobs that stand out from the border color.

    Open-vocabulary matching is approximated: when the query phrase names a
    color, only blobs of that color are returned; otherwise every prominent
    blob is proposed for the phrase.
    """

    model_id = "builtin-blob-detector"

    def __init__(self, contrast_threshold: float = 60.0, min_area_fraction: float = 0.0005):
        self.contrast_threshold = contrast_threshold
        self.min_area_fraction = min_area_fraction

    def _blobs(self, array: np.ndarray):
        background = _border_median(array)
        distance = np.abs(array.astype(float) - background).sum(axis=2)
        foreground = distance > self.contrast_threshold
        labels, count = ndimage.label(foreground, structure=_CONN8)
        min_area = max(16, int(self.min_area_fraction * array.shape[0] * array.shape[1]))
        blobs = []
        for index in range(1, count + 1):
            component = labels == index
            area = int(component.sum())
            if area < min_area:
                continue
            ys, xs = np.nonzero(component)
            box = (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
            box_area = (box[2] - box[0]) * (box[3] - box[1])
            solidity = area / box_area
            size_factor = min(1.0, area / (0.02 * array.size / 3))
            score = round(min(0.99, 0.35 + 0.45 * solidity + 0.19 * size_factor), 4)
            mean_color = array[component].reshape(-1, 3).astype(float).mean(axis=0)
            blobs.append({"box": box, "score": score, "color": _color_name(mean_color)})
        blobs.sort(key=lambda b: (-b["score"], b["box"]))
        return blobs

    def detect(self, array: np.ndarray, phrases: list[str]) -> list[dict]:
        blobs = self._blobs(array)
        detections = []
        for phrase in phrases:
            wanted_colors = [c for c in _COLOR_NAMES if c in phrase.lower().split()]
            for blob in blobs:
                if wanted_colors and blob["color"] not in wanted_colors:
                    continue
                detections.append({"box": list(blob["box"]), "score": blob["score"], "phrase": phrase})
        return detections[:20]


class BuiltinSegmenter:
    """Box-prompted segmentation by color contrast against the box surround.

    The background reference is the median color of a ring just outside the
    box (falling back to the image border when the box touches the edge); the
    mask is the largest connected component of in-box pixels far from that
    reference, holes filled.
    """

    model_id = "builtin-box-segmenter"

    def segment(self, array: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
        height, width = array.shape[:2]
        x0, y0, x1, y1 = (int(round(v)) for v in box)
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(width, max(x1, x0 + 1)), min(height, max(y1, y0 + 1))

        margin = max(2, (x1 - x0) // 10, (y1 - y0) // 10)
        ox0, oy0 = max(0, x0 - margin), max(0, y0 - margin)
        ox1, oy1 = min(width, x1 + margin), min(height, y1 + margin)
        ring = np.ones((oy1 - oy0, ox1 - ox0), dtype=bool)
        ring[y0 - oy0 : y1 - oy0, x0 - ox0 : x1 - ox0] = False
        if ring.any():
            reference = np.median(array[oy0:oy1, ox0:ox1][ring].reshape(-1, 3), axis=0)
        else:
            reference = _border_median(array)

        region = array[y0:y1, x0:x1].astype(float)
        distance = np.abs(region - reference).sum(axis=2)
        threshold = max(30.0, float(distance.max()) * 0.5)
        inside = distance >= threshold
        if inside.any():
            labels, count = ndimage.label(inside, structure=_CONN8)
            areas = np.bincount(labels.ravel())
            areas[0] = 0
            inside = labels == int(areas.argmax())
            inside = ndimage.binary_fill_holes(inside)

        bits = np.zeros((height, width), dtype=bool)
        bits[y0:y1, x0:x1] = inside
        return bits


class BuiltinVlm:
    """Deterministic image describer.

    Single-image prompts get a plain description. Structured two-image
    yes/no questionnaires get a numbered transcript: placement and style are
    answered from pixel measurements; semantic questions are answered "no"
    with an explanation, since this engine cannot judge meaning — it never
    claims manipulation it cannot see.
    """

    model_id = "builtin-describer"
    decoding = "deterministic"

    @staticmethod
    def _foreground(array: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        background = _border_median(array)
        distance = np.abs(array.astype(float) - background).sum(axis=2)
        return distance > 60.0, background

    @staticmethod
    def _bbox(bits: np.ndarray):
        ys, xs = np.nonzero(bits)
        if ys.size == 0:
            return None
        return xs.min(), ys.min(), xs.max() + 1, ys.max() + 1

    def _questionnaire(self, raw: np.ndarray, augmented: np.ndarray) -> str:
        changed = np.abs(raw.astype(int) - augmented.astype(int)).max(axis=2) > 8
        real_fg, _ = self._foreground(raw)
        content_box = self._bbox(changed)
        real_box = self._bbox(real_fg & ~changed)

        if changed.any():
            content_color = _color_name(
                augmented[changed].reshape(-1, 3).astype(float).mean(axis=0)
            )
            content = f"a {content_color} region of {int(changed.sum())} pixels"
        else:
            content = "nothing detectable"
        key_object = "the scene"
        if real_box is not None:
            key_color = _color_name(
                raw[real_fg & ~changed].reshape(-1, 3).astype(float).mean(axis=0)
            )
            key_object = f"the {key_color} object"

        aligned = False
        if content_box is not None and real_box is not None:
            margin = 5
            aligned = not (
                content_box[2] + margin < real_box[0]
                or real_box[2] + margin < content_box[0]
                or content_box[3] + margin < real_box[1]
                or real_box[3] + margin < content_box[1]
            )
        styled = False
        if changed.any() and real_fg.any():
            content_mean = augmented[changed].reshape(-1, 3).astype(float).mean(axis=0)
            scene_mean = raw[real_fg].reshape(-1, 3).astype(float).mean(axis=0)
            styled = float(np.abs(content_mean - scene_mean).sum()) < 150.0

        def word(flag: bool) -> str:
            return "Yes" if flag else "No"

        return "\n".join(
            [
                f"1. The virtual content is {content}.",
                f"2. It interacts with {key_object}.",
                f"3. {word(aligned)}, measured from the pixel footprints.",
                f"4. {word(styled)}, judged by color statistics alone.",
                "5. No, this engine cannot assess semantic relations, so it does not "
                "claim any misrepresentation.",
                f"6. {word(aligned and styled and False)}.",
            ]
        )

    def complete(self, arrays: list[np.ndarray], prompt: str) -> str:
        if len(arrays) == 2 and "yes or no" in prompt.lower():
            return self._questionnaire(arrays[0], arrays[1])
        first = arrays[0]
        foreground, background = self._foreground(first)
        subject = "scene"
        if foreground.any():
            mean_color = first[foreground].reshape(-1, 3).astype(float).mean(axis=0)
            subject = f"{_color_name(mean_color)} object"
        text = f"The image shows a {subject} on a {_color_name(np.asarray(background))} background."
        if len(arrays) == 2:
            changed = int((np.abs(arrays[0].astype(int) - arrays[1].astype(int)).max(axis=2) > 8).sum())
            text += f" The second image differs from the first across {changed} pixels."
        return text


def build_engines(config) -> dict:
    """Instantiate the configured engine for each enabled role."""
    from .config import ENGINE_BUILTIN, ENGINE_HF, ENGINE_OPENAI_PROXY

    engines: dict = {"detector": None, "segmenter": None, "vlm": None}
    if config.detector_engine == ENGINE_BUILTIN:
        engines["detector"] = BuiltinDetector()
    elif config.detector_engine == ENGINE_HF:
        from .hf import HFDetector

        engines["detector"] = HFDetector(config.detector_model, config.device)
    elif config.detector_engine is not None:
        raise ValueError(f"unknown detector engine {config.detector_engine!r}")

    if config.segmenter_engine == ENGINE_BUILTIN:
        engines["segmenter"] = BuiltinSegmenter()
    elif config.segmenter_engine == ENGINE_HF:
        from .hf import HFSegmenter

        engines["segmenter"] = HFSegmenter(config.segmenter_model, config.device)
    elif config.segmenter_engine is not None:
        raise ValueError(f"unknown segmenter engine {config.segmenter_engine!r}")

    if config.vlm_engine == ENGINE_BUILTIN:
        engines["vlm"] = BuiltinVlm()
    elif config.vlm_engine == ENGINE_OPENAI_PROXY:
        from .proxy import OpenAiProxyVlm

        engines["vlm"] = OpenAiProxyVlm(config.vlm_model, config.api_base, config.api_key)
    elif config.vlm_engine is not None:
        raise ValueError(f"unknown vlm engine {config.vlm_engine!r}")
    return engines
