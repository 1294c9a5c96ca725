"""Per-frame obstruction detection.

Pipeline: extract the virtual-content mask by frame differencing, locate each
cached key object with the open-set detector and box-prompted segmenter, and
flag the frame when any located key object is covered at or above the
configured ratio threshold (the comparison is inclusive, >=).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .errors import EmptyResponse
from .imaging import DiffConfig, ImagePair, Mask, extract_virtual_mask, obstruction_ratio
from .prompts import GREEDY, PromptVariant, build_prompt

if TYPE_CHECKING:
    from .gateway.backends import Backends, DetectionBackend, SegmentationBackend, VlmBackend
    from .imaging import Image

Box = tuple[float, float, float, float]

_ARTICLES = ("a ", "an ", "the ")
_EDGE_PUNCT = " \t\r\n.,:;!?\"'`()[]{}<>*-"
_LIST_MARKER = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s*")


def normalize_phrase(text: str, max_words: int = 4) -> str:
    """Lowercase, trim, collapse whitespace, drop a leading article, cap length."""
    phrase = text.strip(_EDGE_PUNCT).lower()
    phrase = " ".join(phrase.split())
    for article in _ARTICLES:
        if phrase.startswith(article):
            phrase = phrase[len(article):]
            break
    words = phrase.split()
    return " ".join(words[:max_words])


@dataclass(frozen=True)
class KeyObjectList:
    """Per-session cache of normalized key-object name phrases.

    Entries stay deduplicated after normalization and keep first-seen order.
    The list is immutable; refreshing produces a new value.
    """

    entries: tuple[str, ...] = ()
    last_refreshed: float | None = None

    def __post_init__(self):
        seen: dict[str, None] = {}
        for entry in self.entries:
            norm = normalize_phrase(entry)
            if norm:
                seen.setdefault(norm, None)
        object.__setattr__(self, "entries", tuple(seen))

    def merged(self, phrases: Sequence[str], refreshed_at: float) -> "KeyObjectList":
        return KeyObjectList(self.entries + tuple(phrases), last_refreshed=refreshed_at)


@dataclass(frozen=True)
class ObstructionConfig:
    """Thresholds for the obstruction pipeline.

    ``alpha`` is the coverage ratio at which a key object counts as
    obstructed; ``box_confidence_min`` gates which detector boxes are used.
    """

    alpha: float = 0.25
    box_confidence_min: float = 0.35
    diff: DiffConfig = field(default_factory=DiffConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.box_confidence_min <= 1.0:
            raise ValueError("box_confidence_min must be in [0, 1]")


@dataclass(frozen=True)
class LocatedObject:
    name: str
    box: Box
    mask: Mask


@dataclass(frozen=True)
class ObjectReading:
    """Per-key-object outcome within one frame."""

    name: str
    found: bool
    ratio: float
    box: Box | None


@dataclass(frozen=True)
class ObstructionResult:
    """Frame verdict plus the per-object evidence that produced it."""

    obstructed: bool
    per_object: tuple[ObjectReading, ...]
    content_mask_area: int
    alpha: float
    timings: dict[str, float] = field(default_factory=dict)
    # located masks aligned with per_object, kept only when requested
    masks: tuple[Mask | None, ...] | None = None


def parse_keyobject_response(text: str, variant: PromptVariant) -> list[str]:
    """Turn a model response into normalized key-object phrases.

    Greedy responses split on newlines, commas, semicolons and numbered-list
    markers; every other variant yields at most one phrase.
    """
    if variant.tag == GREEDY:
        fragments = re.split(r"[\n,;]+", text)
        phrases = []
        for fragment in fragments:
            fragment = _LIST_MARKER.sub("", fragment.strip())
            norm = normalize_phrase(fragment)
            if norm and norm not in phrases:
                phrases.append(norm)
    else:
        norm = normalize_phrase(_LIST_MARKER.sub("", text.strip()))
        phrases = [norm] if norm else []
    if not phrases:
        raise EmptyResponse("no key-object phrase survived normalization")
    return phrases


def refresh_keyobjects(
    current: KeyObjectList,
    raw: "Image",
    variant: PromptVariant,
    vlm: "VlmBackend",
) -> KeyObjectList:
    """Ask the VLM for key objects in the raw frame and merge them in.

    On backend failure or an empty response the error propagates and the
    caller keeps the previous list.
    """
    response = vlm.complete([raw], build_prompt(variant))
    phrases = parse_keyobject_response(response, variant)
    return current.merged(phrases, refreshed_at=time.time())


def locate_key_object(
    raw: "Image",
    name: str,
    detector: "DetectionBackend",
    segmenter: "SegmentationBackend",
    cfg: ObstructionConfig,
) -> LocatedObject | None:
    """Find one key object: best detector box over threshold, then its mask.

    Ties on confidence keep the earliest detection in backend order. Returns
    None when no box clears ``cfg.box_confidence_min`` (a per-object miss,
    not an error).
    """
    if not name:
        raise ValueError("key-object name must be non-empty")
    best = None
    for detection in detector.detect(raw, [name]):
        if detection.score >= cfg.box_confidence_min and (
            best is None or detection.score > best.score
        ):
            best = detection
    if best is None:
        return None
    mask = segmenter.segment(raw, [best.box])[0]
    return LocatedObject(name=name, box=best.box, mask=mask)


def detect_obstruction(
    pair: ImagePair,
    key_objects: KeyObjectList,
    backends: "Backends",
    cfg: ObstructionConfig,
    *,
    collect_masks: bool = False,
) -> ObstructionResult:
    """Decide whether any key object in the frame is obstructed.

    Key objects the detector cannot find are recorded with found=False and do
    not contribute to the verdict; a segmenter returning an empty mask counts
    as not found (no measurable extent to cover). ``collect_masks`` keeps the
    located masks for offline scoring.
    """
    t0 = time.perf_counter()
    content = extract_virtual_mask(pair.raw, pair.aug, cfg.diff)
    t_mask = time.perf_counter()

    readings: list[ObjectReading] = []
    masks: list[Mask | None] = []
    for name in key_objects.entries:
        located = locate_key_object(pair.raw, name, backends.detector, backends.segmenter, cfg)
        if located is None or located.mask.area == 0:
            box = located.box if located is not None else None
            readings.append(ObjectReading(name=name, found=False, ratio=0.0, box=box))
            masks.append(None)
            continue
        ratio = obstruction_ratio(located.mask, content)
        readings.append(ObjectReading(name=name, found=True, ratio=ratio, box=located.box))
        masks.append(located.mask)
    t_located = time.perf_counter()

    obstructed = any(r.found and r.ratio >= cfg.alpha for r in readings)
    t_done = time.perf_counter()
    return ObstructionResult(
        obstructed=obstructed,
        per_object=tuple(readings),
        content_mask_area=content.area,
        alpha=cfg.alpha,
        timings={
            "extract_mask": t_mask - t0,
            "locate": t_located - t_mask,
            "decide": t_done - t_located,
            "total": t_done - t0,
        },
        masks=tuple(masks) if collect_masks else None,
    )
