"""Dataset evaluation: run a configured pipeline over samples and score it.

Methods:
  standard / underdetailed / greedy  VLM key-object recognition, then the
                                     detect+segment+ratio pipeline
  endtoend                           the VLM answers the obstruction question
                                     itself from both images
  prior                              the labeled key object is injected,
                                     bypassing recognition entirely
  saliency / canny                   traditional-vision comparison rules

A ground-truth oracle backend (detector returns the labeled mask's bounding
box, segmenter returns the labeled mask) supports desk-scale runs without any
model, and fixture capture/replay makes live runs reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..baselines import canny_obstruction, saliency_obstruction
from ..errors import BackendUnavailable, EmptyResponse, NoVerdict
from ..gateway.backends import Backends
from ..gateway.protocol import Detection
from ..gateway.scripted import CaptureBackends, FixtureStore, ScriptedBackend
from ..imaging import Image, ImagePair, Mask, extract_virtual_mask, mask_iou
from ..manipulation import detect_manipulation, extract_binary_verdict
from ..obstruction import KeyObjectList, ObstructionConfig, detect_obstruction, parse_keyobject_response
from ..prompts import (
    GREEDY_VARIANT,
    STANDARD_VARIANT,
    UNDERDETAILED_VARIANT,
    build_prompt,
    end_to_end_step2,
)
from .dataset import ManipulationSample, ObstructionSample
from .metrics import ConfusionCounts, MetricsReport, mean_of, recognition_match

logger = logging.getLogger(__name__)

OBSTRUCTION_METHODS = (
    "standard",
    "endtoend",
    "underdetailed",
    "greedy",
    "prior",
    "saliency",
    "canny",
)

_VARIANTS = {
    "standard": STANDARD_VARIANT,
    "underdetailed": UNDERDETAILED_VARIANT,
    "greedy": GREEDY_VARIANT,
}


def _image_key(image: Image) -> str:
    return hashlib.sha256(image.to_png_bytes()).hexdigest()


class GroundTruthBackend:
    """Oracle backends driven by dataset labels.

    detect() returns the labeled mask's bounding box at full confidence when
    the queried phrase matches the sample's key object; segment() returns the
    labeled mask; complete() answers single-image prompts with the key-object
    label (recognition oracle).
    """

    def __init__(self, samples: Sequence[ObstructionSample]):
        self._by_image: dict[str, ObstructionSample] = {}
        self._masks: dict[str, Mask] = {}
        for sample in samples:
            key = _image_key(sample.load_raw())
            self._by_image[key] = sample
            self._masks[key] = sample.load_gt_mask()

    def _sample_for(self, image: Image) -> tuple[ObstructionSample, Mask] | None:
        key = _image_key(image)
        sample = self._by_image.get(key)
        return (sample, self._masks[key]) if sample else None

    def complete(self, images, prompt):
        hit = self._sample_for(images[0])
        return hit[0].key_object if hit else ""

    def detect(self, image, phrases):
        hit = self._sample_for(image)
        if hit is None:
            return []
        sample, mask = hit
        detections = []
        for phrase in phrases:
            if recognition_match(sample.key_object, phrase):
                box = mask.bounding_box()
                detections.append(
                    Detection(
                        box=(float(box[0]), float(box[1]), float(box[2]), float(box[3])),
                        score=1.0,
                        phrase=phrase,
                    )
                )
        return detections

    def segment(self, image, boxes):
        hit = self._sample_for(image)
        if hit is None:
            return [Mask.empty(image.width, image.height) for _ in boxes]
        return [hit[1] for _ in boxes]

    def as_backends(self) -> Backends:
        return Backends(vlm=self, detector=self, segmenter=self)


def _config_snapshot(config: ObstructionConfig, method: str, extra: dict | None = None) -> dict:
    snapshot = {
        "method": method,
        "alpha": config.alpha,
        "box_confidence_min": config.box_confidence_min,
        "diff_tolerance": config.diff.tolerance,
        "min_component_area": config.diff.min_component_area,
    }
    if extra:
        snapshot.update(extra)
    return snapshot


def evaluate_obstruction(
    samples: Sequence[ObstructionSample],
    config: ObstructionConfig,
    backends: Backends | None,
    method: str = "standard",
    *,
    synonyms: dict[str, str] | None = None,
    fixture_digest: str = "",
) -> MetricsReport:
    """Score one obstruction method over a dataset.

    A backend outage aborts the run and flags the report partial; per-object
    detector misses are not errors and feed the not-found rate.
    """
    if method not in OBSTRUCTION_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {OBSTRUCTION_METHODS}")
    if not samples:
        raise ValueError("dataset is empty")
    if method not in ("saliency", "canny") and backends is None:
        raise ValueError(f"method {method!r} needs backends")

    counts = ConfusionCounts()
    recognition_hits: list[bool] = []
    ious: list[float] = []
    located_attempts = 0
    not_found = 0
    no_verdict = 0
    partial = False

    for sample in samples:
        try:
            raw, aug = sample.load_raw(), sample.load_aug()
            pair = ImagePair(raw, aug)

            if method in ("saliency", "canny"):
                content = extract_virtual_mask(raw, aug, config.diff)
                if content.area == 0:
                    verdict = False
                elif method == "saliency":
                    verdict = saliency_obstruction(raw, content)
                else:
                    verdict = canny_obstruction(raw, content)
                counts = counts.add(verdict, sample.obstructed)
                continue

            if method == "endtoend":
                step1 = backends.vlm.complete([raw], build_prompt(STANDARD_VARIANT))
                try:
                    phrase = parse_keyobject_response(step1, STANDARD_VARIANT)[0]
                except EmptyResponse:
                    recognition_hits.append(False)
                    no_verdict += 1
                    counts = counts.add(not sample.obstructed, sample.obstructed)
                    continue
                recognition_hits.append(recognition_match(sample.key_object, phrase, synonyms))
                step2 = backends.vlm.complete([raw, aug], build_prompt(end_to_end_step2(phrase)))
                try:
                    verdict = extract_binary_verdict(step2)
                except NoVerdict:
                    no_verdict += 1
                    logger.warning("sample %s: no verdict in end-to-end answer", sample.id)
                    counts = counts.add(not sample.obstructed, sample.obstructed)
                    continue
                counts = counts.add(verdict, sample.obstructed)
                continue

            if method == "prior":
                phrases = [sample.key_object]
                recognition_hits.append(True)
            else:
                variant = _VARIANTS[method]
                response = backends.vlm.complete([raw], build_prompt(variant))
                try:
                    phrases = parse_keyobject_response(response, variant)
                except EmptyResponse:
                    phrases = []
                recognition_hits.append(
                    any(recognition_match(sample.key_object, p, synonyms) for p in phrases)
                )

            result = detect_obstruction(
                pair, KeyObjectList(tuple(phrases)), backends, config, collect_masks=True
            )
            counts = counts.add(result.obstructed, sample.obstructed)

            # segmentation quality for the entry naming the labeled object
            matching = [
                i
                for i, reading in enumerate(result.per_object)
                if recognition_match(sample.key_object, reading.name, synonyms)
            ]
            if matching:
                located_attempts += 1
                located = [i for i in matching if result.per_object[i].found]
                if located:
                    ious.append(mask_iou(result.masks[located[0]], sample.load_gt_mask()))
                else:
                    not_found += 1
        except BackendUnavailable as exc:
            logger.error("backend outage at sample %s: %s", sample.id, exc)
            partial = True
            break

    return MetricsReport(
        task="obstruction",
        method=method,
        counts=counts,
        key_object_recognition_accuracy=mean_of([1.0 if hit else 0.0 for hit in recognition_hits]),
        segmentation_miou=mean_of(ious),
        not_found_rate=(not_found / located_attempts) if located_attempts else None,
        no_verdict_count=no_verdict,
        config=_config_snapshot(
            config, method, {"synonyms": sorted(synonyms.items()) if synonyms else None}
        ),
        fixture_digest=fixture_digest,
        partial=partial,
    )


def evaluate_manipulation(
    samples: Sequence[ManipulationSample],
    backends: Backends,
    *,
    no_verdict_policy: str = "incorrect",
    fixture_digest: str = "",
) -> MetricsReport:
    """Score manipulation detection over a dataset.

    ``no_verdict_policy`` decides how undecodable transcripts count:
    "incorrect" (default, conservative) or "skip".
    """
    if not samples:
        raise ValueError("dataset is empty")
    if no_verdict_policy not in ("incorrect", "skip"):
        raise ValueError(f"unknown no-verdict policy {no_verdict_policy!r}")

    counts = ConfusionCounts()
    no_verdict = 0
    partial = False
    for sample in samples:
        try:
            pair = ImagePair(sample.load_raw(), sample.load_aug())
            try:
                result = detect_manipulation(pair, backends.vlm)
            except NoVerdict:
                no_verdict += 1
                logger.warning("sample %s: transcript had no verdict", sample.id)
                if no_verdict_policy == "incorrect":
                    counts = counts.add(not sample.labels.manipulated, sample.labels.manipulated)
                continue
            counts = counts.add(result.manipulated, sample.labels.manipulated)
        except BackendUnavailable as exc:
            logger.error("backend outage at sample %s: %s", sample.id, exc)
            partial = True
            break

    return MetricsReport(
        task="manipulation",
        method="factors",
        counts=counts,
        no_verdict_count=no_verdict,
        config={"no_verdict_policy": no_verdict_policy},
        fixture_digest=fixture_digest,
        partial=partial,
    )


@dataclass(frozen=True)
class EvalSpec:
    """Everything needed to run (or re-run) one evaluation."""

    task: str  # "obstruction" | "manipulation"
    method: str = "standard"
    config: ObstructionConfig = field(default_factory=ObstructionConfig)
    synonyms: dict[str, str] | None = None
    no_verdict_policy: str = "incorrect"


def _run(spec: EvalSpec, samples, backends: Backends | None, digest: str) -> MetricsReport:
    if spec.task == "obstruction":
        return evaluate_obstruction(
            samples,
            spec.config,
            backends,
            spec.method,
            synonyms=spec.synonyms,
            fixture_digest=digest,
        )
    return evaluate_manipulation(
        samples, backends, no_verdict_policy=spec.no_verdict_policy, fixture_digest=digest
    )


def capture_fixtures(
    spec: EvalSpec, samples, live_backends: Backends, store: FixtureStore
) -> MetricsReport:
    """Run against live backends, recording every request/response."""
    captured = CaptureBackends(live_backends, store)
    report = _run(spec, samples, captured, digest="")
    # digest covers everything recorded during the run
    return replace(report, fixture_digest=store.digest())


def replay_fixtures(spec: EvalSpec, samples, store: FixtureStore) -> MetricsReport:
    """Re-run entirely from fixtures; a missing fixture raises FixtureMiss."""
    scripted = ScriptedBackend(store, strict=True)
    return _run(spec, samples, scripted.as_backends(), digest=store.digest())
