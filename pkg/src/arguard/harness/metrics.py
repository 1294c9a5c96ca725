"""Confusion counts, derived metrics and the evaluation report record."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..gateway.protocol import canonical_json, parse_json
from ..obstruction import normalize_phrase


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None

    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    def add(self, predicted: bool, actual: bool) -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + (predicted and actual),
            fp=self.fp + (predicted and not actual),
            tn=self.tn + (not predicted and not actual),
            fn=self.fn + (not predicted and actual),
        )


def recognition_match(
    label: str, predicted: str, synonyms: dict[str, str] | None = None
) -> bool:
    """Name-match rule: normalized token containment in either direction.

    An optional synonym map rewrites whole phrases to a canonical form before
    comparing.
    """

    def canon(phrase: str) -> set[str]:
        norm = normalize_phrase(phrase, max_words=16)
        if synonyms:
            norm = normalize_phrase(synonyms.get(norm, norm), max_words=16)
        return set(norm.split())

    label_tokens, predicted_tokens = canon(label), canon(predicted)
    if not label_tokens or not predicted_tokens:
        return False
    return label_tokens <= predicted_tokens or predicted_tokens <= label_tokens


def mean_of(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class MetricsReport:
    """Everything one evaluation run produced, serializable byte-for-byte."""

    task: str
    method: str
    counts: ConfusionCounts
    key_object_recognition_accuracy: float | None = None
    segmentation_miou: float | None = None
    not_found_rate: float | None = None
    no_verdict_count: int = 0
    config: dict = field(default_factory=dict)
    fixture_digest: str = ""
    partial: bool = False

    @property
    def accuracy(self) -> float | None:
        return self.counts.accuracy()

    @property
    def precision(self) -> float | None:
        return self.counts.precision()

    @property
    def recall(self) -> float | None:
        return self.counts.recall()

    def to_payload(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "key_object_recognition_accuracy": self.key_object_recognition_accuracy,
            "segmentation_miou": self.segmentation_miou,
            "not_found_rate": self.not_found_rate,
            "no_verdict_count": self.no_verdict_count,
            "config": self.config,
            "fixture_digest": self.fixture_digest,
            "partial": self.partial,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_payload()).decode("utf-8")

    @classmethod
    def from_payload(cls, payload: dict) -> "MetricsReport":
        counts = ConfusionCounts(**payload["counts"])
        report = cls(
            task=payload["task"],
            method=payload["method"],
            counts=counts,
            key_object_recognition_accuracy=payload.get("key_object_recognition_accuracy"),
            segmentation_miou=payload.get("segmentation_miou"),
            not_found_rate=payload.get("not_found_rate"),
            no_verdict_count=payload.get("no_verdict_count", 0),
            config=payload.get("config", {}),
            fixture_digest=payload.get("fixture_digest", ""),
            partial=payload.get("partial", False),
        )
        # the stored derived values must agree with the counts
        for name in ("accuracy", "precision", "recall"):
            if payload.get(name) != getattr(report, name):
                raise ValueError(f"report field {name} disagrees with its counts")
        return report

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_payload(parse_json(text))
