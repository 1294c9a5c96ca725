"""Dataset manifests and sample loading.

Each dataset directory holds a ``manifest.json``:

    {
      "kind": "obstruction",
      "alpha": 0.25,                       // optional: alpha used for labels
      "samples": [
        {"id": "0001", "raw": "raw/0001.png", "aug": "aug/0001.png",
         "key_object": "stop sign", "gt_mask": "masks/0001.png",
         "obstructed": true}
      ]
    }

Manipulation manifests replace key_object/gt_mask/obstructed with the four
boolean labels alignment, style, misrepresentation, manipulated; the overall
label must equal the conjunction of the three factors, which is checked at
load time. Loading validates every referenced file and preserves manifest
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import LabelConsistencyViolation, ManifestInvalid
from ..imaging import Image, Mask

KIND_OBSTRUCTION = "obstruction"
KIND_MANIPULATION = "manipulation"


@dataclass(frozen=True)
class ObstructionSample:
    id: str
    raw_path: Path
    aug_path: Path
    key_object: str
    gt_mask_path: Path
    obstructed: bool

    def load_raw(self) -> Image:
        return Image.load(self.raw_path)

    def load_aug(self) -> Image:
        return Image.load(self.aug_path)

    def load_gt_mask(self) -> Mask:
        return Mask.load(self.gt_mask_path)


@dataclass(frozen=True)
class ManipulationLabels:
    alignment: bool
    style: bool
    misrepresentation: bool
    manipulated: bool


@dataclass(frozen=True)
class ManipulationSample:
    id: str
    raw_path: Path
    aug_path: Path
    labels: ManipulationLabels

    def load_raw(self) -> Image:
        return Image.load(self.raw_path)

    def load_aug(self) -> Image:
        return Image.load(self.aug_path)


def _as_bool(value, field: str, sample_id: str, problems: list[str]):
    if isinstance(value, bool):
        return value
    problems.append(f"sample {sample_id}: field {field!r} must be a boolean")
    return False


def _load_image_checked(path: Path, sample_id: str, problems: list[str]) -> Image | None:
    if not path.is_file():
        problems.append(f"sample {sample_id}: missing file {path}")
        return None
    try:
        return Image.load(path)
    except Exception as exc:
        problems.append(f"sample {sample_id}: cannot load {path}: {exc}")
        return None


def load_dataset(directory: str | Path, kind: str):
    """Load and validate a dataset; returns samples in manifest order."""
    if kind not in (KIND_OBSTRUCTION, KIND_MANIPULATION):
        raise ValueError(f"unknown dataset kind {kind!r}")
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestInvalid([f"no manifest.json in {directory}"])
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestInvalid([f"manifest.json is not valid JSON: {exc}"]) from exc

    if manifest.get("kind") != kind:
        raise ManifestInvalid(
            [f"manifest kind is {manifest.get('kind')!r}, expected {kind!r}"]
        )
    entries = manifest.get("samples")
    if not isinstance(entries, list) or not entries:
        raise ManifestInvalid(["manifest has no samples"])

    problems: list[str] = []
    label_violations: list[str] = []
    samples = []
    seen_ids: set[str] = set()
    for index, entry in enumerate(entries):
        sample_id = str(entry.get("id", index))
        if sample_id in seen_ids:
            problems.append(f"duplicate sample id {sample_id!r}")
        seen_ids.add(sample_id)

        raw_path = directory / entry.get("raw", "")
        aug_path = directory / entry.get("aug", "")
        raw = _load_image_checked(raw_path, sample_id, problems)
        aug = _load_image_checked(aug_path, sample_id, problems)
        if raw is not None and aug is not None and (
            raw.width != aug.width or raw.height != aug.height
        ):
            problems.append(f"sample {sample_id}: raw and augmented sizes differ")

        if kind == KIND_OBSTRUCTION:
            key_object = entry.get("key_object")
            if not key_object or not isinstance(key_object, str):
                problems.append(f"sample {sample_id}: key_object must be a non-empty string")
                key_object = ""
            mask_path = directory / entry.get("gt_mask", "")
            if not mask_path.is_file():
                problems.append(f"sample {sample_id}: missing mask file {mask_path}")
            else:
                try:
                    gt = Mask.load(mask_path)
                except Exception as exc:
                    problems.append(f"sample {sample_id}: cannot load {mask_path}: {exc}")
                else:
                    if raw is not None and (gt.width != raw.width or gt.height != raw.height):
                        problems.append(
                            f"sample {sample_id}: mask size {gt.width}x{gt.height} "
                            f"does not match image"
                        )
                    elif gt.area == 0:
                        problems.append(f"sample {sample_id}: ground-truth mask is empty")
            samples.append(
                ObstructionSample(
                    id=sample_id,
                    raw_path=raw_path,
                    aug_path=aug_path,
                    key_object=key_object,
                    gt_mask_path=mask_path,
                    obstructed=_as_bool(entry.get("obstructed"), "obstructed", sample_id, problems),
                )
            )
        else:
            labels = ManipulationLabels(
                alignment=_as_bool(entry.get("alignment"), "alignment", sample_id, problems),
                style=_as_bool(entry.get("style"), "style", sample_id, problems),
                misrepresentation=_as_bool(
                    entry.get("misrepresentation"), "misrepresentation", sample_id, problems
                ),
                manipulated=_as_bool(entry.get("manipulated"), "manipulated", sample_id, problems),
            )
            expected = labels.alignment and labels.style and labels.misrepresentation
            if labels.manipulated != expected:
                label_violations.append(
                    f"sample {sample_id}: manipulated={int(labels.manipulated)} but "
                    f"factors give {int(expected)}"
                )
            samples.append(
                ManipulationSample(
                    id=sample_id, raw_path=raw_path, aug_path=aug_path, labels=labels
                )
            )

    if label_violations:
        raise LabelConsistencyViolation(label_violations + problems)
    if problems:
        raise ManifestInvalid(problems)
    return samples


def dataset_alpha(directory: str | Path) -> float | None:
    """The alpha the dataset's labels were generated with, when recorded."""
    manifest_path = Path(directory) / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    value = manifest.get("alpha")
    return float(value) if isinstance(value, (int, float)) else None
