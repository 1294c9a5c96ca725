from __future__ import annotations

import json

import numpy as np
import pytest

from arguard.errors import (
    BackendUnavailable,
    FixtureMiss,
    LabelConsistencyViolation,
    ManifestInvalid,
    OutOfBounds,
)
from arguard.gateway.scripted import FixtureStore, ScriptedBackend
from arguard.harness.dataset import (
    KIND_MANIPULATION,
    KIND_OBSTRUCTION,
    dataset_alpha,
    load_dataset,
)
from arguard.harness.evaluate import (
    EvalSpec,
    GroundTruthBackend,
    capture_fixtures,
    evaluate_manipulation,
    evaluate_obstruction,
    replay_fixtures,
)
from arguard.harness.metrics import ConfusionCounts, MetricsReport, recognition_match
from arguard.harness.report import parse_report, render_report
from arguard.harness.synth import (
    composite_scene,
    generate_obstruction_dataset,
    make_sprite,
)
from arguard.imaging import DiffConfig, Image, Mask, extract_virtual_mask, mask_intersection_area
from arguard.obstruction import ObstructionConfig

from conftest import FakeVlm, fake_backends, solid_image

ZERO_TOL = ObstructionConfig(alpha=0.25, diff=DiffConfig(tolerance=0, min_component_area=0))


# -- composite_scene ----------------------------------------------------------

def test_composite_square_exact():
    raw = solid_image(64, 64)
    aug, mask = composite_scene(raw, make_sprite(10, 10, (250, 10, 10)), (5, 5))
    assert mask.area == 100
    assert mask.bounding_box() == (5, 5, 15, 15)
    assert extract_virtual_mask(raw, aug, DiffConfig(0, 0)) == mask


def test_composite_transparent_is_noop():
    raw = solid_image(32, 32)
    sprite = np.zeros((8, 8, 4), dtype=np.uint8)  # fully transparent
    aug, mask = composite_scene(raw, sprite, (4, 4))
    assert mask.area == 0
    assert np.array_equal(aug.array, raw.array)


def test_composite_out_of_bounds():
    with pytest.raises(OutOfBounds):
        composite_scene(solid_image(16, 16), make_sprite(8, 8, (1, 2, 3)), (12, 0))
    with pytest.raises(OutOfBounds):
        composite_scene(solid_image(16, 16), make_sprite(8, 8, (1, 2, 3)), (-1, 0))


# -- dataset generation and loading ------------------------------------------

def test_generated_dataset_loads_and_labels_match_the_rule(tmp_path):
    generate_obstruction_dataset(tmp_path, 12, seed=5, alpha=0.25)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    assert len(samples) == 12
    assert dataset_alpha(tmp_path) == 0.25
    for sample in samples:
        key = sample.load_gt_mask()
        content = extract_virtual_mask(sample.load_raw(), sample.load_aug(), DiffConfig(0, 0))
        expected = mask_intersection_area(key, content) >= 0.25 * key.area
        assert sample.obstructed == expected


def test_generator_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_obstruction_dataset(a, 5, seed=11)
    generate_obstruction_dataset(b, 5, seed=11)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for name in ("raw/0000.png", "aug/0003.png", "masks/0004.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_load_dataset_reports_missing_files(tmp_path):
    generate_obstruction_dataset(tmp_path, 3, seed=2)
    (tmp_path / "masks" / "0001.png").unlink()
    with pytest.raises(ManifestInvalid) as excinfo:
        load_dataset(tmp_path, KIND_OBSTRUCTION)
    assert any("0001" in d for d in excinfo.value.diagnostics)


def _write_manipulation_dataset(tmp_path, rows):
    image = solid_image(16, 16)
    image.save(tmp_path / "frame.png")
    samples = []
    for i, (a, s, m_i, m) in enumerate(rows):
        samples.append(
            {
                "id": f"{i:02d}",
                "raw": "frame.png",
                "aug": "frame.png",
                "alignment": a,
                "style": s,
                "misrepresentation": m_i,
                "manipulated": m,
            }
        )
    (tmp_path / "manifest.json").write_text(
        json.dumps({"kind": "manipulation", "samples": samples})
    )


def test_manipulation_label_consistency_enforced(tmp_path):
    _write_manipulation_dataset(tmp_path, [(True, True, False, True)])
    with pytest.raises(LabelConsistencyViolation):
        load_dataset(tmp_path, KIND_MANIPULATION)


def test_manipulation_dataset_loads(tmp_path):
    _write_manipulation_dataset(
        tmp_path, [(True, True, True, True), (False, True, True, False)]
    )
    samples = load_dataset(tmp_path, KIND_MANIPULATION)
    assert [s.labels.manipulated for s in samples] == [True, False]


def test_kind_mismatch_rejected(tmp_path):
    generate_obstruction_dataset(tmp_path, 2, seed=1)
    with pytest.raises(ManifestInvalid):
        load_dataset(tmp_path, KIND_MANIPULATION)


# -- metrics -------------------------------------------------------------------

def test_confusion_identities():
    counts = ConfusionCounts(tp=3, fp=1, tn=5, fn=2)
    assert counts.accuracy() == 8 / 11
    assert counts.precision() == 3 / 4
    assert counts.recall() == 3 / 5
    empty = ConfusionCounts()
    assert empty.accuracy() is None and empty.precision() is None and empty.recall() is None


def test_recognition_match_rule():
    assert recognition_match("stop sign", "red stop sign")
    assert recognition_match("red stop sign", "stop sign")
    assert recognition_match("Stop Sign", "stop  sign.")
    assert not recognition_match("stop sign", "fire extinguisher")
    assert recognition_match("stop sign", "halt sign", synonyms={"halt sign": "stop sign"})
    assert not recognition_match("", "stop sign")


def test_report_json_round_trip():
    report = MetricsReport(
        task="obstruction",
        method="prior",
        counts=ConfusionCounts(tp=2, fp=0, tn=3, fn=0),
        key_object_recognition_accuracy=1.0,
        segmentation_miou=0.75,
        not_found_rate=0.0,
        config={"alpha": 0.25},
        fixture_digest="abc",
    )
    assert parse_report(render_report(report, "json")) == report


def test_report_rejects_inconsistent_derived_fields():
    report = MetricsReport(task="obstruction", method="prior", counts=ConfusionCounts(1, 1, 1, 1))
    payload = report.to_payload()
    payload["accuracy"] = 0.99
    with pytest.raises(ValueError):
        MetricsReport.from_payload(payload)


def test_render_table_layout():
    report = MetricsReport(
        task="obstruction",
        method="prior",
        counts=ConfusionCounts(tp=2, fp=0, tn=2, fn=0),
        key_object_recognition_accuracy=1.0,
        segmentation_miou=0.5,
    )
    table = render_report(report, "table")
    assert "method" in table and "mIoU" in table and "detection accuracy" in table
    assert "100.00%" in table

    manip = MetricsReport(task="manipulation", method="factors", counts=ConfusionCounts(1, 1, 1, 0))
    table = render_report(manip, "table")
    assert "precision" in table and "recall" in table


# -- obstruction evaluation -------------------------------------------------------

def test_prior_with_ground_truth_is_perfect(tmp_path):
    generate_obstruction_dataset(tmp_path, 15, seed=9)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    report = evaluate_obstruction(
        samples, ZERO_TOL, GroundTruthBackend(samples).as_backends(), "prior"
    )
    assert report.accuracy == 1.0
    assert report.key_object_recognition_accuracy == 1.0
    assert report.segmentation_miou == 1.0
    assert report.not_found_rate == 0.0
    assert not report.partial


def test_standard_method_uses_vlm_recognition(tmp_path):
    generate_obstruction_dataset(tmp_path, 8, seed=3)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    report = evaluate_obstruction(
        samples, ZERO_TOL, GroundTruthBackend(samples).as_backends(), "standard"
    )
    # oracle vlm answers with the labeled phrase: recognition perfect
    assert report.key_object_recognition_accuracy == 1.0
    assert report.accuracy == 1.0


def test_threshold_sweep_monotonicity(tmp_path):
    generate_obstruction_dataset(tmp_path, 25, seed=13)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    backends = GroundTruthBackend(samples).as_backends()
    positives = []
    for alpha in (0.1, 0.25, 0.5, 1.0):
        config = ObstructionConfig(alpha=alpha, diff=DiffConfig(0, 0))
        report = evaluate_obstruction(samples, config, backends, "prior")
        positives.append(report.counts.tp + report.counts.fp)
    assert positives == sorted(positives, reverse=True)


def test_saliency_and_canny_methods_run_without_backends(tmp_path):
    generate_obstruction_dataset(tmp_path, 6, seed=21)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    for method in ("saliency", "canny"):
        report = evaluate_obstruction(samples, ZERO_TOL, None, method)
        assert report.counts.total == 6
        assert report.key_object_recognition_accuracy is None
        assert report.segmentation_miou is None


def test_endtoend_method_scripted(tmp_path):
    generate_obstruction_dataset(tmp_path, 4, seed=17, single_class=True)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    from arguard.prompts import STANDARD_KEYOBJECT_PROMPT, build_prompt, end_to_end_step2

    backend = ScriptedBackend(FixtureStore())
    step2 = build_prompt(end_to_end_step2(samples[0].key_object))
    for sample in samples:
        raw, aug = sample.load_raw(), sample.load_aug()
        backend.script_vlm([raw], STANDARD_KEYOBJECT_PROMPT, sample.key_object)
        backend.script_vlm([raw, aug], step2, "Yes" if sample.obstructed else "No")
    report = evaluate_obstruction(samples, ZERO_TOL, backend.as_backends(), "endtoend")
    assert report.accuracy == 1.0
    assert report.segmentation_miou is None


def test_underdetailed_method_uses_its_own_prompt(tmp_path):
    generate_obstruction_dataset(tmp_path, 3, seed=19, single_class=True)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)
    from arguard.prompts import UNDERDETAILED_KEYOBJECT_PROMPT

    backend = ScriptedBackend(FixtureStore())
    oracle = GroundTruthBackend(samples)
    for sample in samples:
        backend.script_vlm([sample.load_raw()], UNDERDETAILED_KEYOBJECT_PROMPT, sample.key_object)
    backends = fake_backends(
        vlm=ScriptedBackend(backend.store), detector=oracle, segmenter=oracle
    )
    report = evaluate_obstruction(samples, ZERO_TOL, backends, "underdetailed")
    assert report.accuracy == 1.0
    assert report.key_object_recognition_accuracy == 1.0


def test_greedy_method_false_positive_on_extra_objects(tmp_path):
    # greedy returns non-critical objects too; when one of those is covered
    # while the key object is not, the frame is (wrongly) called obstructed
    generate_obstruction_dataset(tmp_path, 1, seed=29)
    sample = load_dataset(tmp_path, KIND_OBSTRUCTION)[0]
    clear = [s for s in [sample] if not s.obstructed]
    if not clear:  # reroll deterministically until the sample is a negative
        for seed in range(30, 60):
            generate_obstruction_dataset(tmp_path / str(seed), 1, seed=seed)
            sample = load_dataset(tmp_path / str(seed), KIND_OBSTRUCTION)[0]
            if not sample.obstructed:
                break
    assert not sample.obstructed

    from arguard.gateway.protocol import Detection
    from arguard.prompts import GREEDY_KEYOBJECT_PROMPT

    raw = sample.load_raw()
    content = extract_virtual_mask(raw, sample.load_aug(), DiffConfig(0, 0))
    assert content.area > 0
    backend = ScriptedBackend(FixtureStore())
    backend.script_vlm([raw], GREEDY_KEYOBJECT_PROMPT, f"{sample.key_object}\nshiny panel")
    gt_box = tuple(float(v) for v in sample.load_gt_mask().bounding_box())
    backend.script_detect(
        raw, [sample.key_object], [Detection(box=gt_box, score=0.9, phrase=sample.key_object)]
    )
    backend.script_segment(raw, [gt_box], [sample.load_gt_mask()])
    # the spurious "shiny panel" resolves to the virtual content itself
    content_box = tuple(float(v) for v in content.bounding_box())
    backend.script_detect(
        raw, ["shiny panel"], [Detection(box=content_box, score=0.8, phrase="shiny panel")]
    )
    backend.script_segment(raw, [content_box], [content])

    report = evaluate_obstruction(
        [sample], ObstructionConfig(alpha=0.25, diff=DiffConfig(0, 0)), backend.as_backends(), "greedy"
    )
    assert report.counts.fp == 1  # label says clear, greedy says obstructed
    assert report.key_object_recognition_accuracy == 1.0


def test_backend_outage_yields_partial_report(tmp_path):
    generate_obstruction_dataset(tmp_path, 5, seed=23)
    samples = load_dataset(tmp_path, KIND_OBSTRUCTION)

    class FlakyVlm:
        def __init__(self):
            self.calls = 0

        def complete(self, images, prompt):
            self.calls += 1
            if self.calls >= 3:
                raise BackendUnavailable("down")
            return samples[self.calls - 1].key_object

    backends = fake_backends(vlm=FlakyVlm(), detector=GroundTruthBackend(samples),
                             segmenter=GroundTruthBackend(samples))
    report = evaluate_obstruction(samples, ZERO_TOL, backends, "standard")
    assert report.partial is True
    assert report.counts.total < 5


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        evaluate_obstruction([], ZERO_TOL, None, "saliency")
    with pytest.raises(ValueError):
        evaluate_manipulation([], fake_backends())


# -- manipulation evaluation ---------------------------------------------------------

def _manip_samples(tmp_path, labels):
    _write_manipulation_dataset(tmp_path, labels)
    return load_dataset(tmp_path, KIND_MANIPULATION)


def test_manipulation_eval_perfect_with_matching_transcripts(tmp_path):
    labels = [
        (True, True, True, True),
        (False, True, True, False),
        (True, False, True, False),
        (True, True, False, False),
    ]
    samples = _manip_samples(tmp_path, labels)

    def transcript(images, prompt):
        # every sample shares pixels; answer per call order
        transcript.n += 1
        a, s, i, _ = labels[transcript.n - 1]
        return (
            f"3. {'Yes' if a else 'No'}.\n4. {'Yes' if s else 'No'}.\n"
            f"5. {'Yes' if i else 'No'}.\n6. whatever"
        )

    transcript.n = 0
    report = evaluate_manipulation(samples, fake_backends(vlm=FakeVlm(transcript)))
    assert report.accuracy == 1.0


def test_manipulation_eval_always_yes_stub(tmp_path):
    labels = [(True, True, True, True)] * 3 + [(False, True, True, False)] * 5
    samples = _manip_samples(tmp_path, labels)
    report = evaluate_manipulation(samples, fake_backends(vlm=FakeVlm("6. Yes")))
    assert report.recall == 1.0
    assert report.precision == 3 / 8
    assert report.accuracy == 3 / 8


def test_manipulation_no_verdict_policies(tmp_path):
    samples = _manip_samples(tmp_path, [(True, True, True, True), (False, False, False, False)])
    undecodable = FakeVlm("nothing to see")
    incorrect = evaluate_manipulation(samples, fake_backends(vlm=undecodable))
    assert incorrect.no_verdict_count == 2
    assert incorrect.accuracy == 0.0
    skipped = evaluate_manipulation(
        samples, fake_backends(vlm=undecodable), no_verdict_policy="skip"
    )
    assert skipped.counts.total == 0
    assert skipped.no_verdict_count == 2


# -- capture / replay ------------------------------------------------------------------

def test_capture_then_replay_is_byte_identical(tmp_path):
    generate_obstruction_dataset(tmp_path / "data", 10, seed=31)
    samples = load_dataset(tmp_path / "data", KIND_OBSTRUCTION)
    live = GroundTruthBackend(samples).as_backends()
    store = FixtureStore(tmp_path / "fixtures")
    spec = EvalSpec(task="obstruction", method="prior", config=ZERO_TOL)

    captured = capture_fixtures(spec, samples, live, store)
    replayed = replay_fixtures(spec, samples, FixtureStore(tmp_path / "fixtures"))
    assert captured == replayed
    assert render_report(captured, "json") == render_report(replayed, "json")
    assert captured.fixture_digest == FixtureStore(tmp_path / "fixtures").digest()


def test_replay_with_deleted_fixture_misses(tmp_path):
    generate_obstruction_dataset(tmp_path / "data", 3, seed=37)
    samples = load_dataset(tmp_path / "data", KIND_OBSTRUCTION)
    store = FixtureStore(tmp_path / "fixtures")
    spec = EvalSpec(task="obstruction", method="prior", config=ZERO_TOL)
    capture_fixtures(spec, samples, GroundTruthBackend(samples).as_backends(), store)

    victim = store.fingerprints()[0]
    store.delete(victim)
    with pytest.raises(FixtureMiss) as excinfo:
        replay_fixtures(spec, samples, store)
    assert victim in str(excinfo.value)
