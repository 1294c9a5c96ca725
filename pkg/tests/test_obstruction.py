from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arguard.errors import BackendUnavailable, EmptyResponse
from arguard.gateway.protocol import Detection
from arguard.imaging import DiffConfig, Image, ImagePair, Mask
from arguard.obstruction import (
    KeyObjectList,
    ObstructionConfig,
    detect_obstruction,
    locate_key_object,
    normalize_phrase,
    parse_keyobject_response,
    refresh_keyobjects,
)
from arguard.prompts import GREEDY_VARIANT, STANDARD_VARIANT, UNDERDETAILED_VARIANT

from conftest import (
    FakeDetector,
    FakeSegmenter,
    FakeVlm,
    fake_backends,
    rect_mask,
    solid_image,
)


# -- phrase normalization and parsing ----------------------------------------

def test_normalize_phrase():
    assert normalize_phrase("  Stop Sign. ") == "stop sign"
    assert normalize_phrase("The  red   fire extinguisher") == "red fire extinguisher"
    assert normalize_phrase("a very long object name with extras") == "very long object name"
    assert normalize_phrase("!!!") == ""


def test_parse_single_phrase():
    assert parse_keyobject_response("Stop sign.", STANDARD_VARIANT) == ["stop sign"]
    assert parse_keyobject_response('"Exit sign"', UNDERDETAILED_VARIANT) == ["exit sign"]


def test_parse_greedy_list():
    text = "1. exit sign\n2. fire extinguisher"
    assert parse_keyobject_response(text, GREEDY_VARIANT) == ["exit sign", "fire extinguisher"]
    text = "stop sign, caution sign; ladder"
    assert parse_keyobject_response(text, GREEDY_VARIANT) == [
        "stop sign",
        "caution sign",
        "ladder",
    ]


def test_parse_greedy_drops_empties_and_duplicates():
    text = "- stop sign\n\n- Stop Sign\n-  \n"
    assert parse_keyobject_response(text, GREEDY_VARIANT) == ["stop sign"]


def test_parse_empty_raises():
    with pytest.raises(EmptyResponse):
        parse_keyobject_response("", STANDARD_VARIANT)
    with pytest.raises(EmptyResponse):
        parse_keyobject_response("...\n,,", GREEDY_VARIANT)


@given(st.text(min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_parse_is_idempotent_under_renormalization(text):
    try:
        phrases = parse_keyobject_response(text, STANDARD_VARIANT)
    except EmptyResponse:
        return
    again = parse_keyobject_response(phrases[0], STANDARD_VARIANT)
    assert again == phrases


# -- key-object list ----------------------------------------------------------

def test_keyobject_list_dedups_and_keeps_order():
    klist = KeyObjectList(("Stop Sign", "stop  sign", "exit sign"))
    assert klist.entries == ("stop sign", "exit sign")


def test_keyobject_list_caps_phrase_length():
    klist = KeyObjectList(("one two three four five",))
    assert klist.entries == ("one two three four",)


def test_refresh_merges_and_timestamps():
    vlm = FakeVlm("stop sign")
    updated = refresh_keyobjects(KeyObjectList(), solid_image(8, 8), STANDARD_VARIANT, vlm)
    assert updated.entries == ("stop sign",)
    assert updated.last_refreshed is not None
    assert vlm.calls[0][0] == 1  # single image


def test_refresh_dedups_against_existing():
    current = KeyObjectList(("stop sign",), last_refreshed=1.0)
    updated = refresh_keyobjects(current, solid_image(8, 8), STANDARD_VARIANT, FakeVlm("Stop Sign"))
    assert updated.entries == ("stop sign",)
    assert updated.last_refreshed != 1.0


def test_refresh_backend_failure_leaves_caller_list_usable():
    current = KeyObjectList(("stop sign",))
    with pytest.raises(BackendUnavailable):
        refresh_keyobjects(
            current, solid_image(8, 8), STANDARD_VARIANT, FakeVlm(error=BackendUnavailable("down"))
        )
    assert current.entries == ("stop sign",)


# -- locating key objects ------------------------------------------------------

def _cfg(**kwargs) -> ObstructionConfig:
    kwargs.setdefault("diff", DiffConfig(tolerance=0, min_component_area=0))
    return ObstructionConfig(**kwargs)


def test_locate_picks_highest_confidence_over_threshold():
    image = solid_image(32, 32)
    mask = rect_mask(32, 32, 4, 4, 8, 8)
    detector = FakeDetector(
        [
            Detection(box=(1.0, 1.0, 9.0, 9.0), score=0.4, phrase="stop sign"),
            Detection(box=(4.0, 4.0, 12.0, 12.0), score=0.9, phrase="stop sign"),
        ]
    )
    segmenter = FakeSegmenter([mask])
    located = locate_key_object(image, "stop sign", detector, segmenter, _cfg(box_confidence_min=0.5))
    assert located is not None
    assert located.box == (4.0, 4.0, 12.0, 12.0)
    assert located.mask == mask
    assert segmenter.calls == [[(4.0, 4.0, 12.0, 12.0)]]


def test_locate_below_threshold_is_not_found():
    detector = FakeDetector([Detection(box=(0.0, 0.0, 4.0, 4.0), score=0.2, phrase="x")])
    located = locate_key_object(
        solid_image(16, 16), "x", detector, FakeSegmenter(), _cfg(box_confidence_min=0.35)
    )
    assert located is None


def test_locate_tie_keeps_backend_order():
    first = Detection(box=(0.0, 0.0, 4.0, 4.0), score=0.7, phrase="x")
    second = Detection(box=(8.0, 8.0, 12.0, 12.0), score=0.7, phrase="x")
    located = locate_key_object(
        solid_image(16, 16),
        "x",
        FakeDetector([first, second]),
        FakeSegmenter([rect_mask(16, 16, 0, 0, 4, 4)]),
        _cfg(box_confidence_min=0.5),
    )
    assert located.box == first.box


# -- frame verdicts ------------------------------------------------------------

def _frame_with_content(key_mask: Mask, overlap_px: int) -> tuple[ImagePair, Mask]:
    """Raw frame plus an augmented frame whose content covers overlap_px of the key."""
    size = key_mask.width
    raw = solid_image(size, size, (100, 100, 100))
    array = np.array(raw.array, copy=True)
    covered = 0
    for y in range(size):
        for x in range(size):
            if key_mask.bits[y, x] and covered < overlap_px:
                array[y, x] = (250, 250, 10)
                covered += 1
    aug = Image(array)
    return ImagePair(raw, aug), key_mask


def _gt_backends(key_mask: Mask):
    box = tuple(float(v) for v in key_mask.bounding_box())
    return fake_backends(
        detector=FakeDetector([Detection(box=box, score=0.99, phrase="stop sign")]),
        segmenter=FakeSegmenter([key_mask]),
    )


def test_threshold_boundary_is_inclusive():
    key = rect_mask(32, 32, 4, 4, 10, 10)  # area 100
    pair, _ = _frame_with_content(key, 25)
    result = detect_obstruction(pair, KeyObjectList(("stop sign",)), _gt_backends(key), _cfg(alpha=0.25))
    assert result.per_object[0].ratio == 0.25
    assert result.obstructed is True


def test_below_threshold_is_not_obstructed():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 24)
    result = detect_obstruction(pair, KeyObjectList(("stop sign",)), _gt_backends(key), _cfg(alpha=0.25))
    assert result.per_object[0].ratio == 0.24
    assert result.obstructed is False


def test_empty_key_object_list_is_vacuously_unobstructed():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 50)
    result = detect_obstruction(pair, KeyObjectList(), _gt_backends(key), _cfg())
    assert result.obstructed is False
    assert result.per_object == ()


def test_not_found_objects_do_not_count():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 100)
    backends = fake_backends(detector=FakeDetector([]), segmenter=FakeSegmenter())
    result = detect_obstruction(pair, KeyObjectList(("stop sign",)), backends, _cfg())
    assert result.obstructed is False
    assert result.per_object[0].found is False


def test_verdict_is_or_of_found_readings():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 40)
    result = detect_obstruction(
        pair, KeyObjectList(("stop sign", "exit sign")), _gt_backends(key), _cfg(alpha=0.25)
    )
    expected = any(r.found and r.ratio >= result.alpha for r in result.per_object)
    assert result.obstructed == expected


def test_adding_entries_never_flips_true_to_false():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 60)
    backends = _gt_backends(key)
    base = detect_obstruction(pair, KeyObjectList(("stop sign",)), backends, _cfg())
    assert base.obstructed
    grown = detect_obstruction(
        pair, KeyObjectList(("stop sign", "phantom object")), backends, _cfg()
    )
    assert grown.obstructed


def test_scripted_ground_truth_reproduces_labels_exactly(rng):
    # labels generated with the same alpha must be reproduced with 0 tolerance
    alpha = 0.25
    for _ in range(20):
        width = int(rng.integers(8, 15))
        key = rect_mask(32, 32, 4, 4, width, width)
        overlap = int(rng.integers(0, key.area + 1))
        pair, _ = _frame_with_content(key, overlap)
        label = overlap >= alpha * key.area
        result = detect_obstruction(
            pair, KeyObjectList(("stop sign",)), _gt_backends(key), _cfg(alpha=alpha)
        )
        assert result.obstructed == label


def test_backend_outage_aborts_frame():
    key = rect_mask(32, 32, 4, 4, 10, 10)
    pair, _ = _frame_with_content(key, 50)

    class DownDetector:
        def detect(self, image, phrases):
            raise BackendUnavailable("down")

    backends = fake_backends(detector=DownDetector())
    with pytest.raises(BackendUnavailable):
        detect_obstruction(pair, KeyObjectList(("stop sign",)), backends, _cfg())


def test_config_validation():
    with pytest.raises(ValueError):
        ObstructionConfig(alpha=0.0)
    with pytest.raises(ValueError):
        ObstructionConfig(alpha=1.0001)
    with pytest.raises(ValueError):
        ObstructionConfig(box_confidence_min=-0.1)
    assert ObstructionConfig(alpha=1.0).alpha == 1.0
