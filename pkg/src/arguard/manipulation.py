"""Information-manipulation detection from a dual-image VLM transcript.

The verdict is the conjunction of three boolean factors: alignment precision,
style similarity and information misrepresentation. When the transcript's
numbered answers parse, the conjunction is normative; the model's own final
yes/no (question 6) is never trusted over it. When the transcript is free-form
prose, the fallback is the deployed rule: whichever of "yes"/"no" appears
closest to the end of the text wins.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import MissingAnswer, NoVerdict
from .imaging import ImagePair
from .prompts import build_manipulation_prompt

if TYPE_CHECKING:
    from .gateway.backends import VlmBackend

logger = logging.getLogger(__name__)

_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)

# Line-initial answer markers: "3.", "3)", "3:", "Q3:", "Question 3:"
_MARKER = re.compile(
    r"(?im)^[ \t]*(?:question[ \t]*(?P<qn>[1-6])[.:)]|q(?P<qq>[1-6])[.:)]|(?P<n>[1-6])[.:)])"
)


@dataclass(frozen=True)
class ManipulationFactors:
    """The three boolean factors; unknowns are extraction errors, never stored."""

    alignment: bool
    style: bool
    misrepresentation: bool


@dataclass(frozen=True)
class ManipulationResult:
    manipulated: bool
    factors: ManipulationFactors | None
    transcript: str
    virtual_content: str
    key_object: str


def extract_binary_verdict(text: str) -> bool:
    """Decode a yes/no verdict: the occurrence closest to the end wins.

    Matches are whole words only, case-insensitive ("eyes" and "nose" never
    match). Raises NoVerdict when neither word occurs.
    """
    matches = _YES_NO.findall(text)
    if not matches:
        raise NoVerdict("transcript contains neither 'yes' nor 'no'")
    return matches[-1].lower() == "yes"


def _answer_segments(text: str) -> dict[int, str]:
    """Split a numbered transcript into per-question segments."""
    markers = []
    for m in _MARKER.finditer(text):
        number = int(m.group("qn") or m.group("qq") or m.group("n"))
        markers.append((m.start(), m.end(), number))
    segments: dict[int, str] = {}
    for i, (_, end, number) in enumerate(markers):
        stop = markers[i + 1][0] if i + 1 < len(markers) else len(text)
        if number not in segments:
            segments[number] = text[end:stop]
    return segments


def extract_factor_verdicts(text: str) -> ManipulationFactors:
    """Read the answers to questions 3, 4 and 5 from a numbered transcript."""
    segments = _answer_segments(text)
    verdicts = {}
    for question in (3, 4, 5):
        if question not in segments:
            raise MissingAnswer(question, "answer segment not found")
        try:
            verdicts[question] = extract_binary_verdict(segments[question])
        except NoVerdict:
            raise MissingAnswer(question, "segment has no yes/no answer") from None
    return ManipulationFactors(
        alignment=verdicts[3], style=verdicts[4], misrepresentation=verdicts[5]
    )


def combine_factors(factors: ManipulationFactors) -> bool:
    """All three factors must hold for a manipulation attack."""
    return factors.alignment and factors.style and factors.misrepresentation


def _phrase_answer(segments: dict[int, str], question: int) -> str:
    segment = segments.get(question, "").strip()
    if not segment:
        return ""
    first_line = segment.splitlines()[0]
    return first_line.strip(" \t.,:;!?\"'`")


def detect_manipulation(pair: ImagePair, vlm: "VlmBackend") -> ManipulationResult:
    """Run the dual-image check and decode the transcript.

    Images are sent raw-first, augmented-second, matching the prompt. When the
    numbered answers parse, the verdict is the factor conjunction and any
    disagreement with the transcript's own question-6 answer is logged; when
    they do not, the last-yes/no fallback decides (NoVerdict if even that
    fails).
    """
    transcript = vlm.complete([pair.raw, pair.aug], build_manipulation_prompt())
    segments = _answer_segments(transcript)
    virtual_content = _phrase_answer(segments, 1)
    key_object = _phrase_answer(segments, 2)

    try:
        factors = extract_factor_verdicts(transcript)
    except MissingAnswer:
        factors = None

    if factors is not None:
        manipulated = combine_factors(factors)
        if 6 in segments:
            try:
                self_report = extract_binary_verdict(segments[6])
            except NoVerdict:
                self_report = None
            if self_report is not None and self_report != manipulated:
                logger.warning(
                    "transcript's final answer (%s) disagrees with factor "
                    "conjunction (%s); conjunction wins",
                    self_report,
                    manipulated,
                )
    else:
        manipulated = extract_binary_verdict(transcript)

    return ManipulationResult(
        manipulated=manipulated,
        factors=factors,
        transcript=transcript,
        virtual_content=virtual_content,
        key_object=key_object,
    )
