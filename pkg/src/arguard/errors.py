"""Shared exception types.

Every error carries a short machine-readable ``kind`` slug that the HTTP
layer maps onto ``{error, kind}`` response bodies.
"""

from __future__ import annotations


class ArguardError(Exception):
    """Base class for all errors raised by this package."""

    kind = "error"


class DimensionMismatch(ArguardError):
    kind = "dimension_mismatch"


class EmptyKeyMask(ArguardError):
    kind = "empty_key_mask"


class BothEmpty(ArguardError):
    kind = "both_empty"


class EmptyContentMask(ArguardError):
    kind = "empty_content_mask"


class ImageTooSmall(ArguardError):
    kind = "image_too_small"


class OutOfBounds(ArguardError):
    kind = "out_of_bounds"


class EmptyResponse(ArguardError):
    kind = "empty_response"


class BackendUnavailable(ArguardError):
    kind = "backend_unavailable"


class MalformedResponse(ArguardError):
    kind = "malformed_response"


class Unauthorized(ArguardError):
    kind = "unauthorized"


class CountMismatch(ArguardError):
    kind = "count_mismatch"


class NoVerdict(ArguardError):
    kind = "no_verdict"


class MissingAnswer(ArguardError):
    """A numbered answer segment could not be located or decoded."""

    kind = "missing_answer"

    def __init__(self, question: int, detail: str = ""):
        self.question = question
        msg = f"question {question} has no decodable answer"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class UnknownSession(ArguardError):
    kind = "unknown_session"


class Busy(ArguardError):
    kind = "busy"


class Throttled(ArguardError):
    kind = "throttled"


class NoData(ArguardError):
    kind = "no_data"


class ManifestInvalid(ArguardError):
    """Dataset manifest failed validation.

    ``diagnostics`` holds one human-readable message per offending sample.
    """

    kind = "manifest_invalid"

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics) or "invalid manifest")


class LabelConsistencyViolation(ManifestInvalid):
    """A manipulation sample's overall label disagrees with A AND S AND I."""

    kind = "label_consistency_violation"


class FixtureMiss(ArguardError):
    kind = "fixture_miss"
