"""Session state, mitigation directives and latency accounting.

All timestamps in latency records come from ``time.perf_counter`` (monotonic).
Frame handling within one session is serialized so verdict responses preserve
arrival order; sessions are fully independent of each other. The VLM is only
ever called from an explicit key-object refresh or a manipulation check, never
from frame handling.
"""

from __future__ import annotations

import json
import statistics
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import Busy, NoData, Throttled, UnknownSession
from ..gateway.backends import Backends
from ..imaging import Image, ImagePair
from ..manipulation import ManipulationResult, detect_manipulation
from ..obstruction import (
    KeyObjectList,
    ObstructionConfig,
    ObstructionResult,
    detect_obstruction,
    refresh_keyobjects,
)
from ..prompts import PromptVariant

ACTION_NONE = "none"
ACTION_REDUCE_OPACITY = "reduce_opacity"
ACTION_WARN = "warn"

MANIPULATION_WARNING = "Potential information manipulation detected"

TASK_OBSTRUCTION = "obstruction"
TASK_MANIPULATION = "manipulation"


@dataclass(frozen=True)
class MitigationDirective:
    """What the AR client should do with the verdict."""

    action: str
    target_opacity: float | None = None
    message: str | None = None

    def __post_init__(self):
        if self.action not in (ACTION_NONE, ACTION_REDUCE_OPACITY, ACTION_WARN):
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == ACTION_REDUCE_OPACITY:
            if self.target_opacity is None or not 0.0 < self.target_opacity < 1.0:
                raise ValueError("reduce_opacity requires target_opacity in (0, 1)")
        if self.action == ACTION_WARN and not self.message:
            raise ValueError("warn requires a non-empty message")

    @classmethod
    def none(cls) -> "MitigationDirective":
        return cls(ACTION_NONE)

    @classmethod
    def reduce_opacity(cls, target: float) -> "MitigationDirective":
        return cls(ACTION_REDUCE_OPACITY, target_opacity=target)

    @classmethod
    def warn(cls, message: str) -> "MitigationDirective":
        return cls(ACTION_WARN, message=message)

    def to_payload(self) -> dict:
        payload: dict = {"action": self.action}
        if self.target_opacity is not None:
            payload["target_opacity"] = self.target_opacity
        if self.message is not None:
            payload["message"] = self.message
        return payload


@dataclass(frozen=True)
class LatencyRecord:
    """Stage timestamps for one handled request, all monotonic seconds."""

    frame_id: int
    task: str
    t_received: float
    t_mask_ready: float
    t_located: float
    t_verdict: float
    t_responded: float
    backend_durations: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        stamps = (self.t_received, self.t_mask_ready, self.t_located, self.t_verdict, self.t_responded)
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("latency timestamps must be non-decreasing")

    @property
    def end_to_end(self) -> float:
        return self.t_responded - self.t_received

    @property
    def backend_total(self) -> float:
        return sum(d for _, d in self.backend_durations)

    def to_payload(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "task": self.task,
            "end_to_end_s": self.end_to_end,
            "stages_s": {
                "mask_ready": self.t_mask_ready - self.t_received,
                "located": self.t_located - self.t_mask_ready,
                "verdict": self.t_verdict - self.t_located,
                "responded": self.t_responded - self.t_verdict,
            },
            "backend_calls": [{"role": role, "duration_s": d} for role, d in self.backend_durations],
            "backend_total_s": self.backend_total,
        }


class _TimedRole:
    """Wraps one backend role, appending (role, seconds) per call."""

    def __init__(self, inner, role: str, sink: list):
        self._inner, self._role, self._sink = inner, role, sink

    def _timed(self, fn, *args):
        start = time.perf_counter()
        result = fn(*args)
        self._sink.append((self._role, time.perf_counter() - start))
        return result

    def complete(self, images, prompt):
        return self._timed(self._inner.complete, images, prompt)

    def detect(self, image, phrases):
        return self._timed(self._inner.detect, image, phrases)

    def segment(self, image, boxes):
        return self._timed(self._inner.segment, image, boxes)


def timed_backends(inner: Backends, sink: list) -> Backends:
    return Backends(
        vlm=_TimedRole(inner.vlm, "vlm", sink),
        detector=_TimedRole(inner.detector, "detector", sink),
        segmenter=_TimedRole(inner.segmenter, "segmenter", sink),
    )


@dataclass(frozen=True)
class ServiceSettings:
    """Service-wide knobs; per-session config is an ObstructionConfig."""

    default_config: ObstructionConfig = field(default_factory=ObstructionConfig)
    mitigation_opacity: float = 0.3
    min_refresh_interval_s: float = 2.0
    auto_refresh_interval_s: float | None = None  # disabled by default
    log_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.mitigation_opacity < 1.0:
            raise ValueError("mitigation_opacity must be in (0, 1)")
        if self.min_refresh_interval_s < 0:
            raise ValueError("min_refresh_interval_s must be >= 0")


class SessionState:
    """One AR client session: immutable config plus the mutable key-object list."""

    def __init__(self, session_id: str, config: ObstructionConfig, settings: ServiceSettings):
        self.id = session_id
        self.config = config
        self.created = time.time()
        self.key_objects = KeyObjectList()
        self.last_vlm_call: float | None = None
        self.opacity = settings.mitigation_opacity
        self.frame_records: list[LatencyRecord] = []
        self.manipulation_records: list[LatencyRecord] = []
        self.last_raw: Image | None = None
        self._frame_counter = 0
        self._frame_lock = threading.Lock()
        self._refresh_lock = threading.Lock()
        self._manipulation_lock = threading.Lock()
        self._log_path: Path | None = None
        if settings.log_dir:
            root = Path(settings.log_dir)
            root.mkdir(parents=True, exist_ok=True)
            self._log_path = root / f"session-{session_id}.jsonl"

    def log_event(self, event: dict) -> None:
        if self._log_path is None:
            return
        line = json.dumps({"t": time.time(), **event}, sort_keys=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "created": self.created,
            "key_objects": list(self.key_objects.entries),
            "last_refreshed": self.key_objects.last_refreshed,
            "config": {
                "alpha": self.config.alpha,
                "box_confidence_min": self.config.box_confidence_min,
                "diff_tolerance": self.config.diff.tolerance,
                "min_component_area": self.config.diff.min_component_area,
                "mitigation_opacity": self.opacity,
            },
        }


def _percentile95(values: Sequence[float]) -> float:
    ordered = sorted(values)
    index = max(0, -(-len(ordered) * 95 // 100) - 1)  # ceil(0.95 n) - 1
    return ordered[index]


def _stats_for(records: Sequence[LatencyRecord]) -> dict:
    e2e = [r.end_to_end for r in records]
    roles: dict[str, list[float]] = {}
    for record in records:
        for role, duration in record.backend_durations:
            roles.setdefault(role, []).append(duration)
    return {
        "count": len(records),
        "mean_s": statistics.fmean(e2e),
        "median_s": statistics.median(e2e),
        "p95_s": _percentile95(e2e),
        "backend": {
            role: {
                "calls": len(durations),
                "total_s": sum(durations),
                "mean_s": statistics.fmean(durations),
            }
            for role, durations in sorted(roles.items())
        },
        "mean_backend_total_s": statistics.fmean([r.backend_total for r in records]),
        "mean_overhead_s": statistics.fmean([r.end_to_end - r.backend_total for r in records]),
    }


class SessionStore:
    """All live sessions plus the backends and settings they share."""

    def __init__(self, backends: Backends, settings: ServiceSettings | None = None):
        self.backends = backends
        self.settings = settings or ServiceSettings()
        self._sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()

    def create_session(self, config: ObstructionConfig | None = None, opacity: float | None = None) -> SessionState:
        config = config or self.settings.default_config
        session_id = uuid.uuid4().hex
        state = SessionState(session_id, config, self.settings)
        if opacity is not None:
            if not 0.0 < opacity < 1.0:
                raise ValueError("opacity must be in (0, 1)")
            state.opacity = opacity
        with self._lock:
            self._sessions[session_id] = state
        state.log_event({"event": "session_created", "session": state.to_payload()})
        return state

    def get(self, session_id: str) -> SessionState:
        with self._lock:
            state = self._sessions.get(session_id)
        if state is None:
            raise UnknownSession(f"no session {session_id!r}")
        return state

    def sessions(self) -> list[SessionState]:
        with self._lock:
            return list(self._sessions.values())

    def handle_frame(
        self, session_id: str, raw: Image, aug: Image
    ) -> tuple[ObstructionResult, MitigationDirective, LatencyRecord]:
        """Run obstruction detection for one frame and decide mitigation.

        The directive is a pure function of the verdict: reduce opacity iff
        obstructed. Never calls the VLM.
        """
        state = self.get(session_id)
        with state._frame_lock:
            t_received = time.perf_counter()
            pair = ImagePair(raw, aug)
            snapshot = state.key_objects
            durations: list[tuple[str, float]] = []
            result = detect_obstruction(
                pair, snapshot, timed_backends(self.backends, durations), state.config
            )
            t_mask_ready = t_received + result.timings["extract_mask"]
            t_located = t_mask_ready + result.timings["locate"]
            t_verdict = t_located + result.timings["decide"]
            directive = (
                MitigationDirective.reduce_opacity(state.opacity)
                if result.obstructed
                else MitigationDirective.none()
            )
            state._frame_counter += 1
            record = LatencyRecord(
                frame_id=state._frame_counter,
                task=TASK_OBSTRUCTION,
                t_received=t_received,
                t_mask_ready=t_mask_ready,
                t_located=t_located,
                t_verdict=t_verdict,
                t_responded=time.perf_counter(),
                backend_durations=tuple(durations),
            )
            state.frame_records.append(record)
            state.last_raw = raw
        state.log_event(
            {
                "event": "frame",
                "frame_id": record.frame_id,
                "obstructed": result.obstructed,
                "directive": directive.to_payload(),
                "latency": record.to_payload(),
            }
        )
        return result, directive, record

    def trigger_keyobject_refresh(
        self, session_id: str, raw: Image, variant: PromptVariant
    ) -> KeyObjectList:
        """Manual prompt-controller trigger, throttled per session."""
        state = self.get(session_id)
        with state._refresh_lock:
            now = time.time()
            if (
                state.last_vlm_call is not None
                and now - state.last_vlm_call < self.settings.min_refresh_interval_s
            ):
                raise Throttled(
                    f"refresh allowed every {self.settings.min_refresh_interval_s}s"
                )
            state.last_vlm_call = now
            updated = refresh_keyobjects(state.key_objects, raw, variant, self.backends.vlm)
            state.key_objects = updated
        state.log_event({"event": "keyobject_refresh", "entries": list(updated.entries)})
        return updated

    def maybe_auto_refresh(self, state: SessionState) -> bool:
        """Fixed-interval refresh using the session's last seen raw frame."""
        interval = self.settings.auto_refresh_interval_s
        if interval is None or state.last_raw is None:
            return False
        if state.last_vlm_call is not None and time.time() - state.last_vlm_call < interval:
            return False
        with state._refresh_lock:
            state.last_vlm_call = time.time()
            state.key_objects = refresh_keyobjects(
                state.key_objects, state.last_raw, PromptVariant("standard"), self.backends.vlm
            )
        return True

    def handle_manipulation_check(
        self, session_id: str, raw: Image, aug: Image
    ) -> tuple[ManipulationResult, MitigationDirective]:
        """On-demand dual-image check; one in flight per session."""
        state = self.get(session_id)
        if not state._manipulation_lock.acquire(blocking=False):
            raise Busy("a manipulation check is already in flight for this session")
        try:
            t_received = time.perf_counter()
            pair = ImagePair(raw, aug)
            durations: list[tuple[str, float]] = []
            result = detect_manipulation(pair, timed_backends(self.backends, durations).vlm)
            directive = (
                MitigationDirective.warn(MANIPULATION_WARNING)
                if result.manipulated
                else MitigationDirective.none()
            )
            t_done = time.perf_counter()
            record = LatencyRecord(
                frame_id=len(state.manipulation_records) + 1,
                task=TASK_MANIPULATION,
                t_received=t_received,
                t_mask_ready=t_received,
                t_located=t_received,
                t_verdict=t_done,
                t_responded=t_done,
                backend_durations=tuple(durations),
            )
            state.manipulation_records.append(record)
        finally:
            state._manipulation_lock.release()
        state.log_event(
            {
                "event": "manipulation_check",
                "manipulated": result.manipulated,
                "directive": directive.to_payload(),
                "transcript": result.transcript,
                "latency": record.to_payload(),
            }
        )
        return result, directive

    def latency_stats(self, session_id: str) -> dict:
        """Mean/median/p95 end-to-end per task kind plus backend breakdown."""
        state = self.get(session_id)
        if not state.frame_records and not state.manipulation_records:
            raise NoData("no completed requests for this session")
        stats: dict = {}
        if state.frame_records:
            stats[TASK_OBSTRUCTION] = _stats_for(state.frame_records)
        if state.manipulation_records:
            stats[TASK_MANIPULATION] = _stats_for(state.manipulation_records)
        return stats
