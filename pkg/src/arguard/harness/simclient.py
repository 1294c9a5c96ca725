"""Protocol-conformant simulated AR client.

Streams dataset frame pairs to a running edge service over the real HTTP API
(one multipart request per frame), so end-to-end latency measurements cover
the full wire path the mobile client would exercise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import httpx

from ..errors import BackendUnavailable
from .dataset import ManipulationSample, ObstructionSample


@dataclass(frozen=True)
class FrameOutcome:
    index: int
    sample_id: str
    obstructed: bool
    directive: dict
    latency: dict


@dataclass(frozen=True)
class SimulationResult:
    session_id: str
    key_objects: list[str]
    frames: list[FrameOutcome]
    latency_stats: dict


def _check(response: httpx.Response) -> dict:
    if response.status_code >= 400:
        raise BackendUnavailable(
            f"service returned HTTP {response.status_code}: {response.text[:200]}"
        )
    return response.json()


def simulate_obstruction(
    service_url: str,
    samples: Sequence[ObstructionSample],
    *,
    session_config: dict | None = None,
    refresh: bool = True,
    refresh_variant: str = "standard",
    timeout_s: float = 30.0,
) -> SimulationResult:
    """Create a session, optionally refresh key objects, stream every frame.

    Frames are sent in dataset order and outcomes are recorded in response
    order (the API is request/response, so the two must agree).
    """
    with httpx.Client(base_url=service_url.rstrip("/"), timeout=timeout_s) as client:
        session = _check(client.post("/v1/sessions", json=session_config or {}))
        session_id = session["id"]

        key_objects: list[str] = []
        if refresh and samples:
            refreshed = _check(
                client.post(
                    f"/v1/sessions/{session_id}/keyobjects/refresh",
                    files={"raw": ("raw.png", samples[0].load_raw().to_png_bytes(), "image/png")},
                    data={"variant": refresh_variant},
                )
            )
            key_objects = refreshed["key_objects"]

        frames: list[FrameOutcome] = []
        for index, sample in enumerate(samples):
            body = _check(
                client.post(
                    f"/v1/sessions/{session_id}/frames",
                    files={
                        "raw": ("raw.png", sample.load_raw().to_png_bytes(), "image/png"),
                        "aug": ("aug.png", sample.load_aug().to_png_bytes(), "image/png"),
                    },
                )
            )
            frames.append(
                FrameOutcome(
                    index=index,
                    sample_id=sample.id,
                    obstructed=body["obstruction"]["obstructed"],
                    directive=body["directive"],
                    latency=body["latency"],
                )
            )

        stats = _check(client.get(f"/v1/sessions/{session_id}/latency"))
    return SimulationResult(
        session_id=session_id, key_objects=key_objects, frames=frames, latency_stats=stats
    )


def simulate_manipulation_checks(
    service_url: str,
    samples: Sequence[ManipulationSample],
    *,
    timeout_s: float = 60.0,
) -> list[dict]:
    """Issue one on-demand manipulation check per sample; returns responses."""
    results = []
    with httpx.Client(base_url=service_url.rstrip("/"), timeout=timeout_s) as client:
        session = _check(client.post("/v1/sessions", json={}))
        session_id = session["id"]
        for sample in samples:
            body = _check(
                client.post(
                    f"/v1/sessions/{session_id}/manipulation",
                    files={
                        "raw": ("raw.png", sample.load_raw().to_png_bytes(), "image/png"),
                        "aug": ("aug.png", sample.load_aug().to_png_bytes(), "image/png"),
                    },
                )
            )
            results.append(body)
    return results
