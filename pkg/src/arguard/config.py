"""Key-value text configuration for the detector and edge service.

Format: one ``key = value`` pair per line; blank lines and ``#`` comments are
ignored. Unknown keys are rejected so typos fail loudly.

Recognized keys (defaults in parentheses):
  alpha (0.25)                  obstruction ratio threshold, in (0, 1]
  box_confidence_min (0.35)     detector score gate, in [0, 1]
  diff_tolerance (8)            per-channel frame-diff tolerance, 0-255
  min_component_area (16)       speckle suppression for the diff mask, px
  mitigation_opacity (0.3)      opacity directive issued on obstruction
  min_refresh_interval_s (2.0)  throttle between key-object refreshes
  auto_refresh_interval_s ()    fixed-interval refresh; empty disables it
  vlm_url / detector_url / segmenter_url ()   backend endpoints
  timeout_ms (10000)            per-request backend timeout
  retries (2)                   backend retry count
  auth_token ()                 bearer credential passed through to backends
  log_dir ()                    session log directory; empty disables logging
  fixtures_dir ()               when set, scripted replay replaces HTTP backends
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .gateway.backends import BackendEndpoint, Backends, HttpBackend
from .gateway.scripted import FixtureStore, ScriptedBackend
from .imaging import DiffConfig
from .obstruction import ObstructionConfig
from .service.sessions import ServiceSettings


@dataclass
class ServiceConfig:
    alpha: float = 0.25
    box_confidence_min: float = 0.35
    diff_tolerance: int = 8
    min_component_area: int = 16
    mitigation_opacity: float = 0.3
    min_refresh_interval_s: float = 2.0
    auto_refresh_interval_s: float | None = None
    vlm_url: str | None = None
    detector_url: str | None = None
    segmenter_url: str | None = None
    timeout_ms: int = 10_000
    retries: int = 2
    auth_token: str | None = None
    log_dir: str | None = None
    fixtures_dir: str | None = None

    def obstruction_config(self) -> ObstructionConfig:
        return ObstructionConfig(
            alpha=self.alpha,
            box_confidence_min=self.box_confidence_min,
            diff=DiffConfig(
                tolerance=self.diff_tolerance, min_component_area=self.min_component_area
            ),
        )

    def service_settings(self) -> ServiceSettings:
        return ServiceSettings(
            default_config=self.obstruction_config(),
            mitigation_opacity=self.mitigation_opacity,
            min_refresh_interval_s=self.min_refresh_interval_s,
            auto_refresh_interval_s=self.auto_refresh_interval_s,
            log_dir=self.log_dir,
        )

    def build_backends(self) -> Backends:
        """Scripted replay when fixtures_dir is set, HTTP clients otherwise."""
        if self.fixtures_dir:
            return ScriptedBackend(FixtureStore(self.fixtures_dir), strict=True).as_backends()
        if not self.vlm_url:
            raise ValueError("config needs either fixtures_dir or backend URLs")
        common = {
            "timeout_ms": self.timeout_ms,
            "retries": self.retries,
            "auth_token": self.auth_token,
        }
        vlm = HttpBackend(BackendEndpoint(self.vlm_url, **common))
        detector = (
            vlm
            if self.detector_url in (None, self.vlm_url)
            else HttpBackend(BackendEndpoint(self.detector_url, **common))
        )
        if self.segmenter_url in (None, self.vlm_url):
            segmenter = vlm
        elif self.segmenter_url == self.detector_url:
            segmenter = detector
        else:
            segmenter = HttpBackend(BackendEndpoint(self.segmenter_url, **common))
        return Backends(vlm=vlm, detector=detector, segmenter=segmenter)


_FLOAT_KEYS = {"alpha", "box_confidence_min", "mitigation_opacity", "min_refresh_interval_s", "auto_refresh_interval_s"}
_INT_KEYS = {"diff_tolerance", "min_component_area", "timeout_ms", "retries"}
_OPTIONAL_KEYS = {
    "auto_refresh_interval_s",
    "vlm_url",
    "detector_url",
    "segmenter_url",
    "auth_token",
    "log_dir",
    "fixtures_dir",
}


def load_config(path: str | Path) -> ServiceConfig:
    known = {f.name for f in fields(ServiceConfig)}
    config = ServiceConfig()
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.split("#", 1)[0].strip()
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if value == "":
            if key in _OPTIONAL_KEYS:
                setattr(config, key, None)
                continue
            raise ValueError(f"{path}:{lineno}: key {key!r} needs a value")
        if key in _FLOAT_KEYS:
            setattr(config, key, float(value))
        elif key in _INT_KEYS:
            setattr(config, key, int(value))
        else:
            setattr(config, key, value)
    return config
