"""Adapter configuration: engine selection, device, downscaling, credentials.

Config files use the same ``key = value`` text format as the main service;
credentials may also come from the environment (ARGUARD_ADAPTER_TOKEN,
OPENAI_API_KEY) and are never logged or repr'd.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

ENGINE_BUILTIN = "builtin"
ENGINE_HF = "hf"
ENGINE_OPENAI_PROXY = "openai-proxy"

_ROLES = ("detector", "segmenter", "vlm")


@dataclass
class AdapterConfig:
    detector_engine: str | None = ENGINE_BUILTIN
    segmenter_engine: str | None = ENGINE_BUILTIN
    vlm_engine: str | None = ENGINE_BUILTIN
    detector_model: str = "builtin-blob-detector"
    segmenter_model: str = "builtin-box-segmenter"
    vlm_model: str = "builtin-describer"
    device: str = "cpu"
    max_image_edge: int = 1024
    api_base: str | None = None  # remote VLM endpoint for the proxy engine
    api_key: str | None = None
    max_workers: int = 2

    def __post_init__(self):
        if not any(getattr(self, f"{role}_engine") for role in _ROLES):
            raise ValueError("at least one backend role must be enabled")
        if self.max_image_edge < 64:
            raise ValueError("max_image_edge must be >= 64")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")

    def __repr__(self) -> str:  # credentials never appear in logs
        visible = {
            f.name: getattr(self, f.name) for f in fields(self) if f.name != "api_key"
        }
        visible["api_key"] = "<redacted>" if self.api_key else None
        body = ", ".join(f"{k}={v!r}" for k, v in visible.items())
        return f"AdapterConfig({body})"

    def model_identifiers(self) -> dict:
        return {
            "detector": self.detector_model if self.detector_engine else None,
            "segmenter": self.segmenter_model if self.segmenter_engine else None,
            "vlm": self.vlm_model if self.vlm_engine else None,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "AdapterConfig":
        values: dict = {}
        known = {f.name for f in fields(cls)}
        for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key, value = key.strip(), value.split("#", 1)[0].strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if value == "":
                values[key] = None
            elif key in ("max_image_edge", "max_workers"):
                values[key] = int(value)
            else:
                values[key] = value
        config = cls(**values)
        return config.with_env_credentials()

    def with_env_credentials(self) -> "AdapterConfig":
        if self.api_key is None:
            self.api_key = os.environ.get("ARGUARD_ADAPTER_TOKEN") or os.environ.get(
                "OPENAI_API_KEY"
            )
        return self
