"""Commercial-API VLM proxy (OpenAI-compatible chat endpoint).

Decoding is pinned to temperature 0 for determinism where the remote model
supports it; the model identifier rides back in response headers so consumers
can record provenance.
"""

from __future__ import annotations

import base64
import io

import httpx
import numpy as np
from PIL import Image as PILImage


class OpenAiProxyVlm:
    decoding = "temperature=0"

    def __init__(self, model_id: str, api_base: str | None, api_key: str | None, timeout_s: float = 60.0):
        if not api_base:
            raise ValueError("openai-proxy engine needs api_base")
        self.model_id = model_id
        self._client = httpx.Client(
            base_url=api_base.rstrip("/"),
            timeout=timeout_s,
            headers={"Authorization": f"Bearer {api_key}"} if api_key else {},
        )

    @staticmethod
    def _data_url(array: np.ndarray) -> str:
        buf = io.BytesIO()
        PILImage.fromarray(array).save(buf, format="PNG")
        return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")

    def complete(self, arrays: list[np.ndarray], prompt: str) -> str:
        content = [{"type": "text", "text": prompt}]
        for array in arrays:
            content.append({"type": "image_url", "image_url": {"url": self._data_url(array)}})
        response = self._client.post(
            "/chat/completions",
            json={
                "model": self.model_id,
                "temperature": 0,
                "messages": [{"role": "user", "content": content}],
            },
        )
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]
