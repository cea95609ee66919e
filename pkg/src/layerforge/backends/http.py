"""HTTP clients for the four model roles.

Wire contract: JSON over POST to /v1/{generate,matte,embed,recaption};
rasters travel as base64 lossless PNG. Every request carries a request_id
that the server must echo; responses are matched by id, never by arrival
order, and duplicate responses for an already-answered id are dropped.
"""

from __future__ import annotations

import time
import uuid
from typing import Optional

import httpx
import numpy as np

from ..compositor import CanvasSpec
from ..errors import BackendError, TransportError
from .core import (
    BackendConfig,
    BackendSuite,
    ConcurrencyGate,
    EmbeddingVector,
    matte_to_png_b64,
    png_b64_to_matte,
    png_b64_to_rgb,
    rgb_to_png_b64,
)


class HttpBackendClient:
    """Shareable handle for one backend role; safe for concurrent use."""

    def __init__(self, config: BackendConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self.gate = ConcurrencyGate(config.concurrency_limit)
        self._client = httpx.Client(
            base_url=config.endpoint, timeout=config.timeout, transport=transport
        )
        self._answered: set[str] = set()

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        request_id = payload.setdefault("request_id", uuid.uuid4().hex)
        attempts = max(1, self.config.max_retries)
        last_exc: Optional[Exception] = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                with self.gate:
                    # retries replay the identical request id so the server
                    # can deduplicate work
                    response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_exc = TransportError(f"{path}: {exc}")
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"{path} returned {response.status_code}: {response.text[:200]}"
                )
            body = response.json()
            if body.get("request_id") != request_id:
                raise BackendError(f"{path}: response does not match request id {request_id}")
            if request_id in self._answered:
                continue  # duplicate delivery; first answer already used
            self._answered.add(request_id)
            return body
        raise TransportError(
            f"{path} failed after {attempts} attempts: {last_exc}"
        )


class HttpGenerateBackend(HttpBackendClient):
    def generate(self, prompt: str, canvas: CanvasSpec, seed: int = 0) -> np.ndarray:
        body = self._post(
            "/v1/generate",
            {"prompt": prompt, "width": canvas.width, "height": canvas.height, "seed": seed},
        )
        image = png_b64_to_rgb(body["image_png_b64"])
        if image.shape[:2] != (canvas.height, canvas.width):
            raise BackendError(
                f"generator returned {image.shape[1]}x{image.shape[0]}, "
                f"wanted {canvas.width}x{canvas.height}"
            )
        return image


class HttpMatteBackend(HttpBackendClient):
    def matte(self, image: np.ndarray) -> np.ndarray:
        body = self._post("/v1/matte", {"image_png_b64": rgb_to_png_b64(image)})
        matte = png_b64_to_matte(body["matte_png_b64"])
        if matte.shape != image.shape[:2]:
            raise BackendError("matte dimensions do not match the input image")
        return matte


class HttpEmbedBackend(HttpBackendClient):
    def embed_image(self, image: np.ndarray) -> EmbeddingVector:
        arr = np.asarray(image, dtype=np.uint8)
        if arr.ndim == 3 and arr.shape[2] == 4:
            arr = arr[:, :, :3]
        body = self._post("/v1/embed", {"kind": "image", "image_png_b64": rgb_to_png_b64(arr)})
        return EmbeddingVector.normalized(np.asarray(body["vector"], dtype=np.float64))

    def embed_text(self, text: str) -> EmbeddingVector:
        body = self._post("/v1/embed", {"kind": "text", "text": text})
        return EmbeddingVector.normalized(np.asarray(body["vector"], dtype=np.float64))


class HttpRecaptionBackend(HttpBackendClient):
    def recaption(self, image: np.ndarray, instruction: str) -> str:
        if not instruction:
            raise ValueError("recaption instruction must be non-empty")
        body = self._post(
            "/v1/recaption",
            {"image_png_b64": rgb_to_png_b64(image), "instruction": instruction},
        )
        return body["text"]


_ROLE_CLIENTS = {
    "generate": HttpGenerateBackend,
    "matte": HttpMatteBackend,
    "embed": HttpEmbedBackend,
    "recaption": HttpRecaptionBackend,
}


def http_suite_from_env(**config_overrides) -> BackendSuite:
    """Build a suite from LAYERFORGE_{ROLE}_URL environment variables."""
    return BackendSuite(
        generate=HttpGenerateBackend(BackendConfig.from_env("generate", **config_overrides)),
        matte=HttpMatteBackend(BackendConfig.from_env("matte", **config_overrides)),
        embed=HttpEmbedBackend(BackendConfig.from_env("embed", **config_overrides)),
        recaption=HttpRecaptionBackend(BackendConfig.from_env("recaption", **config_overrides)),
        source_label="generated",
    )


def http_suite_from_config(path) -> BackendSuite:
    """Build a suite from a JSON config file: {role: {endpoint, timeout, ...}, ...}.

    Environment URLs win over file endpoints when both are present.
    """
    import json
    import os
    from pathlib import Path

    from .core import ENV_URL_TEMPLATE

    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    clients = {}
    for role, cls in _ROLE_CLIENTS.items():
        settings = dict(raw.get(role, {}))
        env_url = os.environ.get(ENV_URL_TEMPLATE.format(role=role.upper()))
        endpoint = env_url or settings.pop("endpoint", None)
        if not endpoint:
            raise BackendError(f"no endpoint configured for role {role!r}")
        settings.pop("role", None)
        clients[role] = cls(BackendConfig(role=role, endpoint=endpoint, **settings))
    return BackendSuite(
        generate=clients["generate"],
        matte=clients["matte"],
        embed=clients["embed"],
        recaption=clients["recaption"],
        source_label="generated",
    )
