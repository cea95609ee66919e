"""Backend roles, configuration, wire codecs, and the concurrency gate."""

from __future__ import annotations

import base64
import io
import os
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
from PIL import Image

from ..compositor import CanvasSpec
from ..errors import ConfigError

ROLES = ("generate", "matte", "embed", "recaption")

#: Default embedding dimension; the encoders behind the embed role decide the
#: real value, this is only what the mocks and tests use.
DEFAULT_EMBED_DIM = 512

ENV_URL_TEMPLATE = "LAYERFORGE_{role}_URL"


@dataclass(frozen=True)
class BackendConfig:
    """How to reach one backend role."""

    role: str
    endpoint: str
    timeout: float = 30.0
    max_retries: int = 3
    concurrency_limit: int = 4
    backoff_base: float = 0.25

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown backend role {self.role!r}")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")

    @classmethod
    def from_env(cls, role: str, **overrides) -> "BackendConfig":
        var = ENV_URL_TEMPLATE.format(role=role.upper())
        url = os.environ.get(var)
        if not url:
            raise ConfigError(f"environment variable {var} is not set")
        return cls(role=role, endpoint=url, **overrides)


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-norm real vector."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("embedding must be a 1-D vector")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1 within 1e-6")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "EmbeddingVector":
        v = np.asarray(raw, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(v / norm)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def dot(self, other: "EmbeddingVector") -> float:
        return float(self.values @ other.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


class GenerateBackend(Protocol):
    def generate(self, prompt: str, canvas: CanvasSpec, seed: int = 0) -> np.ndarray: ...


class MatteBackend(Protocol):
    def matte(self, image: np.ndarray) -> np.ndarray: ...


class EmbedBackend(Protocol):
    def embed_image(self, image: np.ndarray) -> EmbeddingVector: ...

    def embed_text(self, text: str) -> EmbeddingVector: ...


class RecaptionBackend(Protocol):
    def recaption(self, image: np.ndarray, instruction: str) -> str: ...


@dataclass
class BackendSuite:
    """One client per model role, plus the provenance label for produced layers."""

    generate: GenerateBackend
    matte: MatteBackend
    embed: EmbedBackend
    recaption: RecaptionBackend
    source_label: str = "generated"


class ConcurrencyGate:
    """Caps in-flight requests; exposes the observed peak for tests."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ConfigError("concurrency limit must be >= 1")
        self.limit = limit
        self._sem = threading.Semaphore(limit)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_observed = 0

    def __enter__(self):
        self._sem.acquire()
        with self._lock:
            self._in_flight += 1
            self.max_observed = max(self.max_observed, self._in_flight)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self._in_flight -= 1
        self._sem.release()
        return False


# --- wire codecs: rasters travel as base64 lossless PNG ---


def rgb_to_png_b64(rgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_rgb(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def matte_to_png_b64(matte: np.ndarray) -> str:
    """Encode a [0, 1] float matte as 16-bit grayscale PNG."""
    arr = np.rint(np.clip(matte, 0.0, 1.0) * 65535.0).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="I;16").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_matte(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / 65535.0
