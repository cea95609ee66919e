"""Deterministic mock backends for desk-scale runs.

Every mock is bit-deterministic given (seed, inputs): the same call always
returns the same bytes. Special prompt markers let tests inject failures:

* ``[[FAIL]]`` in a prompt makes the generator raise a backend error;
* ``[[BLANK]]`` makes it return a bare background (no foreground at all).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from ..compositor import CanvasSpec
from ..errors import BackendError
from ..prompting import GRAY_RGB
from .core import DEFAULT_EMBED_DIM, BackendSuite, EmbeddingVector

FAIL_MARKER = "[[FAIL]]"
BLANK_MARKER = "[[BLANK]]"

_ADJECTIVES = ("quiet", "bright", "tangled", "gilded", "mellow", "stark", "vivid", "faded")
_NOUNS = ("lantern", "fox", "ribbon", "archway", "kite", "beacon", "fern", "compass")


def _digest_rng(*parts) -> np.random.Generator:
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _array_token(arr: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


class MockGenerateBackend:
    """Draws one procedural shape on a uniform gray background.

    ``shape`` is "auto" (picked from the prompt hash), "disk", "ellipse" or
    "rect". ``radius_fraction`` pins the shape size relative to the short
    canvas side; when None it is drawn from the hash in [0.45, 0.75].
    """

    def __init__(self, seed: int = 0, shape: str = "auto", radius_fraction: Optional[float] = None):
        self.seed = seed
        self.shape = shape
        self.radius_fraction = radius_fraction

    def generate(self, prompt: str, canvas: CanvasSpec, seed: int = 0) -> np.ndarray:
        if FAIL_MARKER in prompt:
            raise BackendError(f"mock generator refused prompt containing {FAIL_MARKER}")
        w, h = canvas.width, canvas.height
        img = np.empty((h, w, 3), dtype=np.uint8)
        img[:] = GRAY_RGB
        if BLANK_MARKER in prompt:
            return img
        rng = _digest_rng("gen", self.seed, seed, prompt, w, h)
        # channel values far from gray so the mock matte always separates them
        color = np.where(rng.random(3) < 0.5, rng.integers(0, 64, 3), rng.integers(192, 256, 3))
        shape = self.shape
        if shape == "auto":
            shape = ("disk", "ellipse", "rect")[int(rng.integers(0, 3))]
        frac = self.radius_fraction if self.radius_fraction is not None else float(rng.uniform(0.45, 0.75))
        cx = w / 2.0 + float(rng.uniform(-0.08, 0.08)) * w
        cy = h / 2.0 + float(rng.uniform(-0.08, 0.08)) * h
        yy, xx = np.mgrid[0:h, 0:w]
        r = frac * min(w, h) / 2.0
        if shape == "disk":
            mask = (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= r * r
        elif shape == "ellipse":
            rx = r * float(rng.uniform(1.0, 1.5))
            ry = r * float(rng.uniform(0.6, 1.0))
            mask = ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0
        else:
            rx = r * float(rng.uniform(0.9, 1.4))
            ry = r * float(rng.uniform(0.7, 1.1))
            mask = (np.abs(xx + 0.5 - cx) <= rx) & (np.abs(yy + 0.5 - cy) <= ry)
        img[mask] = color.astype(np.uint8)
        return img


class MockMatteBackend:
    """Foreground = pixels far from the background gray in RGB-max metric.

    Pixels within ``distance`` of gray map to 0, the rest to 1, with a
    ``feather_px``-pixel linear ramp on the foreground side of the boundary.
    """

    def __init__(self, gray: tuple[int, int, int] = GRAY_RGB, distance: int = 24, feather_px: int = 2):
        self.gray = np.asarray(gray, dtype=np.int16)
        self.distance = distance
        self.feather_px = feather_px

    def matte(self, image: np.ndarray) -> np.ndarray:
        diff = np.abs(image.astype(np.int16) - self.gray).max(axis=2)
        fg = diff > self.distance
        if not fg.any():
            return np.zeros(image.shape[:2], dtype=np.float64)
        if fg.all():
            return np.ones(image.shape[:2], dtype=np.float64)
        dist = ndimage.distance_transform_edt(fg)
        return np.clip(dist / self.feather_px, 0.0, 1.0)


@dataclass
class PlantedArray:
    """An image wrapper whose tag drives the planted embed mode."""

    array: np.ndarray
    tag: str


class MockEmbedBackend:
    """Seeded hash of the input bytes mapped to a fixed pseudo-random unit vector.

    In planted mode, inputs tagged "good" land at cosine +0.8 against a fixed
    anchor, "bad" at -0.8, and anything else (the shared prompts) at +0.9,
    each with a hash-dependent residual orthogonal to the anchor.
    """

    def __init__(self, dim: int = DEFAULT_EMBED_DIM, seed: int = 0, planted: bool = False):
        self.dim = dim
        self.seed = seed
        self.planted = planted
        anchor = np.ones(dim, dtype=np.float64)
        self._anchor = anchor / np.linalg.norm(anchor)

    def _vector(self, token: str, tag: str) -> EmbeddingVector:
        raw = _digest_rng("embed", self.seed, token).standard_normal(self.dim)
        if not self.planted:
            return EmbeddingVector.normalized(raw)
        if "good" in tag:
            cos = 0.8
        elif "bad" in tag:
            cos = -0.8
        else:
            cos = 0.9
        residual = raw - (raw @ self._anchor) * self._anchor
        residual /= np.linalg.norm(residual)
        return EmbeddingVector(cos * self._anchor + np.sqrt(1.0 - cos * cos) * residual)

    def embed_image(self, image) -> EmbeddingVector:
        if isinstance(image, PlantedArray):
            return self._vector(_array_token(image.array) + "|" + image.tag, image.tag)
        return self._vector(_array_token(np.asarray(image)), "")

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._vector("text:" + text, text)


_STYLE_RE = re.compile(r"This is a (.+?) style image\.")


class MockRecaptionBackend:
    """Deterministic caption writer mirroring the style-recaption contract."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def recaption(self, image: np.ndarray, instruction: str) -> str:
        if not instruction:
            raise ValueError("recaption instruction must be non-empty")
        rng = _digest_rng("recaption", self.seed, _array_token(np.asarray(image)), instruction)
        adj = _ADJECTIVES[int(rng.integers(0, len(_ADJECTIVES)))]
        noun = _NOUNS[int(rng.integers(0, len(_NOUNS)))]
        match = _STYLE_RE.search(instruction)
        if match:
            style = match.group(1)
            return f"This is a {style} style image. A {adj} {noun} rendered with {style} accents."
        return f"A {adj} {noun} on a plain field."


def make_mock_suite(
    seed: int = 0,
    embed_dim: int = DEFAULT_EMBED_DIM,
    planted_embeddings: bool = False,
    shape: str = "auto",
) -> BackendSuite:
    return BackendSuite(
        generate=MockGenerateBackend(seed=seed, shape=shape),
        matte=MockMatteBackend(),
        embed=MockEmbedBackend(dim=embed_dim, seed=seed, planted=planted_embeddings),
        recaption=MockRecaptionBackend(seed=seed),
        source_label="mock",
    )
