"""Core value types: rasters, layers, layouts, samples, and curation stages.

All types are immutable after construction and safe to share across threads.
Rasters are stored as 8-bit RGBA with straight (non-premultiplied) alpha;
compositing converts to premultiplied floats internally.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from PIL import Image

from .errors import StageOrderError

LAYER_KINDS = frozenset({"object", "text", "background", "decoration"})
LAYER_SOURCES = frozenset({"generated", "crawled", "mock"})

#: Minimum fraction of non-transparent pixels a background layer must cover.
BACKGROUND_MIN_COVERAGE = 0.95

BBox = tuple[int, int, int, int]  # (x, y, w, h) in canvas pixel coordinates


@dataclass(frozen=True, eq=False)
class AlphaRaster:
    """An RGBA raster, 8 bits per channel, straight alpha.

    ``pixels`` has shape (height, width, 4) and is locked read-only on
    construction. Use :meth:`from_array` when the caller keeps a reference
    to the source array.
    """

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.ndim != 3 or p.shape[2] != 4:
            raise ValueError("AlphaRaster needs an (h, w, 4) array")
        if p.dtype != np.uint8:
            raise ValueError("AlphaRaster pixels must be uint8")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("AlphaRaster dimensions must be >= 1")
        p.setflags(write=False)

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "AlphaRaster":
        return cls(np.ascontiguousarray(pixels, dtype=np.uint8).copy())

    @classmethod
    def blank(cls, width: int, height: int) -> "AlphaRaster":
        return cls(np.zeros((height, width, 4), dtype=np.uint8))

    @classmethod
    def from_rgb_and_alpha(cls, rgb: np.ndarray, alpha01: np.ndarray) -> "AlphaRaster":
        """Build from an (h, w, 3) uint8 RGB array and an (h, w) float matte in [0, 1]."""
        a = np.rint(np.clip(alpha01, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(np.dstack([rgb.astype(np.uint8), a]))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.pixels[:, :, :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[:, :, 3]

    def coverage(self) -> float:
        """Fraction of pixels with alpha > 0."""
        return float(np.count_nonzero(self.alpha) / self.alpha.size)

    def alpha_mass(self) -> float:
        """Mean alpha in [0, 1]; continuous coverage measure."""
        return float(self.alpha.mean() / 255.0)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGBA").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "AlphaRaster":
        with Image.open(io.BytesIO(data)) as im:
            return cls(np.asarray(im.convert("RGBA"), dtype=np.uint8).copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlphaRaster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"AlphaRaster({self.width}x{self.height})"


@dataclass(frozen=True)
class TransparentLayer:
    """A single transparent layer: RGBA raster plus caption and tags.

    The matte is the raster's alpha channel. Background layers must cover
    at least 95% of their pixels (full-bleed by construction).
    """

    image: AlphaRaster
    caption: str
    style: Optional[str] = None
    kind: str = "object"
    source: str = "generated"

    def __post_init__(self):
        if not self.caption:
            raise ValueError("layer caption must be non-empty")
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.source not in LAYER_SOURCES:
            raise ValueError(f"unknown layer source {self.source!r}")
        if self.kind == "background" and self.image.coverage() < BACKGROUND_MIN_COVERAGE:
            raise ValueError(
                f"background layer coverage {self.image.coverage():.3f} < {BACKGROUND_MIN_COVERAGE}"
            )


@dataclass(frozen=True)
class LayerSlot:
    """One slot of a semantic layout: where a layer goes and what it shows."""

    bbox: BBox
    z: int
    caption: str
    kind: str = "object"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown slot kind {self.kind!r}")


@dataclass(frozen=True)
class SemanticLayout:
    """Canvas size plus an ordered list of layer slots.

    Slots are expected in ascending z order; :func:`validate_layout` reports
    violations instead of the constructor raising, so that malformed layouts
    coming from external annotation files can be inspected.
    """

    canvas: tuple[int, int]  # (width, height)
    slots: tuple[LayerSlot, ...]
    global_caption: str = ""

    def __post_init__(self):
        if len(self.slots) < 1:
            raise ValueError("layout needs at least one slot")
        if self.canvas[0] < 1 or self.canvas[1] < 1:
            raise ValueError("canvas dimensions must be >= 1")
        object.__setattr__(self, "slots", tuple(self.slots))

    @property
    def layer_count(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    slot_index: Optional[int] = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def validate_layout(layout: SemanticLayout) -> ValidationReport:
    """Check every layout invariant; violations become report entries, never errors.

    Pure: repeated calls on the same layout yield identical reports.
    """
    cw, ch = layout.canvas
    found: list[Violation] = []
    seen_z: dict[int, int] = {}
    prev_z: Optional[int] = None
    for i, slot in enumerate(layout.slots):
        x, y, w, h = slot.bbox
        if w < 1 or h < 1:
            found.append(Violation("slot-size", f"slot {i} bbox {slot.bbox} has empty extent", i))
        if x >= cw or y >= ch or x + w <= 0 or y + h <= 0:
            found.append(
                Violation("out-of-canvas", f"slot {i} bbox {slot.bbox} misses canvas {layout.canvas}", i)
            )
        if slot.z in seen_z:
            found.append(
                Violation("duplicate-z", f"slots {seen_z[slot.z]} and {i} share z={slot.z}", i)
            )
        else:
            seen_z[slot.z] = i
        if prev_z is not None and slot.z <= prev_z:
            found.append(
                Violation("z-not-ascending", f"slot {i} z={slot.z} not above previous z={prev_z}", i)
            )
        prev_z = slot.z
    return ValidationReport(tuple(found))


STAGES = "ABCDEF"


@dataclass(frozen=True)
class CurationState:
    """Pipeline stage marker A..F; transitions are monotone."""

    stage: str = "A"

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")

    @property
    def index(self) -> int:
        return STAGES.index(self.stage)

    def advanced_to(self, stage: str) -> "CurationState":
        nxt = CurationState(stage)
        if nxt.index < self.index:
            raise StageOrderError(f"cannot move from stage {self.stage} back to {stage}")
        return nxt

    def at_least(self, stage: str) -> bool:
        return self.index >= STAGES.index(stage)


@dataclass(frozen=True)
class MultiLayerSample:
    """A realized multi-layer image: layout, layers, merged render, curation state.

    ``scores`` maps metric names to numbers, e.g. "aesthetic", "artifact",
    "tips_layer_0". ``style`` is the sample-level style tag set by styled
    regeneration.
    """

    layout: SemanticLayout
    layers: tuple[TransparentLayer, ...]
    merged: AlphaRaster
    state: CurationState = field(default_factory=CurationState)
    scores: dict[str, float] = field(default_factory=dict)
    style: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.state.at_least("C") and len(self.layers) != len(self.layout.slots):
            raise ValueError(
                f"{len(self.layers)} layers for {len(self.layout.slots)} slots at stage {self.state.stage}"
            )
        if (self.merged.width, self.merged.height) != self.layout.canvas:
            raise ValueError("merged dimensions must equal the layout canvas")

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def with_state(self, stage: str) -> "MultiLayerSample":
        return replace(self, state=self.state.advanced_to(stage))

    def with_scores(self, **updates: float) -> "MultiLayerSample":
        merged_scores = dict(self.scores)
        merged_scores.update(updates)
        return replace(self, scores=merged_scores)
