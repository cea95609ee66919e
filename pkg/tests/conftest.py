"""Shared builders for tests: small rasters, layers, layouts, samples."""

from __future__ import annotations

import numpy as np
import pytest

from layerforge.types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
)
from layerforge.compositor import composite


def solid_raster(width, height, rgba):
    px = np.empty((height, width, 4), dtype=np.uint8)
    px[:] = rgba
    return AlphaRaster(px)


def random_raster(rng, width, height):
    return AlphaRaster(rng.integers(0, 256, size=(height, width, 4), dtype=np.uint8))


def make_layer(raster, caption="a test layer", kind="object", style=None, source="mock"):
    return TransparentLayer(image=raster, caption=caption, kind=kind, style=style, source=source)


def random_layout(rng, canvas=(8, 8), n_layers=3, max_box=4):
    cw, ch = canvas
    slots = []
    for i in range(n_layers):
        w = int(rng.integers(1, max_box + 1))
        h = int(rng.integers(1, max_box + 1))
        x = int(rng.integers(0, cw - w + 1))
        y = int(rng.integers(0, ch - h + 1))
        slots.append(LayerSlot(bbox=(x, y, w, h), z=i, caption=f"slot {i}"))
    return SemanticLayout(canvas=canvas, slots=tuple(slots), global_caption="test scene")


def random_sample(rng, canvas=(8, 8), n_layers=3, stage="C"):
    layout = random_layout(rng, canvas, n_layers)
    layers = tuple(
        make_layer(random_raster(rng, s.bbox[2], s.bbox[3]), caption=f"layer {i}")
        for i, s in enumerate(layout.slots)
    )
    merged = composite(layout, list(layers)).merged
    return MultiLayerSample(
        layout=layout,
        layers=layers,
        merged=merged,
        state=CurationState(stage),
        scores={"aesthetic": float(rng.uniform(0, 10))},
    )


def brute_force_composite(layout, layers):
    """Independent oracle: scalar per-pixel over loop in premultiplied float."""
    cw, ch = layout.canvas
    acc = np.zeros((ch, cw, 4), dtype=np.float64)
    for slot, layer in sorted(zip(layout.slots, layers), key=lambda p: p[0].z):
        x, y, w, h = slot.bbox
        for yy in range(h):
            for xx in range(w):
                cy, cx = y + yy, x + xx
                if not (0 <= cy < ch and 0 <= cx < cw):
                    continue
                px = layer.image.pixels[yy, xx].astype(np.float64) / 255.0
                a = px[3]
                src = np.array([px[0] * a, px[1] * a, px[2] * a, a])
                acc[cy, cx] = src + acc[cy, cx] * (1.0 - a)
    out = np.zeros((ch, cw, 4), dtype=np.uint8)
    for cy in range(ch):
        for cx in range(cw):
            a = acc[cy, cx, 3]
            rgb = acc[cy, cx, :3] / a if a > 0 else np.zeros(3)
            out[cy, cx, :3] = np.rint(np.clip(rgb, 0, 1) * 255)
            out[cy, cx, 3] = np.rint(np.clip(a, 0, 1) * 255)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
