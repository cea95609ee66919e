"""Planted-defect benchmark for the artifact heuristics.

Builds mock multi-layer samples: clean ones keep object layers distinct with
pairwise bbox overlap no higher than 0.7; defect ones plant either a
byte-identical duplicated layer at a conflicting position or a >= 0.85
overlap between two distinct layers.
"""

from __future__ import annotations

import numpy as np

from layerforge.compositor import bbox_overlap_fraction, composite
from layerforge.types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
)

CANVAS = (32, 32)


def _object_raster(rng, w, h):
    px = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
    px[:, :, 3] = rng.integers(128, 256, size=(h, w), dtype=np.uint8)
    return AlphaRaster(px)


def _background_layer(rng):
    px = rng.integers(0, 256, size=(CANVAS[1], CANVAS[0], 4), dtype=np.uint8)
    px[:, :, 3] = 255
    return (
        LayerSlot(bbox=(0, 0, *CANVAS), z=0, caption="backdrop", kind="background"),
        TransparentLayer(image=AlphaRaster(px), caption="backdrop", kind="background", source="mock"),
    )


def _random_bbox(rng, w, h):
    x = int(rng.integers(0, CANVAS[0] - w + 1))
    y = int(rng.integers(0, CANVAS[1] - h + 1))
    return (x, y, w, h)


def _clean_object_slots(rng, n):
    """Object bboxes with pairwise overlap fraction capped at 0.7."""
    slots = []
    while len(slots) < n:
        w = int(rng.integers(6, 16))
        h = int(rng.integers(6, 16))
        bbox = _random_bbox(rng, w, h)
        if all(bbox_overlap_fraction(bbox, s) <= 0.7 for s in slots):
            slots.append(bbox)
    return slots


def _assemble(slots_and_layers):
    slots, layers = zip(*slots_and_layers)
    layout = SemanticLayout(canvas=CANVAS, slots=tuple(slots), global_caption="benchmark")
    merged = composite(layout, list(layers)).merged
    return MultiLayerSample(
        layout=layout, layers=tuple(layers), merged=merged, state=CurationState("C")
    )


def make_clean_sample(rng) -> MultiLayerSample:
    parts = [_background_layer(rng)]
    boxes = _clean_object_slots(rng, int(rng.integers(2, 5)))
    for k, bbox in enumerate(boxes):
        raster = _object_raster(rng, bbox[2], bbox[3])
        parts.append(
            (
                LayerSlot(bbox=bbox, z=10 * (k + 1), caption=f"object {k}"),
                TransparentLayer(image=raster, caption=f"object {k}", source="mock"),
            )
        )
    return _assemble(parts)


def make_duplicate_defect(rng) -> MultiLayerSample:
    """The same layer raster twice, at conflicting (overlapping) positions."""
    parts = [_background_layer(rng)]
    w = int(rng.integers(8, 16))
    h = int(rng.integers(8, 16))
    x, y, _, _ = _random_bbox(rng, w + 4, h + 4)
    raster = _object_raster(rng, w, h)
    shift = int(rng.integers(1, 4))
    parts.append(
        (LayerSlot(bbox=(x, y, w, h), z=10, caption="thing"),
         TransparentLayer(image=raster, caption="thing", source="mock"))
    )
    parts.append(
        (LayerSlot(bbox=(x + shift, y + shift, w, h), z=20, caption="thing"),
         TransparentLayer(image=raster, caption="thing", source="mock"))
    )
    return _assemble(parts)


def make_overlap_defect(rng) -> MultiLayerSample:
    """Two distinct layers where the smaller box is >= 85% covered."""
    parts = [_background_layer(rng)]
    w = int(rng.integers(12, 20))
    h = int(rng.integers(12, 20))
    big = _random_bbox(rng, w, h)
    sw = int(rng.integers(5, max(6, w // 2 + 1)))
    sh = int(rng.integers(5, max(6, h // 2 + 1)))
    small = (big[0] + 1, big[1] + 1, sw, sh)  # fully inside the big box
    parts.append(
        (LayerSlot(bbox=big, z=10, caption="big"),
         TransparentLayer(image=_object_raster(rng, w, h), caption="big", source="mock"))
    )
    parts.append(
        (LayerSlot(bbox=small, z=20, caption="small"),
         TransparentLayer(image=_object_raster(rng, sw, sh), caption="small", source="mock"))
    )
    return _assemble(parts)


def build_benchmark(n_clean=400, n_defect=100, seed=77):
    """Returns (samples, labels); label True marks a planted defect."""
    rng = np.random.default_rng(seed)
    samples = []
    labels = []
    for _ in range(n_clean):
        samples.append(make_clean_sample(rng))
        labels.append(False)
    for i in range(n_defect):
        maker = make_duplicate_defect if i % 2 == 0 else make_overlap_defect
        samples.append(maker(rng))
        labels.append(True)
    return samples, labels
