#!/usr/bin/env python3
"""Generate cross-component fixtures for the review UI tests.

Each case carries raw straight-RGBA layer buffers plus server-side reference
composites (full set and per-visibility variants) so the client compositor
can be checked against the exact server math.
"""

import base64
import json
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from layerforge.compositor import composite
from layerforge.types import AlphaRaster, LayerSlot, MultiLayerSample, SemanticLayout, TransparentLayer


def b64(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.uint8).tobytes()).decode("ascii")


def layer_entry(slot, layer):
    return {
        "bbox": list(slot.bbox),
        "z": slot.z,
        "width": layer.image.width,
        "height": layer.image.height,
        "rgba_b64": b64(layer.image.pixels),
    }


def composite_b64(layout, layers):
    return b64(composite(layout, layers).merged.pixels)


def subset_layout(layout, keep):
    return SemanticLayout(
        canvas=layout.canvas,
        slots=tuple(layout.slots[i] for i in keep),
        global_caption=layout.global_caption,
    )


def make_case(name, canvas, boxes, rng, translucent=True):
    slots = tuple(
        LayerSlot(bbox=box, z=10 * i, caption=f"layer {i}") for i, box in enumerate(boxes)
    )
    layout = SemanticLayout(canvas=canvas, slots=slots, global_caption=name)
    layers = []
    for slot in slots:
        px = rng.integers(0, 256, size=(slot.bbox[3], slot.bbox[2], 4), dtype=np.uint8)
        if not translucent:
            px[:, :, 3] = 255
        layers.append(TransparentLayer(image=AlphaRaster(px), caption=slot.caption, source="mock"))
    variants = []
    n = len(layers)
    for r in range(n + 1):
        for keep in combinations(range(n), r):
            sub_layout = subset_layout(layout, keep) if keep else None
            merged = (
                composite_b64(sub_layout, [layers[i] for i in keep])
                if keep
                else b64(np.zeros((canvas[1], canvas[0], 4), dtype=np.uint8))
            )
            visible = [i in keep for i in range(n)]
            variants.append({"visible": visible, "merged_rgba_b64": merged})
    return {
        "name": name,
        "canvas": list(canvas),
        "layers": [layer_entry(s, l) for s, l in zip(slots, layers)],
        "merged_rgba_b64": composite_b64(layout, layers),
        "variants": variants,
    }


def main():
    out_path = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures" / "composite_cases.json"
    rng = np.random.default_rng(2024)
    cases = [
        make_case("two_disjoint", (24, 24), [(0, 0, 8, 8), (12, 12, 8, 8)], rng),
        make_case("three_overlapping_translucent", (16, 16), [(0, 0, 10, 10), (4, 4, 10, 10), (2, 6, 12, 8)], rng),
        make_case("full_canvas_opaque", (12, 12), [(0, 0, 12, 12)], rng, translucent=False),
        make_case("clipped_edges", (16, 16), [(10, 10, 10, 10), (0, 0, 8, 16)], rng),
        make_case("four_layer_stack", (20, 20), [(0, 0, 20, 20), (2, 2, 10, 10), (6, 6, 10, 10), (1, 9, 16, 8)], rng),
    ]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(cases), encoding="utf-8")
    print(f"wrote {out_path} ({len(cases)} cases)")


if __name__ == "__main__":
    main()
