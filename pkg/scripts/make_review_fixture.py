#!/usr/bin/env python3
"""Build a small review store + manifest for UI integration tests.

Usage: make_review_fixture.py OUT_DIR [N_SAMPLES]
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from layerforge.compositor import composite
from layerforge.store import ManifestEntry, save_sample, write_manifest
from layerforge.types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
)


def make_sample(rng, n_layers=3, canvas=(48, 48)):
    slots = []
    layers = []
    for i in range(n_layers):
        w = int(rng.integers(12, 28))
        h = int(rng.integers(12, 28))
        x = int(rng.integers(0, canvas[0] - w))
        y = int(rng.integers(0, canvas[1] - h))
        slots.append(LayerSlot(bbox=(x, y, w, h), z=10 * i, caption=f"element {i}"))
        px = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
        layers.append(TransparentLayer(image=AlphaRaster(px), caption=f"element {i}", source="mock"))
    layout = SemanticLayout(canvas=canvas, slots=tuple(slots), global_caption="fixture scene")
    merged = composite(layout, layers).merged
    return MultiLayerSample(
        layout=layout,
        layers=tuple(layers),
        merged=merged,
        state=CurationState("C"),
        scores={"aesthetic": float(rng.uniform(0, 10))},
    )


def main():
    out = Path(sys.argv[1])
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 4
    rng = np.random.default_rng(99)
    entries = []
    for i in range(n):
        sid = f"fx{i:02d}"
        sample = make_sample(rng)
        save_sample(sample, out / "store" / sid)
        entries.append(
            ManifestEntry(
                path=f"store/{sid}",
                stage="E",
                layer_count=sample.layer_count,
                scores=dict(sample.scores, artifact=i * 0.01),
            )
        )
    write_manifest(entries, out / "manifest.jsonl")
    print(out / "manifest.jsonl")


if __name__ == "__main__":
    main()
