"""Sample serialization and the on-disk dataset layout.

One directory per sample: ``metadata.json`` (schema "prismlayers.v1"),
``merged.png``, and ``layers/layer_NNN.png`` — all rasters lossless RGBA.
A dataset is a UTF-8 line-delimited manifest; each line carries
{path, stage, layer_count, scores} with the path relative to the manifest
file, so a run is relocatable and two runs with the same seed are
byte-identical.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .errors import DecodeError, EmptyInputError
from .types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
)

SCHEMA_VERSION = "prismlayers.v1"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise DecodeError(f"missing field '{where}.{key}'" if where else f"missing field '{key}'")
    return mapping[key]


def _layout_to_dict(layout: SemanticLayout) -> dict:
    return {
        "canvas": list(layout.canvas),
        "global_caption": layout.global_caption,
        "slots": [
            {"bbox": list(s.bbox), "z": s.z, "caption": s.caption, "kind": s.kind}
            for s in layout.slots
        ],
    }


def _layout_from_dict(d: dict) -> SemanticLayout:
    slots = []
    for i, s in enumerate(_require(d, "slots", "layout")):
        slots.append(
            LayerSlot(
                bbox=tuple(_require(s, "bbox", f"layout.slots[{i}]")),
                z=int(_require(s, "z", f"layout.slots[{i}]")),
                caption=str(_require(s, "caption", f"layout.slots[{i}]")),
                kind=str(s.get("kind", "object")),
            )
        )
    canvas = _require(d, "canvas", "layout")
    return SemanticLayout(
        canvas=(int(canvas[0]), int(canvas[1])),
        slots=tuple(slots),
        global_caption=str(d.get("global_caption", "")),
    )


def layout_to_json(layout: SemanticLayout) -> str:
    return json.dumps(_layout_to_dict(layout), sort_keys=True)


def layout_from_json(text: str) -> SemanticLayout:
    try:
        return _layout_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"layout is not valid JSON: {exc}") from exc


def _layer_meta(layer: TransparentLayer) -> dict:
    return {
        "caption": layer.caption,
        "kind": layer.kind,
        "style": layer.style,
        "source": layer.source,
    }


def _layer_from_meta(meta: dict, image: AlphaRaster, where: str) -> TransparentLayer:
    return TransparentLayer(
        image=image,
        caption=str(_require(meta, "caption", where)),
        style=meta.get("style"),
        kind=str(_require(meta, "kind", where)),
        source=str(meta.get("source", "generated")),
    )


def serialize_sample(sample: MultiLayerSample) -> bytes:
    """Self-contained byte stream: canonical JSON with base64 PNG rasters."""
    doc = {
        "schema": SCHEMA_VERSION,
        "layout": _layout_to_dict(sample.layout),
        "state": sample.state.stage,
        "style": sample.style,
        "scores": sample.scores,
        "merged_png": base64.b64encode(sample.merged.to_png_bytes()).decode("ascii"),
        "layers": [
            dict(_layer_meta(layer), png=base64.b64encode(layer.image.to_png_bytes()).decode("ascii"))
            for layer in sample.layers
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize_sample(data: bytes) -> MultiLayerSample:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"sample stream is not valid JSON: {exc}") from exc
    if _require(doc, "schema", "") != SCHEMA_VERSION:
        raise DecodeError(f"field 'schema': unsupported value {doc.get('schema')!r}")
    layout = _layout_from_dict(_require(doc, "layout", ""))
    try:
        merged = AlphaRaster.from_png_bytes(base64.b64decode(_require(doc, "merged_png", "")))
    except Exception as exc:
        raise DecodeError(f"field 'merged_png': {exc}") from exc
    layers = []
    for i, entry in enumerate(_require(doc, "layers", "")):
        try:
            image = AlphaRaster.from_png_bytes(base64.b64decode(_require(entry, "png", f"layers[{i}]")))
        except DecodeError:
            raise
        except Exception as exc:
            raise DecodeError(f"field 'layers[{i}].png': {exc}") from exc
        layers.append(_layer_from_meta(entry, image, f"layers[{i}]"))
    try:
        return MultiLayerSample(
            layout=layout,
            layers=tuple(layers),
            merged=merged,
            state=CurationState(str(_require(doc, "state", ""))),
            scores={str(k): float(v) for k, v in _require(doc, "scores", "").items()},
            style=doc.get("style"),
        )
    except ValueError as exc:
        raise DecodeError(f"inconsistent sample fields: {exc}") from exc


def save_sample(sample: MultiLayerSample, directory: str | Path) -> Path:
    """Write the sample directory; returns its path."""
    root = Path(directory)
    (root / "layers").mkdir(parents=True, exist_ok=True)
    (root / "merged.png").write_bytes(sample.merged.to_png_bytes())
    layer_files = []
    for i, layer in enumerate(sample.layers):
        name = f"layers/layer_{i:03d}.png"
        (root / name).write_bytes(layer.image.to_png_bytes())
        layer_files.append(dict(_layer_meta(layer), file=name))
    meta = {
        "schema": SCHEMA_VERSION,
        "layout": _layout_to_dict(sample.layout),
        "state": sample.state.stage,
        "style": sample.style,
        "scores": sample.scores,
        "merged_file": "merged.png",
        "layers": layer_files,
    }
    (root / "metadata.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return root


def load_sample(directory: str | Path) -> MultiLayerSample:
    root = Path(directory)
    meta_path = root / "metadata.json"
    if not meta_path.exists():
        raise DecodeError(f"no metadata.json under {root}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if _require(meta, "schema", "") != SCHEMA_VERSION:
        raise DecodeError(f"field 'schema': unsupported value {meta.get('schema')!r}")
    layout = _layout_from_dict(_require(meta, "layout", ""))
    merged = AlphaRaster.from_png_bytes((root / _require(meta, "merged_file", "")).read_bytes())
    layers = []
    for i, entry in enumerate(_require(meta, "layers", "")):
        image = AlphaRaster.from_png_bytes((root / _require(entry, "file", f"layers[{i}]")).read_bytes())
        layers.append(_layer_from_meta(entry, image, f"layers[{i}]"))
    return MultiLayerSample(
        layout=layout,
        layers=tuple(layers),
        merged=merged,
        state=CurationState(str(_require(meta, "state", ""))),
        scores={str(k): float(v) for k, v in _require(meta, "scores", "").items()},
        style=meta.get("style"),
    )


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest line; ``path`` is relative to the manifest file."""

    path: str
    stage: str
    layer_count: int
    scores: dict[str, float] = field(default_factory=dict)

    @property
    def sample_id(self) -> str:
        return Path(self.path).name

    def with_stage(self, stage: str) -> "ManifestEntry":
        return replace(self, stage=stage)

    def with_scores(self, **updates: float) -> "ManifestEntry":
        merged = dict(self.scores)
        merged.update(updates)
        return replace(self, scores=merged)


def manifest_line(entry: ManifestEntry) -> str:
    return json.dumps(
        {
            "path": entry.path,
            "stage": entry.stage,
            "layer_count": entry.layer_count,
            "scores": entry.scores,
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    """Atomic write: temp file then rename."""
    target = Path(path)
    tmp = target.with_suffix(target.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(manifest_line(entry) + "\n")
    tmp.replace(target)


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            entries.append(
                ManifestEntry(
                    path=str(_require(d, "path", f"line {line_no}")),
                    stage=str(_require(d, "stage", f"line {line_no}")),
                    layer_count=int(_require(d, "layer_count", f"line {line_no}")),
                    scores={str(k): float(v) for k, v in d.get("scores", {}).items()},
                )
            )
        except json.JSONDecodeError as exc:
            raise DecodeError(f"manifest line {line_no} is not valid JSON: {exc}") from exc
    return entries


def load_manifest_samples(
    manifest_path: str | Path, entries: Optional[Iterable[ManifestEntry]] = None
) -> list[MultiLayerSample]:
    """Load every sample a manifest references (paths resolved against the manifest)."""
    manifest_path = Path(manifest_path)
    entries = list(entries) if entries is not None else read_manifest(manifest_path)
    if not entries:
        raise EmptyInputError(f"manifest {manifest_path} lists no samples")
    return [load_sample(manifest_path.parent / e.path) for e in entries]
