"""REST service backing the human-review stage.

Stateless apart from the manifest and the decision journal: every decision is
journaled (write-ahead, fsynced) before the HTTP response goes out, so a
restart mid-session loses nothing and replaying the journal over the initial
manifest reproduces the accepted set exactly.
"""

from __future__ import annotations

import io
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .curation import VERDICTS, DecisionJournal, ReviewDecision, _drop_layers
from .errors import JournalWriteError
from .stats import compute_dataset_stats
from .store import ManifestEntry, load_sample, read_manifest
from .types import MultiLayerSample

THUMBNAIL_MAX = 128


class DecisionIn(BaseModel):
    sample_id: str
    verdict: str
    reviewer: str
    timestamp: float
    layer_rejects: list[int] = Field(default_factory=list)
    note: str = ""


class ReviewService:
    def __init__(self, manifest_path: str | Path, journal_path: str | Path, ui_dir: Optional[Path] = None):
        self.manifest_path = Path(manifest_path)
        self.root = self.manifest_path.parent
        self.entries: list[ManifestEntry] = read_manifest(self.manifest_path)
        self.by_id = {e.sample_id: e for e in self.entries}
        self.journal = DecisionJournal(journal_path)
        self.ui_dir = ui_dir
        self._meta_cache: dict[str, MultiLayerSample] = {}
        self._thumb_dir = self.root / ".thumbnails"

    # --- sample access ---

    def _sample(self, sample_id: str) -> MultiLayerSample:
        if sample_id not in self._meta_cache:
            entry = self.by_id[sample_id]
            self._meta_cache[sample_id] = load_sample(self.root / entry.path)
        return self._meta_cache[sample_id]

    def _decided_ids(self) -> set[str]:
        return {d.sample_id for d in self.journal.records}

    def _queue_entries(self) -> list[ManifestEntry]:
        decided = self._decided_ids()
        pending = [e for e in self.entries if e.sample_id not in decided]
        return sorted(pending, key=lambda e: (e.scores.get("artifact", 0.0), e.sample_id))

    def _layer_summaries(self, entry: ManifestEntry) -> list[dict]:
        sample = self._sample(entry.sample_id)
        out = []
        for i, (layer, slot) in enumerate(zip(sample.layers, sample.layout.slots)):
            out.append(
                {
                    "index": i,
                    "kind": layer.kind,
                    "caption": layer.caption,
                    "style": layer.style,
                    "tips_score": entry.scores.get(f"tips_layer_{i}"),
                    "artifact_flagged": entry.scores.get(f"artifact_layer_{i}", 0.0) > 0.0,
                    "bbox": list(slot.bbox),
                    "z": slot.z,
                }
            )
        return out

    def _thumbnail_path(self, sample_id: str) -> Path:
        self._thumb_dir.mkdir(exist_ok=True)
        path = self._thumb_dir / f"{sample_id}.png"
        if not path.exists():
            sample = self._sample(sample_id)
            im = Image.fromarray(sample.merged.pixels, mode="RGBA")
            im.thumbnail((THUMBNAIL_MAX, THUMBNAIL_MAX))
            buf = io.BytesIO()
            im.save(buf, format="PNG")
            path.write_bytes(buf.getvalue())
        return path

    def accepted_samples(self) -> list[MultiLayerSample]:
        """The accepted set, layer rejects applied in memory (store untouched)."""
        latest: dict[str, ReviewDecision] = {}
        for d in self.journal.records:
            if d.sample_id in self.by_id:
                latest[d.sample_id] = d
        samples = []
        for sample_id, decision in sorted(latest.items()):
            if not decision.accepts:
                continue
            sample = self._sample(sample_id)
            if decision.verdict == "accept_with_layer_rejects":
                sample = _drop_layers(sample, decision.layer_rejects)
            samples.append(sample)
        return samples


def create_review_app(
    manifest_path: str | Path,
    journal_path: str | Path,
    ui_dir: Optional[str | Path] = None,
) -> FastAPI:
    service = ReviewService(manifest_path, journal_path)
    app = FastAPI(title="layerforge review service")
    app.state.service = service

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.exception_handler(JournalWriteError)
    async def _journal_error(request: Request, exc: JournalWriteError):
        return JSONResponse(status_code=503, content={"error": str(exc)})

    @app.get("/api/queue")
    def queue(page: int = 0, page_size: int = 20):
        pending = service._queue_entries()
        start = page * page_size
        items = []
        for entry in pending[start : start + page_size]:
            items.append(
                {
                    "sample_id": entry.sample_id,
                    "stage": entry.stage,
                    "scores": entry.scores,
                    "thumbnail_url": f"/api/sample/{entry.sample_id}/thumbnail.png",
                    "layers": service._layer_summaries(entry),
                }
            )
        return {"total": len(pending), "page": page, "page_size": page_size, "items": items}

    @app.get("/api/sample/{sample_id}")
    def sample_detail(sample_id: str):
        if sample_id not in service.by_id:
            return JSONResponse(status_code=404, content={"error": f"unknown sample {sample_id}"})
        entry = service.by_id[sample_id]
        sample = service._sample(sample_id)
        return {
            "sample_id": sample_id,
            "stage": entry.stage,
            "canvas": list(sample.layout.canvas),
            "global_caption": sample.layout.global_caption,
            "style": sample.style,
            "scores": entry.scores,
            "merged_url": f"/api/sample/{sample_id}/merged.png",
            "layers": [
                dict(s, url=f"/api/sample/{sample_id}/layer/{s['index']}.png")
                for s in service._layer_summaries(entry)
            ],
        }

    @app.get("/api/sample/{sample_id}/merged.png")
    def merged_png(sample_id: str):
        if sample_id not in service.by_id:
            return JSONResponse(status_code=404, content={"error": f"unknown sample {sample_id}"})
        return FileResponse(service.root / service.by_id[sample_id].path / "merged.png")

    @app.get("/api/sample/{sample_id}/layer/{index}.png")
    def layer_png(sample_id: str, index: int):
        if sample_id not in service.by_id:
            return JSONResponse(status_code=404, content={"error": f"unknown sample {sample_id}"})
        path = service.root / service.by_id[sample_id].path / "layers" / f"layer_{index:03d}.png"
        if not path.exists():
            return JSONResponse(status_code=404, content={"error": f"no layer {index}"})
        return FileResponse(path)

    @app.get("/api/sample/{sample_id}/thumbnail.png")
    def thumbnail_png(sample_id: str):
        if sample_id not in service.by_id:
            return JSONResponse(status_code=404, content={"error": f"unknown sample {sample_id}"})
        return FileResponse(service._thumbnail_path(sample_id))

    @app.post("/api/decision")
    def post_decision(decision: DecisionIn):
        if decision.verdict not in VERDICTS:
            return JSONResponse(
                status_code=400,
                content={"errors": [{"field": "verdict", "message": f"must be one of {list(VERDICTS)}"}]},
            )
        if decision.sample_id not in service.by_id:
            return JSONResponse(status_code=404, content={"error": f"unknown sample {decision.sample_id}"})
        sample = service._sample(decision.sample_id)
        bad = [i for i in decision.layer_rejects if not (0 <= i < sample.layer_count)]
        if bad:
            return JSONResponse(
                status_code=400,
                content={"errors": [{"field": "layer_rejects", "message": f"indices out of range: {bad}"}]},
            )
        record = ReviewDecision(
            sample_id=decision.sample_id,
            verdict=decision.verdict,
            reviewer=decision.reviewer,
            timestamp=decision.timestamp,
            layer_rejects=tuple(decision.layer_rejects),
            note=decision.note,
        )
        written = service.journal.append(record)  # write-ahead: durable before we answer
        return {"status": "ok", "deduplicated": not written}

    @app.get("/api/stats")
    def stats():
        accepted = service.accepted_samples()
        if not accepted:
            return {"accepted": 0, "stats": None}
        return {"accepted": len(accepted), "stats": asdict(compute_dataset_stats(accepted))}

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
