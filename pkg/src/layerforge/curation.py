"""Curation operators: artifact filtering, rank selection, styled regeneration,
TIPS gating, and review decisions with an append-only journal.

Filters never touch sample directories; they only rewrite manifests. Review
decisions are journaled line by line so replaying the journal over the
initial manifest always reproduces the accepted set.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .backends.core import BackendSuite
from .compositor import bbox_iou, bbox_overlap_fraction, composite
from .errors import (
    ConfigError,
    DecodeError,
    JournalWriteError,
    MissingInputError,
    UnknownSampleError,
)
from .prompting import CanvasSpec, PromptRegistry, build_style_recaption_request, paste_on_gray
from .seeding import stable_rng, stable_seed
from .store import ManifestEntry, load_sample, save_sample
from .synth import LayerSynthConfig, synth_layer_with_retries
from .tips import TipsModel, tips_score
from .types import CurationState, MultiLayerSample, SemanticLayout

VERDICTS = ("accept", "reject", "accept_with_layer_rejects")


@dataclass(frozen=True)
class ArtifactThresholds:
    duplicate_cosine: float = 0.95
    duplicate_bbox_iou: float = 0.3
    overlap_fraction: float = 0.85


@dataclass(frozen=True)
class ArtifactReport:
    duplicate_pairs: tuple[tuple[int, int, float, float], ...]  # (i, j, cosine, bbox_iou)
    overlap_violations: tuple[tuple[int, int, float], ...]  # (i, j, fraction)
    artifact_score: float
    classifier_score: Optional[float] = None


def artifact_heuristics(
    sample: MultiLayerSample,
    thresholds: ArtifactThresholds = ArtifactThresholds(),
    backends: Optional[BackendSuite] = None,
    classifier_score: Optional[float] = None,
) -> ArtifactReport:
    """Flag duplicate layers in conflicting positions and excessive overlaps.

    A duplicate pair needs embedding cosine above the threshold AND bbox IoU
    above its threshold; an overlap violation needs intersection over the
    smaller box above the threshold, background layers exempt. The aggregate
    score is 1 - prod(1 - severity) over all findings. An external artifact
    classifier's confidence can ride along in ``classifier_score``.
    """
    if not sample.state.at_least("C"):
        raise ValueError(f"sample at stage {sample.state.stage} has no realized layers to check")
    if backends is None:
        raise MissingInputError("artifact heuristics need an embed backend for layer similarity")
    slots = sample.layout.slots
    embeddings = [backends.embed.embed_image(layer.image.pixels) for layer in sample.layers]

    duplicates = []
    overlaps = []
    severities = []
    for i, j in combinations(range(len(sample.layers)), 2):
        iou = bbox_iou(slots[i].bbox, slots[j].bbox)
        cosine = embeddings[i].dot(embeddings[j])
        if cosine > thresholds.duplicate_cosine and iou > thresholds.duplicate_bbox_iou:
            duplicates.append((i, j, cosine, iou))
            severities.append(max(0.0, min(1.0, cosine * iou)))
        if sample.layers[i].kind != "background" and sample.layers[j].kind != "background":
            frac = bbox_overlap_fraction(slots[i].bbox, slots[j].bbox)
            if frac > thresholds.overlap_fraction:
                overlaps.append((i, j, frac))
                severities.append(max(0.0, min(1.0, frac)))

    score = 1.0 - math.prod(1.0 - s for s in severities) if severities else 0.0
    return ArtifactReport(
        duplicate_pairs=tuple(duplicates),
        overlap_violations=tuple(overlaps),
        artifact_score=score,
        classifier_score=classifier_score,
    )


def aesthetic_rank_select(entries: Sequence[ManifestEntry], proportion: float) -> list[ManifestEntry]:
    """Keep the top ceil(proportion * group) per layer-count group, by aesthetic score.

    Ties break by sample id. Kept entries advance to stage E; a manifest that
    is already entirely at stage E or later passes through unchanged, which
    makes the operation idempotent.
    """
    if not (0.0 < proportion <= 1.0):
        raise ValueError(f"proportion {proportion} must be in (0, 1]")
    entries = list(entries)
    if entries and all(CurationState(e.stage).at_least("E") for e in entries):
        return entries
    for e in entries:
        if "aesthetic" not in e.scores:
            raise MissingInputError(f"sample {e.sample_id} has no aesthetic score")
    groups: dict[int, list[ManifestEntry]] = {}
    for e in entries:
        groups.setdefault(e.layer_count, []).append(e)
    keep_ids = set()
    for group in groups.values():
        ranked = sorted(group, key=lambda e: (-e.scores["aesthetic"], e.sample_id))
        for e in ranked[: math.ceil(proportion * len(ranked))]:
            keep_ids.add(e.sample_id)
    return [e.with_stage("E") for e in entries if e.sample_id in keep_ids]


@dataclass(frozen=True)
class StyleAssignment:
    entry: ManifestEntry
    style: str


@dataclass(frozen=True)
class StratifiedPlan:
    assignments: tuple[StyleAssignment, ...]
    with_replacement_styles: frozenset[str]


def stratified_style_sample(
    pool: Sequence[ManifestEntry],
    styles: Sequence[str],
    n_per_style: int,
    seed: int = 0,
) -> StratifiedPlan:
    """Seeded sampling of layouts per style, without replacement when possible.

    Styles smaller pools than ``n_per_style`` fall back to sampling with
    replacement and are flagged. Each style draws from an independent stream,
    so adding styles never perturbs the others.
    """
    if not styles:
        raise ConfigError("style list must be non-empty")
    if not pool:
        raise ValueError("layout pool must be non-empty")
    assignments = []
    flagged = set()
    for style in styles:
        rng = stable_rng(seed, "style-sample", style)
        replacement = n_per_style > len(pool)
        if replacement:
            flagged.add(style)
        idx = rng.choice(len(pool), size=n_per_style, replace=replacement)
        for i in sorted(int(k) for k in idx):
            assignments.append(StyleAssignment(entry=pool[i], style=style))
    return StratifiedPlan(tuple(assignments), frozenset(flagged))


#: Canvas the recaption paste-up uses; small and square keeps requests cheap.
RECAPTION_CANVAS = CanvasSpec(256, 256)


def regenerate_with_style(
    source: MultiLayerSample,
    style: str,
    cfg: LayerSynthConfig,
    backends: BackendSuite,
    registry: PromptRegistry = PromptRegistry(),
    seed: int = 0,
) -> MultiLayerSample:
    """Re-synthesize every layer of a sample under a style-rewritten caption.

    Per slot: paste the existing layer on gray, ask the recaption backend for
    a style-aware caption, regenerate via the single-layer pipeline, then
    composite on the unchanged layout geometry. Result is a fresh stage-C
    sample tagged with the style.
    """
    style_kw = registry.style(style)
    new_layers = []
    for i, (slot, layer) in enumerate(zip(source.layout.slots, source.layers)):
        pasted = paste_on_gray(layer, RECAPTION_CANVAS)
        request = build_style_recaption_request(pasted, style_kw, registry)
        caption = backends.recaption.recaption(pasted, request.instruction)
        regenerated = synth_layer_with_retries(
            caption, slot, cfg, backends, base_seed=stable_seed(seed, "regen", style, i), slot_index=i
        )
        new_layers.append(replace(regenerated, style=style_kw.name))
    merged = composite(source.layout, new_layers).merged
    return MultiLayerSample(
        layout=source.layout,
        layers=tuple(new_layers),
        merged=merged,
        state=CurationState("C"),
        style=style_kw.name,
    )


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    layer_scores: tuple[float, ...]
    failing_layers: tuple[int, ...]


def tips_gate(
    sample: MultiLayerSample,
    model: TipsModel,
    threshold: float,
    backends: Optional[BackendSuite] = None,
) -> FilterDecision:
    """Reject a sample if any non-background layer scores under the threshold."""
    if backends is None or backends.embed is None:
        raise MissingInputError("tips_gate needs per-layer image and text embeddings")
    scores = []
    failing = []
    for i, layer in enumerate(sample.layers):
        e_img = backends.embed.embed_image(layer.image.pixels)
        e_txt = backends.embed.embed_text(layer.caption)
        score = tips_score(model, e_img, e_txt)
        scores.append(score)
        if layer.kind != "background" and score < threshold:
            failing.append(i)
    return FilterDecision(accepted=not failing, layer_scores=tuple(scores), failing_layers=tuple(failing))


@dataclass(frozen=True)
class ReviewDecision:
    """A reviewer verdict; (sample_id, reviewer, timestamp) is the idempotency key."""

    sample_id: str
    verdict: str
    reviewer: str
    timestamp: float
    layer_rejects: tuple[int, ...] = ()
    note: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict != "accept_with_layer_rejects" and self.layer_rejects:
            raise ValueError("layer_rejects only apply to accept_with_layer_rejects")
        object.__setattr__(self, "layer_rejects", tuple(self.layer_rejects))

    @property
    def key(self) -> tuple[str, str, float]:
        return (self.sample_id, self.reviewer, self.timestamp)

    @property
    def accepts(self) -> bool:
        return self.verdict in ("accept", "accept_with_layer_rejects")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "verdict": self.verdict,
                "reviewer": self.reviewer,
                "timestamp": self.timestamp,
                "layer_rejects": list(self.layer_rejects),
                "note": self.note,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ReviewDecision":
        try:
            d = json.loads(text)
            return cls(
                sample_id=d["sample_id"],
                verdict=d["verdict"],
                reviewer=d["reviewer"],
                timestamp=float(d["timestamp"]),
                layer_rejects=tuple(int(i) for i in d.get("layer_rejects", [])),
                note=d.get("note", ""),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DecodeError(f"bad decision record: {exc}") from exc


class DecisionJournal:
    """Append-only, write-ahead decision log with one serialized writer.

    ``append`` returns False (and writes nothing) for a decision whose
    idempotency key was already journaled. Entries are durable before the
    call returns.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[ReviewDecision] = self.replay()
        self._seen: set[tuple[str, str, float]] = {d.key for d in self._records}

    def replay(self) -> list[ReviewDecision]:
        """Re-read every journaled decision from disk (the source of truth)."""
        if not self.path.exists():
            return []
        return [
            ReviewDecision.from_json(line)
            for line in self.path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    @property
    def records(self) -> list[ReviewDecision]:
        with self._lock:
            return list(self._records)

    def append(self, decision: ReviewDecision) -> bool:
        with self._lock:
            if decision.key in self._seen:
                return False
            try:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(decision.to_json() + "\n")
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as exc:
                raise JournalWriteError(f"could not persist decision: {exc}") from exc
            self._seen.add(decision.key)
            self._records.append(decision)
            return True


def _drop_layers(sample: MultiLayerSample, rejects: Sequence[int]) -> MultiLayerSample:
    bad = set(rejects)
    for k in bad:
        if not (0 <= k < sample.layer_count):
            raise ValueError(f"layer reject index {k} out of range for {sample.layer_count} layers")
    if len(bad) >= sample.layer_count:
        raise ValueError("cannot reject every layer of a sample")
    keep = [i for i in range(sample.layer_count) if i not in bad]
    layout = SemanticLayout(
        canvas=sample.layout.canvas,
        slots=tuple(sample.layout.slots[i] for i in keep),
        global_caption=sample.layout.global_caption,
    )
    layers = tuple(sample.layers[i] for i in keep)
    merged = composite(layout, list(layers)).merged
    scores = {k: v for k, v in sample.scores.items() if not k.startswith("tips_layer_")}
    return MultiLayerSample(
        layout=layout,
        layers=layers,
        merged=merged,
        state=sample.state,
        scores=scores,
        style=sample.style,
    )


def apply_review_decisions(
    entries: Sequence[ManifestEntry],
    decisions: Iterable[ReviewDecision],
    store_root: str | Path,
) -> list[ManifestEntry]:
    """Fold decisions into a manifest: accepts advance to stage F, rejects drop out.

    Layer-level rejects write a re-composited sample next to the original
    (suffix "-rev"); originals are never mutated. The last decision per
    sample wins. Rejected samples stay journaled but leave the manifest.
    """
    store_root = Path(store_root)
    by_id = {e.sample_id: e for e in entries}
    latest: dict[str, ReviewDecision] = {}
    unknown = []
    for d in decisions:
        if d.sample_id not in by_id:
            unknown.append(d.sample_id)
            continue
        latest[d.sample_id] = d
    if unknown:
        raise UnknownSampleError(f"decisions reference unknown samples: {sorted(set(unknown))}", sorted(set(unknown)))

    out: list[ManifestEntry] = []
    for entry in entries:
        decision = latest.get(entry.sample_id)
        if decision is None:
            out.append(entry)  # undecided samples pass through unchanged
            continue
        if decision.verdict == "reject":
            continue
        if decision.verdict == "accept":
            out.append(entry.with_stage("F"))
            continue
        sample = load_sample(store_root / entry.path)
        edited = _drop_layers(sample, decision.layer_rejects)
        new_dir = store_root / f"{entry.path}-rev"
        save_sample(edited, new_dir)
        out.append(
            ManifestEntry(
                path=f"{entry.path}-rev",
                stage="F",
                layer_count=edited.layer_count,
                scores=edited.scores,
            )
        )
    return out


def accepted_manifest(
    entries: Sequence[ManifestEntry],
    decisions: Iterable[ReviewDecision],
    store_root: str | Path,
) -> list[ManifestEntry]:
    """The accepted set only: what the journal replay certifies as stage F."""
    return [e for e in apply_review_decisions(entries, decisions, store_root) if e.stage == "F"]
