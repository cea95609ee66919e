"""The end-to-end curation pipeline: synth, artifact filter, rank-select,
styled regeneration with TIPS gating, and review staging.

Every stage writes a checkpoint manifest (atomic rename); a rerun with
``resume=True`` loads whatever checkpoints exist and recomputes the rest, so
a killed run finishes to the same bytes as an uninterrupted one. All
randomness keys off (seed, stable ids), never off wall clock or iteration
order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends.core import BackendSuite
from .curation import (
    ArtifactThresholds,
    artifact_heuristics,
    aesthetic_rank_select,
    regenerate_with_style,
    stratified_style_sample,
    tips_gate,
)
from .errors import LayerForgeError, SampleSynthesisError
from .prompting import PromptRegistry
from .seeding import stable_rng, stable_seed
from .store import (
    ManifestEntry,
    layout_from_json,
    layout_to_json,
    load_sample,
    read_manifest,
    save_sample,
    write_manifest,
)
from .synth import LayerSynthConfig, synth_multilayer
from .tips import TipsModel
from .types import LayerSlot, SemanticLayout

logger = logging.getLogger(__name__)

_CAPTION_NOUNS = (
    "fox", "lantern", "kite", "teapot", "cactus", "rocket", "umbrella", "acorn",
    "lighthouse", "compass", "violin", "beetle", "anchor", "pinecone", "gondola",
)
_CAPTION_ADJS = ("red", "golden", "tiny", "striped", "frosted", "midnight", "paper", "copper")


class PipelineAborted(LayerForgeError):
    """Raised by the fault-injection hook after a stage checkpoint lands."""


@dataclass
class PipelineConfig:
    out_dir: Path
    seed: int = 7
    layouts_path: Optional[Path] = None  # stage-B input; None generates mock layouts
    n_mock_layouts: int = 50
    mock_canvas: tuple[int, int] = (96, 96)
    synth: LayerSynthConfig = field(
        default_factory=lambda: LayerSynthConfig(long_side=128, background_uniformity_max=16.0)
    )
    artifact_thresholds: ArtifactThresholds = field(default_factory=ArtifactThresholds)
    artifact_score_max: float = 0.5
    rank_proportion: float = 0.4
    styles: tuple[str, ...] = ("ink", "toy")
    n_per_style: int = 2
    tips_threshold: float = -1.0
    tips_model_path: Optional[Path] = None
    mock_aesthetic: bool = True
    max_workers: int = 4
    abort_after_stage: Optional[str] = None  # fault injection for crash tests

    @classmethod
    def from_json_file(cls, path: str | Path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls(out_dir=Path(raw.pop("out_dir")))
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise LayerForgeError(f"unknown pipeline config key {key!r}")
            if key == "synth":
                value = LayerSynthConfig(**value)
            elif key == "artifact_thresholds":
                value = ArtifactThresholds(**value)
            elif key in ("layouts_path", "tips_model_path"):
                value = Path(value) if value else None
            elif key in ("styles",):
                value = tuple(value)
            elif key in ("mock_canvas",):
                value = (int(value[0]), int(value[1]))
            setattr(cfg, key, value)
        return cfg


@dataclass(frozen=True)
class PipelineResult:
    report: dict
    final_manifest_path: Path
    entries: list[ManifestEntry]


def make_mock_layouts(
    n: int, seed: int = 0, canvas: tuple[int, int] = (96, 96)
) -> list[tuple[str, SemanticLayout]]:
    """Deterministic desk-scale layouts: a background slot plus 1-4 object slots."""
    cw, ch = canvas
    layouts = []
    for i in range(n):
        rng = stable_rng(seed, "mock-layout", i)
        slots = [
            LayerSlot(
                bbox=(0, 0, cw, ch),
                z=0,
                caption=f"a {_CAPTION_ADJS[int(rng.integers(0, len(_CAPTION_ADJS)))]} backdrop scene",
                kind="background",
            )
        ]
        for k in range(int(rng.integers(1, 5))):
            w = int(rng.integers(cw // 4, cw // 2 + 1))
            h = int(rng.integers(ch // 4, ch // 2 + 1))
            x = int(rng.integers(0, cw - w + 1))
            y = int(rng.integers(0, ch - h + 1))
            adj = _CAPTION_ADJS[int(rng.integers(0, len(_CAPTION_ADJS)))]
            noun = _CAPTION_NOUNS[int(rng.integers(0, len(_CAPTION_NOUNS)))]
            kind = "text" if rng.random() < 0.2 else "object"
            slots.append(LayerSlot(bbox=(x, y, w, h), z=10 * (k + 1), caption=f"a {adj} {noun}", kind=kind))
        layouts.append(
            (f"L{i:05d}", SemanticLayout(canvas=canvas, slots=tuple(slots), global_caption=f"mock scene {i}"))
        )
    return layouts


def mock_aesthetic_score(sample_id: str, seed: int) -> float:
    """Deterministic stand-in for the external aesthetic predictor."""
    return float(stable_rng(seed, "aesthetic", sample_id).uniform(0.0, 10.0))


def _style_slug(style: str) -> str:
    return style.replace(" ", "-")


class PipelineRunner:
    """Runs stages B..F with per-stage checkpoint manifests under out_dir."""

    def __init__(self, config: PipelineConfig, backends: BackendSuite, registry: Optional[PromptRegistry] = None):
        self.cfg = config
        self.backends = backends
        self.registry = registry or PromptRegistry()
        self.out = Path(config.out_dir)
        self.store = self.out / "store"
        self.out.mkdir(parents=True, exist_ok=True)
        self.store.mkdir(parents=True, exist_ok=True)

    # --- checkpoint helpers ---

    def _manifest_path(self, stage: str) -> Path:
        return self.out / f"manifest_{stage}.jsonl"

    def _checkpoint(self, stage: str, entries: list[ManifestEntry]):
        write_manifest(entries, self._manifest_path(stage))
        if self.cfg.abort_after_stage == stage:
            raise PipelineAborted(f"aborted after stage {stage} checkpoint (fault injection)")

    def _load_checkpoint(self, stage: str) -> Optional[list[ManifestEntry]]:
        path = self._manifest_path(stage)
        if path.exists():
            logger.info("stage %s: resuming from checkpoint %s", stage, path.name)
            return read_manifest(path)
        return None

    # --- stages ---

    def stage_b_layouts(self) -> list[tuple[str, SemanticLayout]]:
        path = self.out / "layouts_B.jsonl"
        if path.exists():
            pairs = []
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    d = json.loads(line)
                    pairs.append((d["id"], layout_from_json(json.dumps(d["layout"]))))
            return pairs
        if self.cfg.layouts_path is not None:
            pairs = []
            for i, line in enumerate(Path(self.cfg.layouts_path).read_text(encoding="utf-8").splitlines()):
                if line.strip():
                    d = json.loads(line)
                    layout = layout_from_json(json.dumps(d.get("layout", d)))
                    pairs.append((d.get("id", f"L{i:05d}"), layout))
        else:
            pairs = make_mock_layouts(self.cfg.n_mock_layouts, self.cfg.seed, self.cfg.mock_canvas)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            for lid, layout in pairs:
                f.write(json.dumps({"id": lid, "layout": json.loads(layout_to_json(layout))}, sort_keys=True) + "\n")
        tmp.replace(path)
        if self.cfg.abort_after_stage == "B":
            raise PipelineAborted("aborted after stage B checkpoint (fault injection)")
        return pairs

    def stage_c_synthesize(self, layouts: list[tuple[str, SemanticLayout]]) -> list[ManifestEntry]:
        cached = self._load_checkpoint("C")
        if cached is not None:
            return cached
        entries = []
        for lid, layout in layouts:
            try:
                sample = synth_multilayer(
                    layout,
                    self.cfg.synth,
                    self.backends,
                    seed=stable_seed(self.cfg.seed, "synth", lid),
                    max_workers=self.cfg.max_workers,
                )
            except SampleSynthesisError as exc:
                logger.warning("layout %s dropped: %s", lid, exc)
                continue
            if self.cfg.mock_aesthetic:
                sample = sample.with_scores(aesthetic=mock_aesthetic_score(lid, self.cfg.seed))
            save_sample(sample, self.store / lid)
            entries.append(
                ManifestEntry(
                    path=f"store/{lid}",
                    stage="C",
                    layer_count=sample.layer_count,
                    scores=sample.scores,
                )
            )
        self._checkpoint("C", entries)
        return entries

    def stage_d_artifact_filter(self, entries: list[ManifestEntry]) -> list[ManifestEntry]:
        cached = self._load_checkpoint("D")
        if cached is not None:
            return cached
        kept = []
        for entry in entries:
            sample = load_sample(self.out / entry.path)
            report = artifact_heuristics(sample, self.cfg.artifact_thresholds, self.backends)
            scored = entry.with_scores(artifact=report.artifact_score)
            if report.artifact_score <= self.cfg.artifact_score_max:
                kept.append(scored.with_stage("D"))
        self._checkpoint("D", kept)
        return kept

    def stage_e_rank_select(self, entries: list[ManifestEntry]) -> list[ManifestEntry]:
        cached = self._load_checkpoint("E")
        if cached is not None:
            return cached
        kept = aesthetic_rank_select(entries, self.cfg.rank_proportion)
        self._checkpoint("E", kept)
        return kept

    def stage_f_style_and_gate(self, entries: list[ManifestEntry]) -> list[ManifestEntry]:
        cached = self._load_checkpoint("F_staged")
        if cached is not None:
            return cached
        if self.cfg.tips_model_path is not None:
            model = TipsModel.load(self.cfg.tips_model_path)
        else:
            model = TipsModel()  # identity projection, default temperature
        plan = stratified_style_sample(entries, list(self.cfg.styles), self.cfg.n_per_style, self.cfg.seed)
        staged = []
        for assignment in plan.assignments:
            source = load_sample(self.out / assignment.entry.path)
            styled_id = f"{assignment.entry.sample_id}-{_style_slug(assignment.style)}"
            try:
                styled = regenerate_with_style(
                    source,
                    assignment.style,
                    self.cfg.synth,
                    self.backends,
                    self.registry,
                    seed=stable_seed(self.cfg.seed, "styled", styled_id),
                )
            except LayerForgeError as exc:
                logger.warning("styled regen %s dropped: %s", styled_id, exc)
                continue
            decision = tips_gate(styled, model, self.cfg.tips_threshold, self.backends)
            if not decision.accepted:
                continue
            report = artifact_heuristics(styled, self.cfg.artifact_thresholds, self.backends)
            if report.artifact_score > self.cfg.artifact_score_max:
                continue
            per_layer = {f"tips_layer_{i}": s for i, s in enumerate(decision.layer_scores)}
            styled = styled.with_scores(artifact=report.artifact_score, **per_layer)
            for i, j, _, _ in report.duplicate_pairs:
                styled = styled.with_scores(**{f"artifact_layer_{i}": 1.0, f"artifact_layer_{j}": 1.0})
            for i, j, _ in report.overlap_violations:
                styled = styled.with_scores(**{f"artifact_layer_{i}": 1.0, f"artifact_layer_{j}": 1.0})
            if self.cfg.mock_aesthetic:
                styled = styled.with_scores(aesthetic=mock_aesthetic_score(styled_id, self.cfg.seed))
            save_sample(styled, self.store / styled_id)
            staged.append(
                ManifestEntry(
                    path=f"store/{styled_id}",
                    stage="E",
                    layer_count=styled.layer_count,
                    scores=styled.scores,
                )
            )
        self._checkpoint("F_staged", staged)
        return staged

    def run(self) -> PipelineResult:
        layouts = self.stage_b_layouts()
        c = self.stage_c_synthesize(layouts)
        d = self.stage_d_artifact_filter(c)
        e = self.stage_e_rank_select(d)
        staged = self.stage_f_style_and_gate(e)
        report = {
            "seed": self.cfg.seed,
            "counts": {"B": len(layouts), "C": len(c), "D": len(d), "E": len(e), "F_staged": len(staged)},
        }
        report_path = self.out / "report.json"
        report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return PipelineResult(report=report, final_manifest_path=self._manifest_path("F_staged"), entries=staged)


def run_pipeline(config: PipelineConfig, backends: BackendSuite, resume: bool = True) -> PipelineResult:
    """Execute B..F; with resume=False any existing checkpoints are discarded."""
    runner = PipelineRunner(config, backends)
    if not resume:
        for stage in ("C", "D", "E", "F_staged"):
            path = runner._manifest_path(stage)
            if path.exists():
                path.unlink()
        layouts_path = runner.out / "layouts_B.jsonl"
        if layouts_path.exists():
            layouts_path.unlink()
    return runner.run()
