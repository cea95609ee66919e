import json
import threading

import numpy as np
import pytest

from layerforge.backends import make_mock_suite
from layerforge.backends.mock import MockGenerateBackend
from layerforge.curation import (
    ArtifactThresholds,
    DecisionJournal,
    ReviewDecision,
    aesthetic_rank_select,
    apply_review_decisions,
    artifact_heuristics,
    regenerate_with_style,
    stratified_style_sample,
    tips_gate,
)
from layerforge.errors import ConfigError, MissingInputError, UnknownSampleError
from layerforge.store import ManifestEntry, load_sample, save_sample
from layerforge.synth import LayerSynthConfig
from layerforge.tips import TipsModel

from artifact_benchmark import build_benchmark, make_clean_sample, make_duplicate_defect
from conftest import brute_force_composite, random_sample


SUITE = make_mock_suite(seed=0)


def test_duplicate_layers_are_reported():
    rng = np.random.default_rng(5)
    sample = make_duplicate_defect(rng)
    report = artifact_heuristics(sample, backends=SUITE)
    assert len(report.duplicate_pairs) == 1
    i, j, cosine, iou = report.duplicate_pairs[0]
    assert (i, j) == (1, 2)
    assert cosine == pytest.approx(1.0)
    assert iou > 0.3
    assert report.artifact_score > 0.0


def test_clean_sample_has_empty_report():
    rng = np.random.default_rng(6)
    report = artifact_heuristics(make_clean_sample(rng), backends=SUITE)
    assert report.duplicate_pairs == ()
    assert report.overlap_violations == ()
    assert report.artifact_score == 0.0


def test_background_is_exempt_from_overlap_rule():
    rng = np.random.default_rng(7)
    sample = make_clean_sample(rng)
    # every object fully overlaps the full-canvas background, yet no violation
    report = artifact_heuristics(sample, backends=SUITE)
    assert all(
        sample.layers[i].kind != "background" and sample.layers[j].kind != "background"
        for i, j, _ in report.overlap_violations
    )


def test_benchmark_recall_and_precision():
    samples, labels = build_benchmark(n_clean=80, n_defect=20, seed=3)
    flagged = [
        artifact_heuristics(s, ArtifactThresholds(), SUITE).artifact_score > 0 for s in samples
    ]
    tp = sum(1 for f, l in zip(flagged, labels) if f and l)
    fp = sum(1 for f, l in zip(flagged, labels) if f and not l)
    fn = sum(1 for f, l in zip(flagged, labels) if not f and l)
    assert tp / (tp + fn) >= 0.9
    assert tp / (tp + fp) >= 0.8


def entry(sample_id, layer_count, score, stage="D"):
    return ManifestEntry(
        path=f"store/{sample_id}", stage=stage, layer_count=layer_count,
        scores={"aesthetic": score},
    )


def test_rank_select_keeps_top_fraction():
    entries = [entry(f"s{i:02d}", 4, float(i)) for i in range(10)]
    kept = aesthetic_rank_select(entries, 0.2)
    assert {e.sample_id for e in kept} == {"s09", "s08"}
    assert all(e.stage == "E" for e in kept)


def test_rank_select_groups_by_layer_count():
    group_a = [entry(f"a{i}", 3, float(i)) for i in range(10)]
    group_b = [entry(f"b{i}", 7, float(i)) for i in range(5)]
    kept = aesthetic_rank_select(group_a + group_b, 0.4)
    kept_a = [e for e in kept if e.sample_id.startswith("a")]
    kept_b = [e for e in kept if e.sample_id.startswith("b")]
    assert {e.sample_id for e in kept_a} == {"a9", "a8", "a7", "a6"}
    assert {e.sample_id for e in kept_b} == {"b4", "b3"}


def test_rank_select_proportion_one_is_identity_selection():
    entries = [entry(f"s{i}", 2, float(i)) for i in range(5)]
    kept = aesthetic_rank_select(entries, 1.0)
    assert [e.sample_id for e in kept] == [e.sample_id for e in entries]


def test_rank_select_is_idempotent():
    entries = [entry(f"s{i:02d}", 4, float(i % 4)) for i in range(12)]
    once = aesthetic_rank_select(entries, 0.4)
    twice = aesthetic_rank_select(once, 0.4)
    assert twice == once


def test_rank_select_ties_break_by_sample_id():
    # ceil(1/3 * 3) = 1 kept; equal scores fall back to ascending sample id
    entries = [entry("s2", 4, 1.0), entry("s1", 4, 1.0), entry("s3", 4, 1.0)]
    kept = aesthetic_rank_select(entries, 1 / 3)
    assert [e.sample_id for e in kept] == ["s1"]


def test_rank_select_missing_score_names_sample():
    entries = [
        entry("ok", 4, 1.0),
        ManifestEntry(path="store/broken", stage="D", layer_count=4, scores={}),
    ]
    with pytest.raises(MissingInputError, match="broken"):
        aesthetic_rank_select(entries, 0.5)


def test_stratified_sample_is_deterministic_and_counts():
    pool = [entry(f"s{i}", 3, 1.0, stage="E") for i in range(10)]
    a = stratified_style_sample(pool, ["ink", "toy"], 3, seed=5)
    b = stratified_style_sample(pool, ["ink", "toy"], 3, seed=5)
    assert a == b
    assert len(a.assignments) == 6
    assert a.with_replacement_styles == frozenset()
    per_style = {}
    for assignment in a.assignments:
        per_style.setdefault(assignment.style, set()).add(assignment.entry.sample_id)
    assert all(len(ids) == 3 for ids in per_style.values())  # without replacement


def test_stratified_sample_small_pool_flags_replacement():
    pool = [entry("only", 3, 1.0, stage="E")]
    plan = stratified_style_sample(pool, ["ink"], 4, seed=1)
    assert len(plan.assignments) == 4
    assert plan.with_replacement_styles == frozenset({"ink"})


def test_stratified_sample_production_scale_shape():
    pool = [entry(f"s{i}", 3, 1.0, stage="E") for i in range(50)]
    styles = [f"style{i}" for i in range(20)]
    plan = stratified_style_sample(pool, styles, 2000, seed=0)
    assert len(plan.assignments) == 20 * 2000
    assert plan.with_replacement_styles == frozenset(styles)


def test_stratified_sample_rejects_empty_styles():
    with pytest.raises(ConfigError):
        stratified_style_sample([entry("s", 3, 1.0)], [], 2, seed=0)


def regen_suite():
    suite = make_mock_suite(seed=2)
    suite.generate = MockGenerateBackend(seed=2, shape="disk", radius_fraction=0.6)
    return suite


def test_regenerate_with_style_contract(rng):
    source = random_sample(rng, canvas=(64, 64), n_layers=2)
    cfg = LayerSynthConfig(long_side=128, background_uniformity_max=16.0)
    styled = regenerate_with_style(source, "ink", cfg, regen_suite(), seed=9)
    assert styled.style == "ink"
    assert styled.state.stage == "C"
    assert styled.layout == source.layout  # identical geometry
    for layer in styled.layers:
        assert layer.caption.startswith("This is a ink style image.")
        assert layer.style == "ink"


def test_tips_gate_accepts_and_rejects():
    rng = np.random.default_rng(8)
    sample = make_clean_sample(rng)
    model = TipsModel()
    always = tips_gate(sample, model, threshold=-1.0, backends=SUITE)
    assert always.accepted
    assert len(always.layer_scores) == sample.layer_count
    never = tips_gate(sample, model, threshold=1.1, backends=SUITE)
    assert not never.accepted
    non_background = [i for i, l in enumerate(sample.layers) if l.kind != "background"]
    assert list(never.failing_layers) == non_background
    with pytest.raises(MissingInputError):
        tips_gate(sample, model, 0.0, backends=None)


def decision(sample_id, verdict, reviewer="r1", ts=1.0, rejects=()):
    return ReviewDecision(
        sample_id=sample_id, verdict=verdict, reviewer=reviewer, timestamp=ts,
        layer_rejects=tuple(rejects),
    )


def test_apply_review_decisions_accept_and_reject(tmp_path, rng):
    samples = {name: random_sample(rng, n_layers=3) for name in ("a", "b", "c")}
    for name, sample in samples.items():
        save_sample(sample, tmp_path / "store" / name)
    entries = [entry(n, 3, 1.0, stage="E") for n in ("a", "b", "c")]
    decisions = [decision("a", "accept"), decision("b", "reject")]
    out = apply_review_decisions(entries, decisions, tmp_path)
    by_id = {e.sample_id: e for e in out}
    assert by_id["a"].stage == "F"
    assert "b" not in by_id  # rejected: gone from the manifest, kept in journal
    assert by_id["c"].stage == "E"  # undecided passes through


def test_apply_review_decisions_layer_rejects_recomposites(tmp_path, rng):
    sample = random_sample(rng, n_layers=4)
    save_sample(sample, tmp_path / "store" / "s")
    entries = [entry("s", 4, 1.0, stage="E")]
    out = apply_review_decisions(entries, [decision("s", "accept_with_layer_rejects", rejects=[2])], tmp_path)
    assert len(out) == 1
    assert out[0].stage == "F"
    assert out[0].layer_count == 3
    assert out[0].path.endswith("-rev")
    edited = load_sample(tmp_path / out[0].path)
    keep = [0, 1, 3]
    oracle = brute_force_composite(edited.layout, [sample.layers[i] for i in keep])
    assert np.abs(edited.merged.pixels.astype(int) - oracle.astype(int)).max() <= 1
    # original untouched
    assert load_sample(tmp_path / "store" / "s") == sample


def test_apply_review_decisions_unknown_id(tmp_path):
    with pytest.raises(UnknownSampleError) as err:
        apply_review_decisions([entry("a", 3, 1.0)], [decision("ghost", "accept")], tmp_path)
    assert err.value.unknown_ids == ["ghost"]


def test_journal_append_dedupe_replay(tmp_path):
    journal = DecisionJournal(tmp_path / "j.jsonl")
    d = decision("a", "accept")
    assert journal.append(d) is True
    assert journal.append(d) is False  # same idempotency key
    assert journal.append(decision("a", "accept", ts=2.0)) is True  # new timestamp
    assert len(journal.replay()) == 2
    # a fresh handle over the same file sees everything
    again = DecisionJournal(tmp_path / "j.jsonl")
    assert len(again.records) == 2
    assert again.append(d) is False


def test_journal_concurrent_writers(tmp_path):
    journal = DecisionJournal(tmp_path / "j.jsonl")

    def reviewer(name):
        for i in range(25):
            journal.append(decision(f"s{i:02d}", "accept", reviewer=name, ts=float(i)))

    threads = [threading.Thread(target=reviewer, args=(f"rev{k}",)) for k in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lines = (tmp_path / "j.jsonl").read_text().splitlines()
    assert len(lines) == 75
    for line in lines:
        json.loads(line)  # no interleaving corruption
