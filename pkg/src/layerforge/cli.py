"""Command-line entry points for every pipeline capability.

Exit codes: 0 success, 1 domain error, 2 usage error. All randomness is
seeded through --seed so repeated runs produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import attention, tips
from .backends import http_suite_from_env, make_mock_suite
from .errors import LayerForgeError
from .pipeline import PipelineConfig, run_pipeline
from .stats import compute_dataset_stats, render_stats_table
from .store import (
    ManifestEntry,
    layout_from_json,
    load_manifest_samples,
    load_sample,
    read_manifest,
    save_sample,
    write_manifest,
)
from .synth import LayerSynthConfig, synth_layer, synth_multilayer
from .types import CurationState, LayerSlot, MultiLayerSample, SemanticLayout


def _suite(args):
    if getattr(args, "mock", False):
        return make_mock_suite(seed=args.seed)
    return http_suite_from_env()


def _synth_cfg(args) -> LayerSynthConfig:
    return LayerSynthConfig(
        suffix_template=args.template,
        color=args.color,
        long_side=args.long_side,
    )


def cmd_synth_layer(args) -> int:
    suite = _suite(args)
    slot = LayerSlot(bbox=(0, 0, args.width, args.height), z=0, caption=args.caption, kind=args.kind)
    layer = synth_layer(args.caption, slot, _synth_cfg(args), suite, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(layer.image.to_png_bytes())
    print(f"wrote {out} ({layer.image.width}x{layer.image.height}, coverage {layer.image.coverage():.3f})")
    return 0


def cmd_synth_multilayer(args) -> int:
    suite = _suite(args)
    layout = layout_from_json(Path(args.layout).read_text(encoding="utf-8"))
    sample = synth_multilayer(layout, _synth_cfg(args), suite, seed=args.seed)
    save_sample(sample, args.out)
    print(f"wrote sample with {sample.layer_count} layers to {args.out}")
    return 0


def cmd_curate(args) -> int:
    config = PipelineConfig.from_json_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    suite = make_mock_suite(seed=config.seed) if args.mock else http_suite_from_env()
    result = run_pipeline(config, suite, resume=not args.fresh)
    print(json.dumps(result.report, sort_keys=True, indent=2))
    print(f"final manifest: {result.final_manifest_path}")
    return 0


def cmd_stats(args) -> int:
    samples = load_manifest_samples(args.manifest)
    print(render_stats_table(compute_dataset_stats(samples)), end="")
    return 0


def cmd_metrics(args) -> int:
    if args.fixture:
        rows = attention.reference_report()
    else:
        listing = json.loads(Path(args.records).read_text(encoding="utf-8"))
        records = []
        base = Path(args.records).parent
        for item in listing:
            attention_grid = attention.read_grid(base / item["attention"])
            mask = attention.read_grid(base / item["mask"]).astype(int)
            trajectory = None
            if item.get("trajectory"):
                trajectory = np.stack([attention.read_grid(base / p) for p in item["trajectory"]])
            records.append(
                (item["label"], attention.AttentionRecord(attention_grid, mask, trajectory))
            )
        rows = attention.metrics_report(records, binarize=args.binarize)
    text = attention.render_report(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_tips_train(args) -> int:
    pairs = tips.load_pairs(args.pairs)
    model = tips.train(
        pairs,
        tips.TrainConfig(
            lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed, l2=args.l2
        ),
    )
    model.save(args.out)
    last = model.provenance["history"][-1] if model.provenance.get("history") else None
    if last:
        print(
            f"trained {args.epochs} epochs; train acc {last['train_accuracy']:.3f}, "
            f"holdout acc {last['holdout_accuracy']}"
        )
    else:
        print("no training epochs requested; wrote the initial model")
    return 0


def cmd_tips_score(args) -> int:
    model = tips.TipsModel.load(args.model)
    if getattr(args, "mock", False) and model.dim:
        suite = make_mock_suite(seed=args.seed, embed_dim=model.dim)
    else:
        suite = _suite(args)
    with Image.open(args.image) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    score = tips.tips_score(model, suite.embed.embed_image(rgb), suite.embed.embed_text(args.text))
    print(f"{score:.6f}")
    return 0


def cmd_review_serve(args) -> int:
    import uvicorn

    from .service import create_review_app

    app = create_review_app(args.manifest, args.journal, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export_fid(args) -> int:
    manifest = Path(args.manifest)
    entries = read_manifest(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    backdrop = tuple(int(c) for c in args.backdrop.split(","))
    from .compositor import composite

    for entry in entries:
        sample = load_sample(manifest.parent / entry.path)
        flat = composite(sample.layout, list(sample.layers), backdrop=backdrop).flattened
        Image.fromarray(flat, mode="RGB").save(out / f"{entry.sample_id}.png")
    print(f"exported {len(entries)} flattened renders to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, mock=True):
        p.add_argument("--seed", type=int, default=0)
        if mock:
            p.add_argument("--mock", action="store_true", help="use deterministic mock backends")

    p = sub.add_parser("synth-layer", help="generate one transparent layer")
    p.add_argument("--caption", required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--kind", default="object")
    p.add_argument("--template", default="H")
    p.add_argument("--color", default="gray")
    p.add_argument("--long-side", dest="long_side", type=int, default=256)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_synth_layer)

    p = sub.add_parser("synth-multilayer", help="synthesize a full layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--template", default="H")
    p.add_argument("--color", default="gray")
    p.add_argument("--long-side", dest="long_side", type=int, default=256)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_synth_multilayer)

    p = sub.add_parser("curate", help="run the curation pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("stats", help="dataset statistics over a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("metrics", help="attention-map metrics report")
    p.add_argument("--records", help="JSON list of {label, attention, mask, trajectory[]} grid paths")
    p.add_argument("--fixture", action="store_true", help="print the bundled reference table")
    p.add_argument("--binarize", default="otsu", choices=["otsu", "mean", "fixed"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("tips-train", help="train the preference scorer on a pairs file")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--l2", type=float, default=0.0)
    add_common(p, mock=False)
    p.set_defaults(func=cmd_tips_train)

    p = sub.add_parser("tips-score", help="score one image against a prompt")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--text", required=True)
    add_common(p)
    p.set_defaults(func=cmd_tips_score)

    p = sub.add_parser("review-serve", help="serve the human-review API and UI")
    p.add_argument("--manifest", required=True)
    p.add_argument("--journal", required=True)
    p.add_argument("--ui-dir", dest="ui_dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_review_serve)

    p = sub.add_parser("export-fid", help="export flattened merged renders for FID tooling")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backdrop", default="255,255,255")
    p.set_defaults(func=cmd_export_fid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LayerForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
