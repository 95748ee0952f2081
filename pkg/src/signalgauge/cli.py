"""Command line interface: ``signalgauge <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .architecture import ArchitectureSpec, classify_regime, recommend_architecture
from .dataset_io import DATASET_IDS, ImageDataset, load_corpus, split_shuffle
from .errors import SignalGaugeError
from .experiment import (
    GEOMETRY,
    SPLITS,
    ExperimentReport,
    builtin_grid,
    load_plan_data,
    run_plan,
    write_outputs,
)
from .signal_metrics import SNR_MODES, SignalMetrics, compute_metrics, per_class_metrics
from .stats import PAIRINGS, regime_verdict, significance_matrix


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def metrics_document(dataset_id: str, metrics: SignalMetrics, per_class=None) -> dict:
    doc = {
        "dataset": dataset_id,
        "me_bits_per_pixel": metrics.me_bits_per_pixel,
        "snr": metrics.snr,
        "snr_mode": metrics.snr_mode,
        "disk_radius": metrics.disk_radius,
        "image_count": metrics.image_count,
        "signal_mean": metrics.signal_mean,
        "signal_std": metrics.signal_std,
        "per_channel": [
            {
                "channel": c,
                "me_bits_per_pixel": metrics.per_channel_me[c],
                "snr": metrics.per_channel_snr[c],
                "mean": metrics.per_channel_mean[c],
                "std": metrics.per_channel_std[c],
            }
            for c in range(len(metrics.per_channel_me))
        ],
        "per_class": {},
    }
    for label, m in (per_class or {}).items():
        if isinstance(m, SignalMetrics):
            doc["per_class"][str(label)] = {
                "me_bits_per_pixel": m.me_bits_per_pixel, "snr": m.snr, "image_count": m.image_count,
            }
        else:
            doc["per_class"][str(label)] = {"error": f"{type(m).__name__}: {m}"}
    return doc


def metrics_markdown(doc: dict) -> str:
    lines = [
        f"## {doc['dataset']}: {doc['image_count']} images, disk radius {doc['disk_radius']}, "
        f"SNR mode {doc['snr_mode']}",
        "",
        "| Scope | ME (bits/pixel) | SNR |",
        "|---|---:|---:|",
        f"| all channels | {doc['me_bits_per_pixel']:.3f} | {doc['snr']:.3f} |",
    ]
    for ch in doc["per_channel"]:
        lines.append(f"| channel {ch['channel']} | {ch['me_bits_per_pixel']:.3f} | {ch['snr']:.3f} |")
    for label, m in doc["per_class"].items():
        if "error" in m:
            lines.append(f"| class {label} | - | {m['error']} |")
        else:
            lines.append(f"| class {label} | {m['me_bits_per_pixel']:.3f} | {m['snr']:.3f} |")
    return "\n".join(lines) + "\n"


def _load_split(dataset_id: str, data_dir, split: str) -> ImageDataset:
    if split == "all":
        tr = load_corpus(dataset_id, data_dir, "train")
        te = load_corpus(dataset_id, data_dir, "test")
        return ImageDataset(np.concatenate([tr.images, te.images]),
                            np.concatenate([tr.labels, te.labels]), name=f"{dataset_id}-all")
    return load_corpus(dataset_id, data_dir, split)


def cmd_analyze(args) -> int:
    ds = _load_split(args.dataset, args.data_dir, args.split)
    if args.limit:
        ds = ds.head(args.limit)
    metrics = compute_metrics(ds, args.disk_radius, args.snr_mode)
    per_class = per_class_metrics(ds, args.disk_radius, args.snr_mode) if args.per_class else None
    doc = metrics_document(args.dataset, metrics, per_class)
    doc["split"] = args.split
    text = json.dumps(doc, indent=2)
    if args.json:
        Path(args.json).write_text(text + "\n")
    md = metrics_markdown(doc)
    if args.markdown:
        Path(args.markdown).write_text(md)
    print(text)
    print(md, file=sys.stderr)
    return 0


def cmd_recommend(args) -> int:
    doc = json.loads(Path(args.metrics).read_text())
    metrics = SignalMetrics(me_bits_per_pixel=doc["me_bits_per_pixel"], snr=doc["snr"])
    geometry = dict(GEOMETRY.get(doc.get("dataset"), {}))
    for key, value in (("input_height", args.height), ("input_width", args.width),
                       ("input_channels", args.channels)):
        if value is not None:
            geometry[key] = value
    if len(geometry) != 3:
        raise SystemExit("input geometry unknown: pass --height/--width/--channels")
    spec = recommend_architecture(metrics, num_classes=args.classes, capacity_budget=args.budget, **geometry)
    verdict = classify_regime(metrics)
    out = spec.to_dict()
    out.update(description=spec.describe(), parameter_count=spec.parameter_count(),
               regime=verdict.regime.value, rationale=verdict.rationale_text)
    print(json.dumps(out, indent=2))
    return 0


def cmd_train(args) -> int:
    from .engine import build_network, save_parameters, train

    spec_doc = json.loads(Path(args.spec).read_text())
    spec_doc = {k: v for k, v in spec_doc.items() if k in ArchitectureSpec.__dataclass_fields__}
    spec = ArchitectureSpec.from_dict(spec_doc).validate()
    corpus = load_corpus(args.dataset, args.data_dir, "train")
    n_train, n_val = SPLITS[args.dataset]
    train_set, val_set = split_shuffle(corpus, n_train, n_val, args.split_seed)
    if args.subset:
        train_set = train_set.head(args.subset)
    test_set = load_corpus(args.dataset, args.data_dir, "test") if args.test else None
    network = build_network(spec, args.seed)
    result = train(network, train_set, val_set, args.steps, args.batch_size,
                   _ints(args.checkpoints) if args.checkpoints else [args.steps], args.seed,
                   args.lr, test_set, config_id=spec.describe(), log=logging.getLogger("signalgauge").info)
    if args.save_params:
        save_parameters(network, args.save_params)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_experiment(args) -> int:
    if args.dataset == "cifar10" and not args.extended:
        raise SystemExit("the CIFAR-10 grid is CPU-expensive; pass --extended to run it")
    plan = builtin_grid(args.dataset, steps=args.steps, seeds=tuple(_ints(args.seeds)),
                        subset=args.subset, use_test_set=args.test, batch_size=args.batch_size,
                        learning_rate=args.lr,
                        checkpoint_steps=tuple(_ints(args.checkpoints)) if args.checkpoints
                        else (10, 500, 1000, 1500, 2000))
    if args.configs:
        keep = set(args.configs.split(","))
        plan.configs = [(c, s) for c, s in plan.configs if c in keep]
    data = load_plan_data(plan, args.data_dir)
    report = run_plan(plan, data, args.out, workers=args.workers)
    write_outputs(report, args.out)
    print((Path(args.out) / "table.md").read_text())
    for key, msg in report.failures.items():
        print(f"FAILED {key}: {msg}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_stats(args) -> int:
    report = ExperimentReport.load(args.report)
    matrix = significance_matrix(report, args.pairing, args.checkpoint)
    out = Path(args.out or Path(args.report).parent)
    out.mkdir(parents=True, exist_ok=True)
    (out / "significance.md").write_text(matrix.to_markdown())
    (out / "significance.csv").write_text(matrix.to_csv())
    print(matrix.to_markdown())
    return 0


def cmd_verdict(args) -> int:
    matrices, metrics = [], []
    for rep_path, met_path in ((args.mnist_report, args.mnist_metrics), (args.cifar_report, args.cifar_metrics)):
        matrices.append(significance_matrix(ExperimentReport.load(rep_path), args.pairing))
        doc = json.loads(Path(met_path).read_text())
        metrics.append(SignalMetrics(me_bits_per_pixel=doc["me_bits_per_pixel"], snr=doc["snr"]))
    print(regime_verdict(matrices[0], matrices[1], metrics))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signalgauge", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="ME and SNR of a dataset")
    a.add_argument("--dataset", choices=DATASET_IDS, required=True)
    a.add_argument("--data-dir", required=True)
    a.add_argument("--split", choices=("train", "test", "all"), default="train")
    a.add_argument("--disk-radius", type=int, default=None, help="default: image side length")
    a.add_argument("--snr-mode", choices=SNR_MODES, default="pooled")
    a.add_argument("--limit", type=int, default=None, help="use only the first N images")
    a.add_argument("--no-per-class", dest="per_class", action="store_false")
    a.add_argument("--json", help="also write the JSON document here")
    a.add_argument("--markdown", help="also write a Markdown table here")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("recommend", help="architecture for measured metrics")
    r.add_argument("--metrics", required=True, help="JSON written by 'analyze'")
    r.add_argument("--budget", type=int, default=None, help="maximum parameter count")
    r.add_argument("--height", type=int)
    r.add_argument("--width", type=int)
    r.add_argument("--channels", type=int)
    r.add_argument("--classes", type=int, default=10)
    r.set_defaults(func=cmd_recommend)

    t = sub.add_parser("train", help="train one architecture")
    t.add_argument("--spec", required=True, help="ArchitectureSpec JSON")
    t.add_argument("--dataset", choices=DATASET_IDS, required=True)
    t.add_argument("--data-dir", required=True)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--checkpoints", default="10,500,1000,1500,2000")
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--subset", type=int, default=None)
    t.add_argument("--split-seed", type=int, default=1)
    t.add_argument("--test", action="store_true", help="report final accuracy on the official test set")
    t.add_argument("--save-params", help="write trained parameters to this file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("experiment", help="run the built-in configuration grid")
    e.add_argument("--dataset", choices=DATASET_IDS, required=True)
    e.add_argument("--data-dir", required=True)
    e.add_argument("--steps", type=int, default=2000)
    e.add_argument("--seeds", default="1,2,3")
    e.add_argument("--checkpoints", default=None)
    e.add_argument("--batch-size", type=int, default=32)
    e.add_argument("--lr", type=float, default=0.01)
    e.add_argument("--out", required=True)
    e.add_argument("--extended", action="store_true", help="allow the CIFAR-10 grid")
    e.add_argument("--subset", type=int, default=None, help="train on the first N training images")
    e.add_argument("--configs", default=None, help="comma-separated config ids to keep")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--test", action="store_true")
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("stats", help="pairwise paired t-tests over a report")
    s.add_argument("--report", required=True)
    s.add_argument("--pairing", choices=PAIRINGS, default="seeds")
    s.add_argument("--checkpoint", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_stats)

    v = sub.add_parser("verdict", help="join significance counts with regimes")
    v.add_argument("--mnist-report", required=True)
    v.add_argument("--cifar-report", required=True)
    v.add_argument("--mnist-metrics", required=True)
    v.add_argument("--cifar-metrics", required=True)
    v.add_argument("--pairing", choices=PAIRINGS, default="seeds")
    v.set_defaults(func=cmd_verdict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (SignalGaugeError, FileNotFoundError) as exc:
        print(f"signalgauge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
