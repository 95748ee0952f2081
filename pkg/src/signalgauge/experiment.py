"""The published configuration grid, seeded repetitions and result tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .architecture import ArchitectureSpec
from .dataset_io import ImageDataset, load_corpus, split_shuffle
from .engine.network import build_network
from .engine.training import DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE, RunResult, train
from .errors import SignalGaugeError, TooFewSamples, UnknownDataset

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (10, 500, 1000, 1500, 2000)
DEFAULT_SEEDS = (1, 2, 3)

# (train, validation) counts carved out of each official training corpus
SPLITS = {"mnist": (50_000, 10_000), "cifar10": (40_000, 10_000)}
GEOMETRY = {
    "mnist": dict(input_height=28, input_width=28, input_channels=1),
    "cifar10": dict(input_height=32, input_width=32, input_channels=3),
}

_GRID = {
    "mnist": [
        ((32,), (784,)),
        ((32, 64), (784,)),
        ((32,), (784, 392)),
        ((32, 64), (784, 392)),
        ((32,), (784, 512)),
        ((32, 64), (784, 512)),
        ((32,), (784, 784)),
        ((32, 64), (784, 784)),
    ],
    "cifar10": [
        ((32,), (3072,)),
        ((32, 64), (3072, 3072)),
        ((32, 64), (3072, 1536)),
        ((32, 64, 128), (3072, 1024, 512)),
        ((32, 64, 128), (3072, 1536, 768)),
        ((32, 64, 128), (3072, 3072, 3072)),
    ],
}


def config_id(spec: ArchitectureSpec) -> str:
    return "conv{}_fc{}".format(
        "-".join(map(str, spec.conv_blocks)), "-".join(map(str, spec.fc_layers))
    )


@dataclass
class ExperimentPlan:
    dataset_id: str
    configs: list  # [(config_id, ArchitectureSpec)]
    steps: int = 2000
    checkpoint_steps: tuple = DEFAULT_CHECKPOINTS
    seeds: tuple = DEFAULT_SEEDS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    subset: int | None = None
    split_seed: int = 1
    use_test_set: bool = False

    def __post_init__(self):
        ids = [c for c, _ in self.configs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"config ids must be unique: {ids}")
        if not self.seeds:
            raise ValueError("a plan needs at least one seed")
        self.checkpoint_steps = tuple(int(s) for s in self.checkpoint_steps if s <= self.steps)
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def config_ids(self) -> list[str]:
        return [c for c, _ in self.configs]

    def spec(self, cid: str) -> ArchitectureSpec:
        return dict(self.configs)[cid]

    def run_key(self, cid: str, seed: int) -> dict:
        return {
            "dataset": self.dataset_id,
            "spec": self.spec(cid).to_dict(),
            "steps": self.steps,
            "checkpoints": list(self.checkpoint_steps),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "subset": self.subset,
            "split_seed": self.split_seed,
            "test_set": self.use_test_set,
            "seed": seed,
        }

    def run_digest(self, cid: str, seed: int) -> str:
        blob = json.dumps(self.run_key(cid, seed), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:20]


def builtin_grid(dataset_id: str, **plan_options) -> ExperimentPlan:
    """Every published configuration for ``mnist`` (8) or ``cifar10`` (6)."""
    if dataset_id not in _GRID:
        raise UnknownDataset(f"no built-in grid for {dataset_id!r}; expected one of {sorted(_GRID)}")
    configs = []
    for conv, fc in _GRID[dataset_id]:
        spec = ArchitectureSpec(conv_blocks=conv, fc_layers=fc, **GEOMETRY[dataset_id]).validate()
        configs.append((config_id(spec), spec))
    return ExperimentPlan(dataset_id=dataset_id, configs=configs, **plan_options)


@dataclass
class ExperimentReport:
    dataset_id: str
    config_ids: list
    descriptions: dict
    checkpoint_steps: list
    runs: dict  # config_id -> [RunResult]
    failures: dict = field(default_factory=dict)  # "config_id/seed" -> message
    final_split: str = "validation"
    comparisons: list = field(default_factory=list)  # TTestReport dicts

    def mean_checkpoint_accuracy(self, cid: str) -> list[float]:
        runs = sorted(self.runs[cid], key=lambda r: r.seed)
        if not runs:
            return []
        cols = zip(*(r.checkpoint_accuracy for r in runs))
        return [math.fsum(sorted(col)) / len(runs) for col in cols]

    def mean_final_accuracy(self, cid: str) -> float:
        runs = self.runs[cid]
        return math.fsum(sorted(r.final_test_accuracy for r in runs)) / len(runs)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "config_ids": list(self.config_ids),
            "descriptions": dict(self.descriptions),
            "checkpoint_steps": list(self.checkpoint_steps),
            "runs": {c: [r.to_dict() for r in sorted(rs, key=lambda r: r.seed)] for c, rs in self.runs.items()},
            "failures": dict(self.failures),
            "final_split": self.final_split,
            "comparisons": list(self.comparisons),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            dataset_id=d["dataset_id"],
            config_ids=list(d["config_ids"]),
            descriptions=dict(d["descriptions"]),
            checkpoint_steps=list(d["checkpoint_steps"]),
            runs={c: [RunResult.from_dict(r) for r in rs] for c, rs in d["runs"].items()},
            failures=dict(d.get("failures", {})),
            final_split=d.get("final_split", "validation"),
            comparisons=list(d.get("comparisons", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class PlanData:
    train: ImageDataset
    validation: ImageDataset
    test: ImageDataset | None = None


def load_plan_data(plan: ExperimentPlan, data_dir) -> PlanData:
    corpus = load_corpus(plan.dataset_id, data_dir, "train")
    n_train, n_val = SPLITS[plan.dataset_id]
    train_set, val_set = split_shuffle(corpus, n_train, n_val, plan.split_seed)
    if plan.subset is not None:
        train_set = train_set.head(plan.subset)
    test_set = load_corpus(plan.dataset_id, data_dir, "test") if plan.use_test_set else None
    return PlanData(train_set, val_set, test_set)


_WORKER_DATA: PlanData | None = None


def _init_worker(data: PlanData) -> None:
    global _WORKER_DATA
    _WORKER_DATA = data


def _execute(plan: ExperimentPlan, cid: str, seed: int, data: PlanData | None = None) -> RunResult:
    data = data or _WORKER_DATA
    network = build_network(plan.spec(cid), seed)
    return train(
        network,
        data.train,
        data.validation,
        steps=plan.steps,
        batch_size=plan.batch_size,
        checkpoint_steps=plan.checkpoint_steps,
        seed=seed,
        learning_rate=plan.learning_rate,
        test_set=data.test,
        config_id=cid,
        log=log.info,
    )


def run_plan(plan: ExperimentPlan, data: PlanData, out_dir, workers: int = 1) -> ExperimentReport:
    """Run every (config, seed) pair, reusing results already on disk.

    Each finished run is written to ``out_dir/runs/<digest>.json`` where the
    digest covers every setting that determines the run. A run that raises
    is recorded under ``failures`` and does not stop the plan.
    """
    run_dir = Path(out_dir) / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    results: dict[tuple[str, int], RunResult] = {}
    todo = []
    for cid in plan.config_ids:
        for seed in plan.seeds:
            path = run_dir / f"{plan.run_digest(cid, seed)}.json"
            if path.is_file():
                results[(cid, seed)] = RunResult.from_dict(json.loads(path.read_text())["result"])
            else:
                todo.append((cid, seed, path))

    failures: dict[str, str] = {}

    def store(cid, seed, path, result):
        results[(cid, seed)] = result
        payload = {"key": plan.run_key(cid, seed), "result": result.to_dict()}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=1, sort_keys=True))
        tmp.replace(path)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(data,)) as pool:
            futures = {pool.submit(_execute, plan, cid, seed): (cid, seed, path) for cid, seed, path in todo}
            for fut, (cid, seed, path) in futures.items():
                try:
                    store(cid, seed, path, fut.result())
                except (SignalGaugeError, FloatingPointError, ValueError) as exc:
                    failures[f"{cid}/{seed}"] = f"{type(exc).__name__}: {exc}"
    else:
        for cid, seed, path in todo:
            try:
                store(cid, seed, path, _execute(plan, cid, seed, data))
            except (SignalGaugeError, FloatingPointError, ValueError) as exc:
                log.warning("run %s seed %s failed: %s", cid, seed, exc)
                failures[f"{cid}/{seed}"] = f"{type(exc).__name__}: {exc}"

    runs = {cid: [results[(cid, s)] for s in plan.seeds if (cid, s) in results] for cid in plan.config_ids}
    report = ExperimentReport(
        dataset_id=plan.dataset_id,
        config_ids=plan.config_ids,
        descriptions={cid: plan.spec(cid).describe() for cid in plan.config_ids},
        checkpoint_steps=list(plan.checkpoint_steps),
        runs=runs,
        failures=failures,
        final_split="test" if plan.use_test_set else "validation",
    )
    report.comparisons = _comparisons(report)
    return report


def _comparisons(report: ExperimentReport) -> list[dict]:
    from .stats import significance_matrix

    complete = [c for c in report.config_ids if report.runs[c]]
    counts = {len(report.runs[c]) for c in complete}
    if len(complete) < 2 or len(counts) != 1 or counts.pop() < 2:
        return []
    sub = ExperimentReport(report.dataset_id, complete, report.descriptions,
                           report.checkpoint_steps, {c: report.runs[c] for c in complete})
    try:
        return [t.to_dict() for t in significance_matrix(sub, "seeds").tests()]
    except TooFewSamples:
        return []


# --- tables -----------------------------------------------------------------


def _percent(x: float) -> str:
    return f"{100.0 * x:.1f}"


def table_rows(report: ExperimentReport) -> list[dict]:
    rows = []
    for cid in report.config_ids:
        if not report.runs.get(cid):
            continue
        rows.append({
            "configuration": report.descriptions[cid],
            "config_id": cid,
            "seeds": len(report.runs[cid]),
            "accuracy_percent": [_percent(a) for a in report.mean_checkpoint_accuracy(cid)],
            "final_percent": _percent(report.mean_final_accuracy(cid)),
        })
    if not rows:
        raise ValueError("report has no completed runs")
    return rows


def emit_table(report: ExperimentReport, format: str = "markdown") -> str:
    """Render mean accuracies (percent, one decimal) per configuration."""
    rows = table_rows(report)
    steps = list(report.checkpoint_steps)
    final_label = f"Final ({report.final_split})"
    if format == "markdown":
        head = ["Configuration", *[f"Acc. % @ {s}" for s in steps], final_label]
        lines = [
            f"{report.dataset_id} (mean of seeds; checkpoints are optimizer steps)",
            "",
            "| " + " | ".join(head) + " |",
            "|" + "---|" + "---:|" * (len(head) - 1),
        ]
        for r in rows:
            lines.append("| " + " | ".join([r["configuration"], *r["accuracy_percent"], r["final_percent"]]) + " |")
        return "\n".join(lines) + "\n"
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["configuration", "config_id", "seeds", *[f"step_{s}" for s in steps], "final"])
        for r in rows:
            w.writerow([r["configuration"], r["config_id"], r["seeds"], *r["accuracy_percent"], r["final_percent"]])
        return buf.getvalue()
    if format == "json":
        doc = {
            "dataset": report.dataset_id,
            "checkpoint_steps": steps,
            "final_split": report.final_split,
            "rows": [
                {
                    "configuration": r["configuration"],
                    "config_id": r["config_id"],
                    "seeds": r["seeds"],
                    "accuracy_percent": [float(v) for v in r["accuracy_percent"]],
                    "final_percent": float(r["final_percent"]),
                }
                for r in rows
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown table format {format!r}")


def write_outputs(report: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.md").write_text(emit_table(report, "markdown"))
    (out / "table.csv").write_text(emit_table(report, "csv"))
    report.save(out / "report.json")
