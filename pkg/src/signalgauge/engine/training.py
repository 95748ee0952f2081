"""Seeded mini-batch SGD training and accuracy evaluation."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset_io import ImageDataset
from ..errors import EmptyDataset
from . import ops
from .network import DTYPE, Network, sgd_step

DEFAULT_LEARNING_RATE = 0.01
DEFAULT_BATCH_SIZE = 32


@dataclass
class RunResult:
    config_id: str
    seed: int
    checkpoint_steps: list
    checkpoint_accuracy: list
    final_test_accuracy: float
    wall_time_seconds: float
    final_split: str = "validation"
    checkpoint_loss: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.checkpoint_steps) != len(self.checkpoint_accuracy):
            raise ValueError("checkpoint steps and accuracies differ in length")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


def as_input(images: np.ndarray) -> np.ndarray:
    """uint8 (N, H, W, C) rasters -> float32 (N, C, H, W) in [0, 1]."""
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=DTYPE) / DTYPE(255.0)


def evaluate(network: Network, dataset: ImageDataset, batch_size: int = 500) -> float:
    """Fraction of images whose argmax prediction equals the label."""
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.name} has no images")
    correct = 0
    for i in range(0, len(dataset), batch_size):
        x = as_input(dataset.images[i:i + batch_size])
        pred = network.forward(x).argmax(axis=1)
        correct += int(np.count_nonzero(pred == dataset.labels[i:i + batch_size]))
    return correct / len(dataset)


def batch_loss(network: Network, x: np.ndarray, y: np.ndarray) -> float:
    """Loss of a batch in eval mode (no dropout, no caching)."""
    loss, _ = ops.softmax_cross_entropy(network.forward(x), y.astype(np.int64))
    return loss


def train_step(network: Network, x, y, learning_rate: float, rng=None) -> float:
    logits = network.forward(x, train=True, rng=rng)
    loss, grad = ops.softmax_cross_entropy(logits, y.astype(np.int64))
    network.backward(grad.astype(logits.dtype, copy=False))
    sgd_step(network, network.gradients(), learning_rate)
    return loss


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n)
        for i in range(0, n - batch_size + 1 if n >= batch_size else 1, batch_size):
            yield order[i:i + batch_size]


def train(
    network: Network,
    train_set: ImageDataset,
    val_set: ImageDataset,
    steps: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    checkpoint_steps=(),
    seed: int = 0,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    test_set: ImageDataset | None = None,
    config_id: str = "",
    log=None,
) -> RunResult:
    """Train ``network`` in place for ``steps`` SGD updates.

    Validation accuracy is recorded after each step count in
    ``checkpoint_steps``. The final accuracy is measured on ``test_set`` when
    given, otherwise on ``val_set``; ``final_split`` records which.
    """
    if len(train_set) == 0 and steps > 0:
        raise EmptyDataset("training set is empty")
    if len(val_set) == 0:
        raise EmptyDataset("validation set is empty")
    checkpoints = [int(s) for s in checkpoint_steps]
    if checkpoints != sorted(checkpoints) or (checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > steps)):
        raise ValueError(f"checkpoint steps must be sorted within [0, {steps}]: {checkpoints}")

    start = time.perf_counter()
    batch_rng = np.random.default_rng([seed, 0])
    drop_rng = np.random.default_rng([seed, 1])
    accs, losses = [], []
    window: list[float] = []
    pending = list(checkpoints)

    def record(step):
        while pending and pending[0] == step:
            pending.pop(0)
            accs.append(evaluate(network, val_set))
            losses.append(math.fsum(window) / len(window) if window else float("nan"))
            window.clear()
            if log:
                log(f"{config_id} seed={seed} step={step} val_acc={accs[-1]:.4f} loss={losses[-1]:.4f}")

    record(0)
    if steps > 0:
        batches = _batches(len(train_set), batch_size, batch_rng)
        for step in range(1, steps + 1):
            idx = np.sort(next(batches))
            x = as_input(train_set.images[idx])
            loss = train_step(network, x, train_set.labels[idx], learning_rate, drop_rng)
            if not math.isfinite(loss):
                raise FloatingPointError(f"{config_id} seed={seed}: non-finite loss at step {step}")
            window.append(loss)
            record(step)
    for name, p in network.named_parameters().items():
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"{config_id} seed={seed}: non-finite values in {name}")
    if test_set is not None:
        final, split = evaluate(network, test_set), "test"
    elif checkpoints and checkpoints[-1] == steps:
        final, split = accs[-1], "validation"
    else:
        final, split = evaluate(network, val_set), "validation"
    return RunResult(
        config_id=config_id,
        seed=seed,
        checkpoint_steps=checkpoints,
        checkpoint_accuracy=accs,
        final_test_accuracy=final,
        wall_time_seconds=time.perf_counter() - start,
        final_split=split,
        checkpoint_loss=losses,
    )
