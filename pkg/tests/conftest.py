import os
from pathlib import Path

import numpy as np
import pytest

from signalgauge.dataset_io import ImageDataset, corpus_files, load_corpus

DATA_DIR = Path(os.environ.get("SIGNALGAUGE_DATA_DIR", "/root/data"))
CACHE_DIR = Path(os.environ.get("SIGNALGAUGE_CACHE_DIR", "/root/cache"))


def pytest_addoption(parser):
    parser.addoption(
        "--extended", action="store_true", default=False,
        help="run the CIFAR-10 overflow experiment (long CPU run)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def corpus_available(dataset_id: str) -> bool:
    try:
        corpus_files(dataset_id, DATA_DIR, "train")
        corpus_files(dataset_id, DATA_DIR, "test")
    except FileNotFoundError:
        return False
    return True


@pytest.fixture(scope="session")
def mnist_train():
    if not corpus_available("mnist"):
        pytest.skip(f"MNIST files not found under {DATA_DIR}")
    return load_corpus("mnist", DATA_DIR, "train")


@pytest.fixture(scope="session")
def cifar_train():
    if not corpus_available("cifar10"):
        pytest.skip(f"CIFAR-10 batches not found under {DATA_DIR}")
    return load_corpus("cifar10", DATA_DIR, "train")


def random_dataset(n=12, h=6, w=6, c=1, seed=0, classes=10) -> ImageDataset:
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, h, w, c), dtype=np.uint8)
    labels = rng.integers(0, classes, size=n)
    return ImageDataset(images, labels, name=f"random{seed}")


def toy_digits(n=200, seed=0) -> ImageDataset:
    """Small 8x8 two-class set with a learnable signal (bright top vs bottom)."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    images = rng.integers(0, 60, size=(n, 8, 8, 1)).astype(np.uint8)
    for i, y in enumerate(labels):
        rows = slice(0, 4) if y == 0 else slice(4, 8)
        images[i, rows] += 150
    return ImageDataset(images, labels, name="toy")


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
