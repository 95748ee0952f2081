"""Loaders for the MNIST IDX and CIFAR-10 binary formats.

Both loaders produce an :class:`ImageDataset` whose rasters are stored as a
single ``uint8`` array of shape ``(N, H, W, C)`` (channels last, one RGB
triple per pixel for CIFAR-10). Datasets are immutable: the arrays are
flagged read-only after construction so they can be shared freely.

IDX layout (big-endian)::

    images: magic 0x00000803, count, rows, cols, then count*rows*cols bytes
    labels: magic 0x00000801, count, then count bytes

CIFAR-10 layout: 3073-byte records, ``<label><1024 R><1024 G><1024 B>``,
each plane stored row-major.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadLabel,
    BadMagic,
    CountMismatch,
    DatasetFormatError,
    EmptyDataset,
    InsufficientData,
    TruncatedFile,
    UnknownDataset,
)

IDX_IMAGE_MAGIC = 0x00000803  # 2051
IDX_LABEL_MAGIC = 0x00000801  # 2049

CIFAR_SIDE = 32
CIFAR_PLANE = CIFAR_SIDE * CIFAR_SIDE
CIFAR_RECORD = 1 + 3 * CIFAR_PLANE  # 3073

NUM_CLASSES = 10

DATASET_IDS = ("mnist", "cifar10")


@dataclass(frozen=True, eq=False)
class ImageDataset:
    """Labeled 8-bit rasters sharing one geometry.

    ``images`` has shape ``(N, height, width, channels)`` and dtype uint8;
    ``labels`` has shape ``(N,)``.
    """

    images: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    num_classes: int = NUM_CLASSES
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        images = np.asarray(self.images)
        labels = np.asarray(self.labels)
        if images.ndim == 3:
            images = images[..., np.newaxis]
        if images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, C), got shape {images.shape}")
        if images.dtype != np.uint8:
            if images.size and (images.min() < 0 or images.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            if not np.all(np.equal(np.mod(images, 1), 0)):
                raise ValueError("pixel values must be integers")
            images = images.astype(np.uint8)
        labels = labels.reshape(-1)
        if labels.shape[0] != images.shape[0]:
            raise CountMismatch(
                f"{images.shape[0]} images but {labels.shape[0]} labels"
            )
        if labels.size:
            if labels.min() < 0 or labels.max() >= self.num_classes:
                raise BadLabel(
                    f"labels must lie in [0, {self.num_classes}), "
                    f"got range [{labels.min()}, {labels.max()}]"
                )
        labels = labels.astype(np.uint8)
        if any(d < 1 for d in images.shape[1:]):
            raise ValueError(f"image dimensions must be positive, got {images.shape[1:]}")
        images = np.ascontiguousarray(images)
        images.flags.writeable = False
        labels = np.ascontiguousarray(labels)
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def height(self) -> int:
        return int(self.images.shape[1])

    @property
    def width(self) -> int:
        return int(self.images.shape[2])

    @property
    def channels(self) -> int:
        return int(self.images.shape[3])

    @property
    def pixel_count(self) -> int:
        """Pixels per image including channels (one FC neuron per pixel)."""
        return self.height * self.width * self.channels

    def take(self, indices: Sequence[int] | np.ndarray, name: str | None = None) -> "ImageDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return ImageDataset(
            self.images[idx], self.labels[idx], name or self.name, self.num_classes, dict(self.meta)
        )

    def head(self, n: int) -> "ImageDataset":
        return self.take(np.arange(min(n, len(self))))

    def by_label(self) -> dict[int, "ImageDataset"]:
        out = {}
        for label in np.unique(self.labels):
            idx = np.flatnonzero(self.labels == label)
            out[int(label)] = self.take(idx, name=f"{self.name}[class={int(label)}]")
        return out

    def equals(self, other: "ImageDataset") -> bool:
        return (
            self.images.shape == other.images.shape
            and np.array_equal(self.images, other.images)
            and np.array_equal(self.labels, other.labels)
        )


def _read(path: str | os.PathLike) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def parse_idx_images(buf: bytes) -> np.ndarray:
    if len(buf) < 16:
        raise TruncatedFile(f"IDX image header needs 16 bytes, file has {len(buf)}")
    magic, count, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise BadMagic(f"expected IDX image magic {IDX_IMAGE_MAGIC}, got {magic}")
    expected = count * rows * cols
    payload = len(buf) - 16
    if payload < expected:
        raise TruncatedFile(f"header declares {expected} pixel bytes, payload has {payload}")
    if payload > expected:
        raise DatasetFormatError(f"{payload - expected} trailing bytes after IDX image payload")
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise TruncatedFile(f"IDX label header needs 8 bytes, file has {len(buf)}")
    magic, count = struct.unpack(">II", buf[:8])
    if magic != IDX_LABEL_MAGIC:
        raise BadMagic(f"expected IDX label magic {IDX_LABEL_MAGIC}, got {magic}")
    payload = len(buf) - 8
    if payload < count:
        raise TruncatedFile(f"header declares {count} labels, payload has {payload}")
    if payload > count:
        raise DatasetFormatError(f"{payload - count} trailing bytes after IDX label payload")
    return np.frombuffer(buf, dtype=np.uint8, offset=8)


def load_mnist(image_file_path, label_file_path, name: str = "mnist") -> ImageDataset:
    """Load an IDX image/label file pair (optionally gzip-compressed)."""
    images = parse_idx_images(_read(image_file_path))
    labels = parse_idx_labels(_read(label_file_path))
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= NUM_CLASSES:
        raise BadLabel(f"label {labels.max()} outside [0, {NUM_CLASSES})")
    return ImageDataset(images[..., np.newaxis], labels, name=name)


def encode_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        if images.shape[3] != 1:
            raise ValueError("IDX images are single-channel")
        images = images[..., 0]
    n, rows, cols = images.shape
    return struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols) + images.tobytes(order="C")


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    return struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]) + labels.tobytes()


def parse_cifar10(buf: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(buf) % CIFAR_RECORD:
        raise TruncatedFile(
            f"CIFAR-10 batch length {len(buf)} is not a multiple of {CIFAR_RECORD}"
        )
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    if labels.size and labels.max() > 9:
        bad = int(np.flatnonzero(labels > 9)[0])
        raise BadLabel(f"record {bad} has label byte {labels[bad]}")
    planes = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    # planar on disk, interleaved in memory
    return planes.transpose(0, 2, 3, 1), labels


def load_cifar10(batch_file_paths: Iterable, name: str = "cifar10") -> ImageDataset:
    """Load and concatenate CIFAR-10 binary batches in argument order."""
    images, labels = [], []
    for path in batch_file_paths:
        x, y = parse_cifar10(_read(path))
        images.append(x)
        labels.append(y)
    if not images:
        raise EmptyDataset("no CIFAR-10 batch files given")
    return ImageDataset(np.concatenate(images), np.concatenate(labels), name=name)


def encode_cifar10(dataset: ImageDataset) -> bytes:
    if (dataset.height, dataset.width, dataset.channels) != (CIFAR_SIDE, CIFAR_SIDE, 3):
        raise ValueError("CIFAR-10 records hold 32x32x3 images")
    n = len(dataset)
    out = np.empty((n, CIFAR_RECORD), dtype=np.uint8)
    out[:, 0] = dataset.labels
    out[:, 1:] = dataset.images.transpose(0, 3, 1, 2).reshape(n, CIFAR_RECORD - 1)
    return out.tobytes()


def permutation(n: int, seed: int) -> np.ndarray:
    """Seeded Fisher-Yates permutation of ``range(n)`` driven by PCG64."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.permutation(n)


def split_shuffle(
    dataset: ImageDataset, train_count: int, val_count: int, seed: int
) -> tuple[ImageDataset, ImageDataset]:
    if train_count < 0 or val_count < 0:
        raise ValueError("split counts must be non-negative")
    if train_count + val_count > len(dataset):
        raise InsufficientData(
            f"requested {train_count}+{val_count} images from a dataset of {len(dataset)}"
        )
    order = permutation(len(dataset), seed)
    train = dataset.take(order[:train_count], name=f"{dataset.name}/train")
    val = dataset.take(order[train_count:train_count + val_count], name=f"{dataset.name}/validation")
    return train, val


# --- locating official files on disk -------------------------------------

_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
_CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


def _find(data_dir: Path, candidates: Sequence[str], subdirs: Sequence[str]) -> Path:
    for sub in ("", *subdirs):
        for name in candidates:
            p = data_dir / sub / name
            if p.is_file():
                return p
    raise FileNotFoundError(
        f"none of {list(candidates)} found under {data_dir} (searched {['.', *subdirs]})"
    )


def corpus_files(dataset_id: str, data_dir, split: str = "train") -> list[Path]:
    data_dir = Path(data_dir)
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    if dataset_id == "mnist":
        subdirs = ("mnist", "MNIST", "MNIST/raw")
        out = []
        for stem in _MNIST_FILES[split]:
            dotted = stem.replace("-idx", ".idx")
            out.append(_find(data_dir, (stem, stem + ".gz", dotted, dotted + ".gz"), subdirs))
        return out
    if dataset_id == "cifar10":
        subdirs = ("cifar10", "cifar-10-batches-bin", "cifar10/cifar-10-batches-bin")
        return [_find(data_dir, (name,), subdirs) for name in _CIFAR_FILES[split]]
    raise UnknownDataset(f"unknown dataset {dataset_id!r}; expected one of {DATASET_IDS}")


def load_corpus(dataset_id: str, data_dir, split: str = "train") -> ImageDataset:
    """Load an official corpus split ('train' or 'test') from ``data_dir``."""
    files = corpus_files(dataset_id, data_dir, split)
    name = f"{dataset_id}-{split}"
    if dataset_id == "mnist":
        return load_mnist(files[0], files[1], name=name)
    return load_cifar10(files, name=name)
