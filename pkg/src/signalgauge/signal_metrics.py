"""Amount (maximum entropy) and quality (signal-to-noise ratio) of image data.

Two entropy quantities live here:

* :func:`hartley_bound` -- the information ceiling ``choices * log2(symbols)``
  of a message made of ``choices`` independent picks from ``symbols`` symbols.
* :func:`local_entropy_image` -- the disk-neighbourhood estimate: for every
  pixel, the Shannon entropy of the gray-level histogram inside a disk
  centred on it (clipped at the borders), averaged over the image. This is
  the quantity reported as a dataset's ME in bits per pixel.

SNR is the mean pixel intensity divided by the population standard
deviation of the intensities, computed per channel and averaged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from numba import njit

from .dataset_io import ImageDataset
from .errors import (
    DomainError,
    EmptyDataset,
    EmptyImage,
    EmptySequence,
    SignalGaugeError,
    ZeroNoise,
)

SNR_MODES = ("pooled", "per_image")
LEVELS = 256


@dataclass
class SignalMetrics:
    """ME and SNR for a dataset or class; unset measures stay ``None``."""

    me_bits_per_pixel: Optional[float] = None
    snr: Optional[float] = None
    per_channel_me: Optional[list] = None
    per_channel_snr: Optional[list] = None
    signal_mean: Optional[float] = None
    signal_std: Optional[float] = None
    image_count: int = 0
    per_channel_mean: Optional[list] = None
    per_channel_std: Optional[list] = None
    pixels_per_channel: int = 0
    disk_radius: Optional[int] = None
    snr_mode: Optional[str] = None
    name: str = ""

    def merged(self, other: "SignalMetrics") -> "SignalMetrics":
        """Fill every unset field of ``self`` from ``other``."""
        values = {}
        for f in fields(self):
            mine = getattr(self, f.name)
            values[f.name] = getattr(other, f.name) if mine in (None, 0, "") else mine
        return SignalMetrics(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SignalMetrics":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def hartley_bound(symbols: int, choices: int) -> float:
    """Bits needed for ``choices`` independent picks among ``symbols`` symbols.

    A 28x28 8-bit grayscale image is 784 choices over 256 symbols:
    ``hartley_bound(256, 784) == 6272.0``.
    """
    if symbols < 1 or choices < 1:
        raise DomainError(f"symbols and choices must be >= 1, got ({symbols}, {choices})")
    return choices * math.log2(symbols)


# --- local entropy ---------------------------------------------------------


def disk_half_widths(radius: int) -> np.ndarray:
    """Half-width of each row of the disk ``dx**2 + dy**2 <= radius**2``.

    Entry ``i`` belongs to row offset ``dy = i - radius``.
    """
    dy = np.arange(-radius, radius + 1)
    return np.floor(np.sqrt(radius * radius - dy * dy) + 1e-9).astype(np.int64)


def _xlogx_table(n: int) -> np.ndarray:
    c = np.arange(n + 1, dtype=np.float64)
    out = np.zeros_like(c)
    out[1:] = c[1:] * np.log2(c[1:])
    return out


@njit(cache=True)
def _entropy_map(img, half, radius, xlogx, out):
    # Sliding histogram along each row; S = sum(c * log2 c) is updated per bin
    # change and rebuilt at the start of every row to bound rounding drift.
    H, W = img.shape
    hist = np.zeros(256, np.int64)
    for y in range(H):
        hist[:] = 0
        n = 0
        distinct = 0
        s = 0.0
        for i in range(2 * radius + 1):
            yy = y + i - radius
            if yy < 0 or yy >= H:
                continue
            w = half[i]
            hi = min(W - 1, w)
            for xx in range(0, hi + 1):
                v = img[yy, xx]
                c = hist[v]
                if c == 0:
                    distinct += 1
                s += xlogx[c + 1] - xlogx[c]
                hist[v] = c + 1
                n += 1
        for x in range(W):
            if x > 0:
                for i in range(2 * radius + 1):
                    yy = y + i - radius
                    if yy < 0 or yy >= H:
                        continue
                    w = half[i]
                    xo = x - 1 - w
                    if xo >= 0:
                        v = img[yy, xo]
                        c = hist[v]
                        s += xlogx[c - 1] - xlogx[c]
                        hist[v] = c - 1
                        n -= 1
                        if c == 1:
                            distinct -= 1
                    xn = x + w
                    if xn < W:
                        v = img[yy, xn]
                        c = hist[v]
                        if c == 0:
                            distinct += 1
                        s += xlogx[c + 1] - xlogx[c]
                        hist[v] = c + 1
                        n += 1
            if distinct <= 1:
                out[y, x] = 0.0
            else:
                e = math.log2(n) - s / n
                out[y, x] = e if e > 0.0 else 0.0


@njit(cache=True)
def _mean_entropy_stack(stack, half, radius, xlogx):
    N, H, W = stack.shape
    res = np.empty(N)
    scratch = np.empty((H, W))
    for k in range(N):
        _entropy_map(stack[k], half, radius, xlogx, scratch)
        # fixed-order Neumaier sum over the map
        total = 0.0
        comp = 0.0
        for y in range(H):
            for x in range(W):
                v = scratch[y, x]
                t = total + v
                if abs(total) >= abs(v):
                    comp += (total - t) + v
                else:
                    comp += (v - t) + total
                total = t
        res[k] = (total + comp) / (H * W)
    return res


def _as_levels(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim != 2:
        raise ValueError(f"expected a single-channel 2-D raster, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyImage("image has no pixels")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() >= LEVELS or not np.all(np.mod(arr, 1) == 0):
            raise ValueError("gray levels must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def _check_radius(radius: int) -> int:
    if int(radius) != radius or radius < 1:
        raise DomainError(f"disk radius must be an integer >= 1, got {radius}")
    return int(radius)


def local_entropy_map(image, neighborhood_radius: int) -> np.ndarray:
    """Per-pixel entropy (bits) of the gray levels inside a clipped disk."""
    img = _as_levels(image)
    r = _check_radius(neighborhood_radius)
    out = np.empty(img.shape, dtype=np.float64)
    _entropy_map(img, disk_half_widths(r), r, _xlogx_table(img.size), out)
    return out


def local_entropy_image(image, neighborhood_radius: int) -> float:
    """Mean over pixels of the disk-neighbourhood gray-level entropy, in bits."""
    img = _as_levels(image)
    r = _check_radius(neighborhood_radius)
    stack = img[np.newaxis]
    return float(_mean_entropy_stack(stack, disk_half_widths(r), r, _xlogx_table(img.size))[0])


def per_image_entropy(dataset: ImageDataset, radius: int | None = None) -> np.ndarray:
    """Array ``(N, C)`` of mean local entropy per image and channel."""
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.name} has no images")
    r = _check_radius(radius if radius is not None else default_radius(dataset))
    half = disk_half_widths(r)
    table = _xlogx_table(dataset.height * dataset.width)
    out = np.empty((len(dataset), dataset.channels))
    for c in range(dataset.channels):
        stack = np.ascontiguousarray(dataset.images[..., c])
        out[:, c] = _mean_entropy_stack(stack, half, r, table)
    return out


def default_radius(dataset: ImageDataset) -> int:
    """Disk radius equal to the image side length."""
    return max(dataset.height, dataset.width)


def dataset_me(dataset: ImageDataset, radius: int | None = None) -> SignalMetrics:
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.name} has no images")
    r = radius if radius is not None else default_radius(dataset)
    values = per_image_entropy(dataset, r)
    per_channel = [math.fsum(values[:, c]) / len(dataset) for c in range(dataset.channels)]
    return SignalMetrics(
        me_bits_per_pixel=math.fsum(per_channel) / len(per_channel),
        per_channel_me=per_channel,
        image_count=len(dataset),
        pixels_per_channel=len(dataset) * dataset.height * dataset.width,
        disk_radius=int(r),
        name=dataset.name,
    )


# --- signal-to-noise ratio -------------------------------------------------


def _u8_histogram(pixels) -> np.ndarray | None:
    arr = np.asarray(pixels)
    if arr.dtype == np.uint8:
        return np.bincount(arr.ravel(), minlength=LEVELS)
    return None


def _hist_mean(counts: np.ndarray) -> float:
    n = int(counts.sum())
    total = int(np.dot(np.arange(LEVELS, dtype=np.int64), counts.astype(np.int64)))
    return total / n


def _hist_std(counts: np.ndarray, mean: float) -> float:
    n = int(counts.sum())
    dev = np.arange(LEVELS, dtype=np.float64) - mean
    return math.sqrt(math.fsum(counts * dev * dev) / n)


def signal_mean(pixels) -> float:
    """Arithmetic mean of pixel intensities, accumulated exactly."""
    arr = np.asarray(pixels)
    if arr.size == 0:
        raise EmptySequence("no pixels")
    counts = _u8_histogram(arr)
    if counts is not None:
        return _hist_mean(counts)
    if np.issubdtype(arr.dtype, np.integer):
        return int(arr.sum(dtype=np.int64)) / arr.size
    return math.fsum(arr.ravel().astype(np.float64)) / arr.size


def signal_std(pixels, mean: float) -> float:
    """Population standard deviation (divisor n) about ``mean``."""
    arr = np.asarray(pixels)
    if arr.size == 0:
        raise EmptySequence("no pixels")
    counts = _u8_histogram(arr)
    if counts is not None:
        return _hist_std(counts, mean)
    dev = arr.ravel().astype(np.float64) - mean
    return math.sqrt(math.fsum(dev * dev) / arr.size)


def dataset_snr(dataset: ImageDataset, mode: str = "pooled") -> SignalMetrics:
    """Per-channel SNR averaged over channels.

    ``pooled`` treats every pixel of a channel across all images as one
    sample. ``per_image`` computes the SNR of each image channel and
    averages, skipping flat images (their SNR is undefined).
    """
    if mode not in SNR_MODES:
        raise ValueError(f"mode must be one of {SNR_MODES}, got {mode!r}")
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.name} has no images")
    means, stds, snrs = [], [], []
    for c in range(dataset.channels):
        counts = np.bincount(dataset.images[..., c].ravel(), minlength=LEVELS)
        mu = _hist_mean(counts)
        sd = _hist_std(counts, mu)
        if sd == 0.0:
            raise ZeroNoise(f"{dataset.name}: channel {c} has zero pixel variance")
        means.append(mu)
        stds.append(sd)
        if mode == "pooled":
            snrs.append(mu / sd)
        else:
            snrs.append(_mean_per_image_snr(dataset.images[..., c]))
    all_counts = np.bincount(dataset.images.ravel(), minlength=LEVELS)
    mu_all = _hist_mean(all_counts)
    return SignalMetrics(
        snr=math.fsum(snrs) / len(snrs),
        per_channel_snr=snrs,
        signal_mean=mu_all,
        signal_std=_hist_std(all_counts, mu_all),
        image_count=len(dataset),
        per_channel_mean=means,
        per_channel_std=stds,
        pixels_per_channel=len(dataset) * dataset.height * dataset.width,
        snr_mode=mode,
        name=dataset.name,
    )


def _mean_per_image_snr(plane: np.ndarray) -> float:
    flat = plane.reshape(plane.shape[0], -1).astype(np.float64)
    mu = flat.mean(axis=1)
    sd = np.sqrt(((flat - mu[:, None]) ** 2).mean(axis=1))
    ok = sd > 0
    if not ok.any():
        raise ZeroNoise("every image is flat")
    return math.fsum(mu[ok] / sd[ok]) / int(ok.sum())


def compute_metrics(
    dataset: ImageDataset, radius: int | None = None, snr_mode: str = "pooled"
) -> SignalMetrics:
    """Both ME and SNR for ``dataset``."""
    return dataset_me(dataset, radius).merged(dataset_snr(dataset, snr_mode))


def per_class_metrics(
    dataset: ImageDataset, radius: int | None = None, snr_mode: str = "pooled"
) -> dict[int, SignalMetrics | SignalGaugeError]:
    """Metrics for each label present; a failing class maps to its error."""
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.name} has no images")
    r = radius if radius is not None else default_radius(dataset)
    out: dict[int, SignalMetrics | SignalGaugeError] = {}
    for label, part in dataset.by_label().items():
        try:
            out[label] = compute_metrics(part, r, snr_mode)
        except SignalGaugeError as exc:
            out[label] = exc
    return out


def pooled_from_parts(parts: list[SignalMetrics]) -> list[tuple[float, float]]:
    """Recombine per-part channel (mean, std) into pooled (mean, std).

    Uses the parallel-variance identity, so it needs only each part's pixel
    count, mean and std per channel.
    """
    channels = len(parts[0].per_channel_mean)
    out = []
    for c in range(channels):
        n = [p.pixels_per_channel for p in parts]
        mu = [p.per_channel_mean[c] for p in parts]
        sd = [p.per_channel_std[c] for p in parts]
        total = sum(n)
        mean = math.fsum(ni * mi for ni, mi in zip(n, mu)) / total
        second = math.fsum(ni * (si * si + (mi - mean) ** 2) for ni, mi, si in zip(n, mu, sd))
        out.append((mean, math.sqrt(second / total)))
    return out
