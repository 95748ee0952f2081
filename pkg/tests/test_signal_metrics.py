import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from signalgauge.dataset_io import ImageDataset
from signalgauge.errors import DomainError, EmptyDataset, EmptyImage, EmptySequence, ZeroNoise
from signalgauge.signal_metrics import (
    SignalMetrics,
    compute_metrics,
    dataset_me,
    dataset_snr,
    hartley_bound,
    local_entropy_image,
    local_entropy_map,
    per_class_metrics,
    per_image_entropy,
    pooled_from_parts,
    signal_mean,
    signal_std,
)

from conftest import random_dataset


def brute_entropy_map(img, r):
    """Direct per-pixel histogram over the clipped disk, no shared state."""
    h, w = img.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            vals = [
                int(img[yy, xx])
                for yy in range(max(0, y - r), min(h, y + r + 1))
                for xx in range(max(0, x - r), min(w, x + r + 1))
                if (yy - y) ** 2 + (xx - x) ** 2 <= r * r
            ]
            n = len(vals)
            out[y, x] = -sum(c / n * math.log2(c / n) for c in Counter(vals).values())
    return out


images_2d = arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9)))


# --- Hartley bound ----------------------------------------------------------------

@pytest.mark.parametrize("symbols,choices,bits", [(2, 1, 1.0), (256, 784, 6272.0), (1, 1000, 0.0)])
def test_hartley_bound(symbols, choices, bits):
    assert hartley_bound(symbols, choices) == bits


@pytest.mark.parametrize("args", [(0, 5), (5, 0), (-1, -1)])
def test_hartley_domain(args):
    with pytest.raises(DomainError):
        hartley_bound(*args)


# --- local entropy ---------------------------------------------------------------

@pytest.mark.parametrize("radius", [1, 3, 28])
def test_constant_image_has_zero_entropy(radius):
    assert local_entropy_image(np.full((28, 28), 77, np.uint8), radius) == 0.0


def test_checkerboard_two_by_two():
    img = np.array([[0, 255], [255, 0]], np.uint8)
    assert local_entropy_image(img, 2) == pytest.approx(1.0, abs=1e-15)


def test_random_image_matches_brute_force_radius_28():
    img = np.random.default_rng(7).integers(0, 256, (28, 28), dtype=np.uint8)
    fast = local_entropy_image(img, 28)
    slow = brute_entropy_map(img, 28).mean()
    assert abs(fast - slow) < 1e-9


@pytest.mark.parametrize("radius", [1, 2, 3, 5])
@pytest.mark.parametrize("seed", [0, 1])
def test_entropy_map_matches_brute_force_small_radii(radius, seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 6, (11, 13), dtype=np.uint8) * 40
    assert np.allclose(local_entropy_map(img, radius), brute_entropy_map(img, radius), atol=1e-9)


def test_matches_skimage_rank_entropy():
    skimage = pytest.importorskip("skimage")
    from skimage.filters.rank import entropy
    from skimage.morphology import disk

    img = np.random.default_rng(3).integers(0, 256, (20, 24), dtype=np.uint8)
    for r in (2, 6):
        ref = entropy(img, disk(r)).astype(np.float64)
        # the library stores a float32 map; compare at that precision
        assert np.allclose(local_entropy_map(img, r), ref, atol=1e-5)


def test_entropy_errors():
    with pytest.raises(EmptyImage):
        local_entropy_image(np.zeros((0, 3), np.uint8), 2)
    with pytest.raises(DomainError):
        local_entropy_image(np.zeros((3, 3), np.uint8), 0)


@settings(max_examples=60, deadline=None)
@given(images_2d, st.integers(1, 10))
def test_entropy_bounded_by_distinct_levels(img, r):
    e = local_entropy_image(img, r)
    assert 0.0 <= e <= math.log2(len(np.unique(img))) + 1e-12
    assert e <= 8.0


@settings(max_examples=60, deadline=None)
@given(images_2d, st.integers(1, 10), st.integers(1, 7))
def test_quantization_never_increases_entropy(img, r, bits):
    step = 2 ** (8 - bits)
    coarse = (img // step) * step
    assert local_entropy_image(coarse, r) <= local_entropy_image(img, r) + 1e-12


# --- dataset ME ----------------------------------------------------------------

def test_dataset_me_single_constant_image():
    ds = ImageDataset(np.full((1, 28, 28), 9, np.uint8), [0])
    m = dataset_me(ds)
    assert m.me_bits_per_pixel == 0.0
    assert m.disk_radius == 28


def test_dataset_me_is_mean_over_images_and_channels():
    ds = random_dataset(4, 7, 5, 3, seed=2)
    m = dataset_me(ds, radius=3)
    per_channel = [
        np.mean([local_entropy_image(ds.images[i, :, :, c], 3) for i in range(4)]) for c in range(3)
    ]
    assert np.allclose(m.per_channel_me, per_channel, atol=1e-12)
    assert m.me_bits_per_pixel == pytest.approx(np.mean(per_channel), abs=1e-12)
    assert per_image_entropy(ds, 3).shape == (4, 3)


def test_dataset_me_empty():
    with pytest.raises(EmptyDataset):
        dataset_me(ImageDataset(np.zeros((0, 4, 4), np.uint8), []))


# --- SNR -------------------------------------------------------------------------

def test_signal_mean_examples():
    assert signal_mean(np.full(50, 128, np.uint8)) == 128.0
    assert signal_mean([0, 255]) == 127.5
    with pytest.raises(EmptySequence):
        signal_mean([])


def test_signal_std_examples():
    assert signal_std(np.full(9, 3, np.uint8), 3.0) == 0.0
    assert signal_std([0, 255], 127.5) == 127.5
    with pytest.raises(EmptySequence):
        signal_std([], 0.0)


@pytest.mark.parametrize("dtype", [np.uint8, np.int64, np.float64])
def test_moments_match_summation_oracle(dtype):
    x = np.random.default_rng(11).integers(0, 256, 1000).astype(dtype)
    total = 0.0
    for v in x.tolist():
        total += v
    mu = total / len(x)
    assert abs(signal_mean(x) - mu) < 1e-9
    two_pass = math.sqrt(sum((v - mu) ** 2 for v in x.tolist()) / len(x))
    assert abs(signal_std(x, signal_mean(x)) - two_pass) < 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.integers(1, 300)))
def test_second_moment_identity(x):
    mu = signal_mean(x)
    sd = signal_std(x, mu)
    ms = float(np.mean(x.astype(np.float64) ** 2))
    assert sd * sd + mu * mu == pytest.approx(ms, rel=1e-6, abs=1e-9)


def test_snr_two_level_dataset():
    img = np.array([[0, 255], [255, 0]], np.uint8)
    ds = ImageDataset(np.stack([img, img]), [1, 2])
    m = dataset_snr(ds)
    assert m.snr == pytest.approx(1.0, abs=1e-15)
    assert m.signal_mean == 127.5 and m.signal_std == 127.5


def test_snr_constant_dataset():
    ds = ImageDataset(np.full((3, 4, 4), 50, np.uint8), [0, 1, 2])
    with pytest.raises(ZeroNoise):
        dataset_snr(ds)


def test_snr_rgb_is_mean_of_channel_ratios():
    ds = random_dataset(6, 5, 5, 3, seed=12)
    m = dataset_snr(ds)
    ratios = []
    for c in range(3):
        px = ds.images[..., c].astype(np.float64).ravel()
        ratios.append(px.mean() / px.std())
    assert np.allclose(m.per_channel_snr, ratios, rtol=1e-12)
    assert m.snr == pytest.approx(np.mean(ratios), rel=1e-12)
    for c in range(3):
        assert m.per_channel_snr[c] == pytest.approx(m.per_channel_mean[c] / m.per_channel_std[c])


def test_per_image_mode():
    ds = random_dataset(5, 4, 4, 1, seed=13)
    m = dataset_snr(ds, mode="per_image")
    px = ds.images.reshape(5, -1).astype(np.float64)
    assert m.snr == pytest.approx(np.mean(px.mean(1) / px.std(1)), rel=1e-12)
    with pytest.raises(ValueError):
        dataset_snr(ds, mode="median")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_snr_invariant_to_order_and_duplication(seed, copies):
    ds = random_dataset(7, 4, 4, 2, seed=seed)
    base = dataset_snr(ds).snr
    perm = np.random.default_rng(seed).permutation(7)
    assert dataset_snr(ds.take(perm)).snr == pytest.approx(base, rel=1e-12)
    dup = ImageDataset(np.concatenate([ds.images] * copies), np.concatenate([ds.labels] * copies))
    assert dataset_snr(dup).snr == pytest.approx(base, rel=1e-12)


# --- per class -----------------------------------------------------------------

def test_single_class_equals_whole():
    ds = ImageDataset(random_dataset(6, 5, 5, seed=14).images, [4] * 6)
    parts = per_class_metrics(ds, radius=5)
    assert list(parts) == [4]
    whole = compute_metrics(ds, radius=5)
    assert parts[4].me_bits_per_pixel == whole.me_bits_per_pixel
    assert parts[4].snr == whole.snr


def test_constant_class_is_isolated():
    noisy = random_dataset(3, 5, 5, seed=15).images
    flat = np.full((3, 5, 5, 1), 10, np.uint8)
    ds = ImageDataset(np.concatenate([noisy, flat]), [0, 0, 0, 1, 1, 1])
    parts = per_class_metrics(ds)
    assert isinstance(parts[1], ZeroNoise)
    assert isinstance(parts[0], SignalMetrics) and math.isfinite(parts[0].snr)


def test_pooled_recomputation_from_classes():
    ds = random_dataset(60, 6, 6, 3, seed=16)
    parts = [dataset_snr(p) for p in ds.by_label().values()]
    pooled = dataset_snr(ds)
    for c, (mu, sd) in enumerate(pooled_from_parts(parts)):
        assert mu / sd == pytest.approx(pooled.per_channel_snr[c], abs=1e-6)


def test_metrics_dict_round_trip():
    m = compute_metrics(random_dataset(3, 5, 5, seed=17), radius=2)
    assert SignalMetrics.from_dict(m.to_dict()) == m


# --- official corpora ------------------------------------------------------------

def test_mnist_per_class_pooled_recombination(mnist_train):
    parts = [dataset_snr(p) for p in mnist_train.by_label().values()]
    (mu, sd), = pooled_from_parts(parts)
    assert mu / sd == pytest.approx(dataset_snr(mnist_train).snr, abs=1e-6)
