"""Information-regime classification and CNN sizing.

A dataset's ME (amount of signal) and SNR (quality of signal) place it in one
of three regimes:

* ``UNDERFLOW`` -- little, noisy signal. Extra depth or breadth buys nothing,
  so a shallow network (two conv blocks) is recommended.
* ``OVERFLOW`` -- rich, clean signal that a shallow network cannot fully
  extract or abstract. Three or more conv blocks are recommended.
* ``BALANCED`` -- anything in between, including mixed evidence.

Convolution widths start at 32 kernels and double per block. Fully connected
layers start at one neuron per input value (height * width * channels) and
halve with each further layer.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from enum import Enum

from .errors import BudgetExceeded, GeometryExhausted, ShapeMismatch
from .signal_metrics import SignalMetrics


class InformationRegime(str, Enum):
    UNDERFLOW = "underflow"
    BALANCED = "balanced"
    OVERFLOW = "overflow"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            for member in cls:
                if member.value == value.lower():
                    return member
        return None

    @property
    def rank(self) -> int:
        return {"underflow": 0, "balanced": 1, "overflow": 2}[self.value]


@dataclass(frozen=True)
class RegimeVerdict:
    regime: InformationRegime
    rationale_text: str


@dataclass(frozen=True)
class Anchor:
    me: float
    snr: float


# published dataset measures: MNIST (low) and CIFAR-10 (high)
MNIST_ANCHOR = Anchor(me=3.139, snr=0.44)
CIFAR10_ANCHOR = Anchor(me=6.612, snr=2.40)


@dataclass(frozen=True)
class RegimeBands:
    """Band edges derived from a low and a high anchor.

    In log space the interval between the anchors is split at its midpoint
    (the geometric mean); the low band ends halfway between the low anchor
    and that midpoint, the high band starts halfway between the midpoint and
    the high anchor. A value sitting at the midpoint is therefore in neither
    band.
    """

    low: Anchor = MNIST_ANCHOR
    high: Anchor = CIFAR10_ANCHOR

    def __post_init__(self):
        if not (0 < self.low.me < self.high.me and 0 < self.low.snr < self.high.snr):
            raise ValueError("anchors must be positive with low < high on both measures")

    @staticmethod
    def _edges(lo: float, hi: float) -> tuple[float, float]:
        return lo ** 0.75 * hi ** 0.25, lo ** 0.25 * hi ** 0.75

    @property
    def me_edges(self) -> tuple[float, float]:
        return self._edges(self.low.me, self.high.me)

    @property
    def snr_edges(self) -> tuple[float, float]:
        return self._edges(self.low.snr, self.high.snr)

    @property
    def midpoint(self) -> Anchor:
        return Anchor(
            me=math.sqrt(self.low.me * self.high.me),
            snr=math.sqrt(self.low.snr * self.high.snr),
        )


DEFAULT_BANDS = RegimeBands()


def _band(value: float, edges: tuple[float, float]) -> str:
    if value <= edges[0]:
        return "low"
    if value > edges[1]:
        return "high"
    return "mid"


def classify_regime(metrics: SignalMetrics, reference: RegimeBands = DEFAULT_BANDS) -> RegimeVerdict:
    if metrics.me_bits_per_pixel is None or metrics.snr is None:
        raise ValueError("classification needs both ME and SNR")
    me, snr = metrics.me_bits_per_pixel, metrics.snr
    me_band = _band(me, reference.me_edges)
    snr_band = _band(snr, reference.snr_edges)
    lo_me, hi_me = reference.me_edges
    lo_snr, hi_snr = reference.snr_edges
    desc = (
        f"ME {me:.3f} bits/pixel is {me_band} (edges {lo_me:.3f}/{hi_me:.3f}); "
        f"SNR {snr:.3f} is {snr_band} (edges {lo_snr:.3f}/{hi_snr:.3f})"
    )
    if me_band == "low" and snr_band == "low":
        return RegimeVerdict(InformationRegime.UNDERFLOW, f"{desc}: both measures low, underflow")
    if me_band == "high" and snr_band == "high":
        return RegimeVerdict(InformationRegime.OVERFLOW, f"{desc}: both measures high, overflow")
    if me_band == snr_band:
        driver = "both measures intermediate"
    else:
        driver = f"ME says {me_band} but SNR says {snr_band}; measures disagree"
    return RegimeVerdict(InformationRegime.BALANCED, f"{desc}: {driver}, balanced")


@dataclass(frozen=True)
class ArchitectureSpec:
    """A VGG-style CNN: conv blocks, then FC layers, dropout, classifier.

    Each conv block is conv (``kernel_size``, ``stride``, same padding) +
    ReLU + ``pool``x``pool`` max-pool (``pool=0`` disables pooling).
    """

    conv_blocks: tuple = (32,)
    fc_layers: tuple = (784,)
    kernel_size: int = 3
    stride: int = 1
    pool: int = 2
    dropout_rate: float = 0.5
    input_height: int = 28
    input_width: int = 28
    input_channels: int = 1
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks", tuple(int(c) for c in self.conv_blocks))
        object.__setattr__(self, "fc_layers", tuple(int(c) for c in self.fc_layers))

    @property
    def pixel_count(self) -> int:
        return self.input_height * self.input_width * self.input_channels

    @property
    def padding(self) -> int:
        return self.kernel_size // 2

    def validate(self) -> "ArchitectureSpec":
        if not self.conv_blocks or min(self.conv_blocks) < 1:
            raise ShapeMismatch(f"conv_blocks must be non-empty positive counts: {self.conv_blocks}")
        if not self.fc_layers or min(self.fc_layers) < 1:
            raise ShapeMismatch(f"fc_layers must be non-empty positive counts: {self.fc_layers}")
        if self.fc_layers[0] != self.pixel_count:
            raise ShapeMismatch(
                f"first FC layer must have one neuron per input value "
                f"({self.pixel_count}), got {self.fc_layers[0]}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeMismatch(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if min(self.kernel_size, self.stride, self.input_height, self.input_width,
               self.input_channels, self.num_classes) < 1 or self.pool < 0:
            raise ShapeMismatch("geometry parameters must be positive")
        self.feature_shape()
        return self

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) after each conv block."""
        c, h, w = self.input_channels, self.input_height, self.input_width
        out = []
        for i, k in enumerate(self.conv_blocks):
            h = (h + 2 * self.padding - self.kernel_size) // self.stride + 1
            w = (w + 2 * self.padding - self.kernel_size) // self.stride + 1
            if h < 1 or w < 1:
                raise GeometryExhausted(f"conv block {i + 1} leaves a {h}x{w} map")
            if self.pool:
                if h < self.pool or w < self.pool or h % self.pool or w % self.pool:
                    raise GeometryExhausted(
                        f"block {i + 1}: {h}x{w} map cannot be max-pooled by {self.pool}"
                    )
                h //= self.pool
                w //= self.pool
            c = k
            out.append((c, h, w))
        return out

    def feature_shape(self) -> tuple[int, int, int]:
        return self.conv_shapes()[-1]

    def parameter_count(self) -> int:
        total = 0
        cin = self.input_channels
        for k in self.conv_blocks:
            total += self.kernel_size * self.kernel_size * cin * k + k
            cin = k
        c, h, w = self.feature_shape()
        width = c * h * w
        for units in (*self.fc_layers, self.num_classes):
            total += width * units + units
            width = units
        return total

    def describe(self) -> str:
        kernels = "-".join(str(k) for k in self.conv_blocks)
        neurons = "-".join(str(n) for n in self.fc_layers)
        plural = "s" if len(self.fc_layers) > 1 else ""
        return f"{kernels} Convolutional kernels and {neurons} neuron FC layer{plural}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_blocks"] = list(self.conv_blocks)
        d["fc_layers"] = list(self.fc_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(**d)


_DESCRIPTION = re.compile(
    r"^\s*(?P<conv>\d+(?:-\d+)*)\s+Convolutional kernels(?:\s*\(\d+ layers?\))?"
    r"\s+and\s+(?P<fc>\d+(?:-\d+)*)\s+neuron FC layers?\s*$",
    re.IGNORECASE,
)


def parse_description(text: str, **geometry) -> ArchitectureSpec:
    """Inverse of :meth:`ArchitectureSpec.describe`.

    Also accepts the ``"(2 layers)"`` annotation that appears in one of the
    published configuration names. ``geometry`` fills the remaining fields.
    """
    m = _DESCRIPTION.match(text)
    if not m:
        raise ValueError(f"not a configuration description: {text!r}")
    conv = tuple(int(x) for x in m["conv"].split("-"))
    fc = tuple(int(x) for x in m["fc"].split("-"))
    return ArchitectureSpec(conv_blocks=conv, fc_layers=fc, **geometry)


# conv blocks and FC layers per regime
_REGIME_SHAPE = {
    InformationRegime.UNDERFLOW: (2, 2),
    InformationRegime.BALANCED: (2, 3),
    InformationRegime.OVERFLOW: (3, 3),
}


def halving_layers(first: int, count: int) -> tuple[int, ...]:
    layers = [first]
    for _ in range(count - 1):
        layers.append(layers[-1] // 2)
    return tuple(layers)


def doubling_blocks(count: int, first: int = 32) -> tuple[int, ...]:
    return tuple(first * 2 ** i for i in range(count))


def recommend_architecture(
    metrics: SignalMetrics,
    input_height: int,
    input_width: int,
    input_channels: int,
    num_classes: int = 10,
    capacity_budget: int | None = None,
    bands: RegimeBands = DEFAULT_BANDS,
    **overrides,
) -> ArchitectureSpec:
    """Size a network for data with the given measures and geometry.

    ``capacity_budget`` caps the total parameter count; trailing FC layers
    are dropped (never the first) until the network fits.
    """
    regime = classify_regime(metrics, bands).regime
    blocks, fc_depth = _REGIME_SHAPE[regime]
    pixels = input_height * input_width * input_channels
    fc_depth = min(fc_depth, max(1, int(math.log2(pixels)) + 1))
    spec = ArchitectureSpec(
        conv_blocks=doubling_blocks(blocks),
        fc_layers=halving_layers(pixels, fc_depth),
        input_height=input_height,
        input_width=input_width,
        input_channels=input_channels,
        num_classes=num_classes,
        **overrides,
    )
    spec.validate()
    if capacity_budget is not None:
        while spec.parameter_count() > capacity_budget and len(spec.fc_layers) > 1:
            spec = ArchitectureSpec(**{**spec.to_dict(), "fc_layers": spec.fc_layers[:-1]})
        if spec.parameter_count() > capacity_budget:
            raise BudgetExceeded(
                f"smallest {regime.value} network has {spec.parameter_count()} parameters, "
                f"budget is {capacity_budget}"
            )
    return spec
