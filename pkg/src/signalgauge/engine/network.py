"""Layer objects, network assembly, SGD and parameter persistence."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..architecture import ArchitectureSpec
from ..errors import ShapeMismatch
from . import ops

DTYPE = np.float32


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, train: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def __repr__(self):
        return type(self).__name__


class Conv(Layer):
    def __init__(self, in_channels, kernels, kernel_size=3, stride=1, padding=0, rng=None):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.input_grad = True
        fan_in = in_channels * kernel_size * kernel_size
        fan_out = kernels * kernel_size * kernel_size
        shape = (kernels, in_channels, kernel_size, kernel_size)
        self.params["w"] = glorot_uniform(rng, shape, fan_in, fan_out)
        self.params["b"] = np.zeros(kernels, dtype=DTYPE)

    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x
        return ops.conv_forward(x, self.params["w"], self.params["b"], self.stride, self.padding)

    def backward(self, grad):
        dx, dw, db = ops.conv_backward(
            grad, self._cache, self.params["w"], self.stride, self.padding, self.input_grad
        )
        self.grads = {"w": dw, "b": db}
        return dx

    def __repr__(self):
        k, c, kh, _ = self.params["w"].shape
        return f"Conv({c}->{k}, {kh}x{kh}, stride={self.stride}, pad={self.padding})"


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x
        return ops.relu_forward(x)

    def backward(self, grad):
        return ops.relu_backward(grad, self._cache)


class MaxPool(Layer):
    def __init__(self, side=2):
        super().__init__()
        self.side = side

    def forward(self, x, train=False, rng=None):
        out, arg = ops.maxpool_forward(x, self.side)
        if train:
            self._cache = arg
        return out

    def backward(self, grad):
        return ops.maxpool_backward(grad, self._cache, self.side)

    def __repr__(self):
        return f"MaxPool({self.side})"


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cache)


class Dense(Layer):
    def __init__(self, in_units, units, rng=None):
        super().__init__()
        self.params["w"] = glorot_uniform(rng, (units, in_units), in_units, units)
        self.params["b"] = np.zeros(units, dtype=DTYPE)

    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x
        return ops.dense_forward(x, self.params["w"], self.params["b"])

    def backward(self, grad):
        dx, dw, db = ops.dense_backward(grad, self._cache, self.params["w"])
        self.grads = {"w": dw, "b": db}
        return dx

    def __repr__(self):
        out, inp = self.params["w"].shape
        return f"Dense({inp}->{out})"


class Dropout(Layer):
    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        out, mask = ops.dropout(x, self.rate, "train" if train else "eval", rng)
        if train:
            self._cache = mask
        return out

    def backward(self, grad):
        return grad if self._cache is None else grad * self._cache

    def __repr__(self):
        return f"Dropout({self.rate})"


class Network:
    """Ordered layers ending in logits; softmax lives in the loss."""

    def __init__(self, layers, spec: ArchitectureSpec | None = None, rng_seed: int | None = None):
        self.layers = list(layers)
        self.spec = spec
        self.rng_seed = rng_seed

    def forward(self, x, train: bool = False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict(self, x, batch_size: int = 500) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {
            f"{i}.{name}": p
            for i, layer in enumerate(self.layers)
            for name, p in layer.params.items()
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{i}.{name}": g
            for i, layer in enumerate(self.layers)
            for name, g in layer.grads.items()
        }

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def __repr__(self):
        return "Network(" + ", ".join(map(repr, self.layers)) + ")"


def build_network(spec: ArchitectureSpec, seed: int = 0) -> Network:
    """Conv blocks, Flatten, Dense+ReLU per FC layer, Dropout, classifier."""
    spec.validate()
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    cin = spec.input_channels
    for kernels in spec.conv_blocks:
        layers.append(Conv(cin, kernels, spec.kernel_size, spec.stride, spec.padding, rng=rng))
        layers.append(ReLU())
        if spec.pool:
            layers.append(MaxPool(spec.pool))
        cin = kernels
    layers[0].input_grad = False
    layers.append(Flatten())
    c, h, w = spec.feature_shape()
    width = c * h * w
    for units in spec.fc_layers:
        layers.append(Dense(width, units, rng=rng))
        layers.append(ReLU())
        width = units
    layers.append(Dropout(spec.dropout_rate))
    layers.append(Dense(width, spec.num_classes, rng=rng))
    return Network(layers, spec=spec, rng_seed=seed)


def sgd_step(network: Network, gradients: dict[str, np.ndarray], learning_rate: float) -> Network:
    """In-place ``theta -= lr * grad`` for every parameter tensor."""
    params = network.named_parameters()
    if set(gradients) != set(params):
        raise ShapeMismatch(
            f"gradient keys {sorted(gradients)} do not match parameters {sorted(params)}"
        )
    for name, p in params.items():
        g = gradients[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        p -= p.dtype.type(learning_rate) * g.astype(p.dtype, copy=False)
    return network


# --- persistence -----------------------------------------------------------
#
# Little-endian container:
#   b"SGNN" | u32 version | u32 header_len | header (UTF-8 JSON spec + seed)
#   u32 tensor_count
#   per tensor: u16 name_len | name | u32 ndim | u32 dims[ndim] | float32 data

MAGIC = b"SGNN"
VERSION = 1


def save_parameters(network: Network, path) -> None:
    header = json.dumps(
        {"spec": network.spec.to_dict() if network.spec else None, "seed": network.rng_seed},
        sort_keys=True,
    ).encode()
    params = network.named_parameters()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(params))]
    for name, p in params.items():
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_parameters(path, network: Network | None = None) -> Network:
    """Read a container; rebuilds the network from its spec when none is given."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a signalgauge parameter file")
    version, hlen = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    off = 12
    header = json.loads(buf[off:off + hlen])
    off += hlen
    if network is None:
        spec = ArchitectureSpec.from_dict(header["spec"])
        network = build_network(spec, header["seed"] or 0)
    params = network.named_parameters()
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    if count != len(params):
        raise ShapeMismatch(f"file holds {count} tensors, network has {len(params)}")
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        if name not in params or params[name].shape != tuple(shape):
            raise ShapeMismatch(f"tensor {name} {shape} does not fit the network")
        params[name][...] = data
    return network
