"""Layer math for the 1-D convolutional autoencoder.

Arrays are float64, shaped (batch, length, channels). Each layer caches the
forward inputs it needs, accumulates parameter gradients in ``backward`` and
returns the input gradient. Convolutions use valid padding and stride 1; the
decoder recovers length through nearest-neighbour upsampling and transposed
convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; the unit of checkpoint headers."""

    kind: str
    args: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.args}

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        args = {k: v for k, v in data.items() if k != "kind"}
        return cls(kind=data["kind"], args=args)


def conv1d(c_in: int, c_out: int, kernel: int) -> LayerSpec:
    return LayerSpec("conv1d", {"in_channels": c_in, "out_channels": c_out, "kernel": kernel})


def conv1d_transpose(c_in: int, c_out: int, kernel: int) -> LayerSpec:
    return LayerSpec("conv1d_transpose", {"in_channels": c_in, "out_channels": c_out, "kernel": kernel})


def maxpool(pool: int = 2) -> LayerSpec:
    return LayerSpec("maxpool", {"pool": pool})


def upsample(factor: int = 2) -> LayerSpec:
    return LayerSpec("upsample", {"factor": factor})


def batchnorm(channels: int) -> LayerSpec:
    return LayerSpec("batchnorm", {"channels": channels})


def dense(n_in: int, n_out: int, out_shape: tuple[int, int] | None = None) -> LayerSpec:
    args = {"in_units": n_in, "out_units": n_out}
    if out_shape is not None:
        args["out_shape"] = list(out_shape)
    return LayerSpec("dense", args)


def relu() -> LayerSpec:
    return LayerSpec("activation", {"fn": "relu"})


class Layer:
    """Base layer; parameter-free by default."""

    spec: LayerSpec

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def buffers(self) -> list[np.ndarray]:
        """Non-trained state (batch-norm running stats)."""
        return []

    def state(self) -> list[np.ndarray]:
        return self.params() + self.buffers()

    def param_count(self) -> int:
        return 0

    def zero_grads(self) -> None:
        for g in self.grads():
            g.fill(0.0)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1D(Layer):
    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        self.spec = spec
        self.c_in = spec.args["in_channels"]
        self.c_out = spec.args["out_channels"]
        self.k = spec.args["kernel"]
        limit = np.sqrt(6.0 / (self.k * self.c_in + self.k * self.c_out))
        self.w = rng.uniform(-limit, limit, size=(self.k, self.c_in, self.c_out))
        self.b = np.zeros(self.c_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def param_count(self) -> int:
        return self.k * self.c_in * self.c_out + self.c_out

    def forward(self, x, training):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeMismatch(f"conv1d expected (b, L, {self.c_in}), got {x.shape}")
        if x.shape[1] < self.k:
            raise ShapeMismatch(f"conv1d input length {x.shape[1]} < kernel {self.k}")
        self._x = x
        l_out = x.shape[1] - self.k + 1
        y = np.broadcast_to(self.b, (x.shape[0], l_out, self.c_out)).copy()
        for i in range(self.k):
            y += x[:, i:i + l_out, :] @ self.w[i]
        return y

    def backward(self, dy):
        x = self._x
        l_out = dy.shape[1]
        dx = np.zeros_like(x)
        for i in range(self.k):
            x_slice = x[:, i:i + l_out, :]
            self.dw[i] += x_slice.reshape(-1, self.c_in).T @ dy.reshape(-1, self.c_out)
            dx[:, i:i + l_out, :] += dy @ self.w[i].T
        self.db += dy.sum(axis=(0, 1))
        return dx


class ConvTranspose1D(Layer):
    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        self.spec = spec
        self.c_in = spec.args["in_channels"]
        self.c_out = spec.args["out_channels"]
        self.k = spec.args["kernel"]
        limit = np.sqrt(6.0 / (self.k * self.c_in + self.k * self.c_out))
        self.w = rng.uniform(-limit, limit, size=(self.k, self.c_in, self.c_out))
        self.b = np.zeros(self.c_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def param_count(self) -> int:
        return self.k * self.c_in * self.c_out + self.c_out

    def forward(self, x, training):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeMismatch(f"conv1d_transpose expected (b, L, {self.c_in}), got {x.shape}")
        self._x = x
        l_in = x.shape[1]
        y = np.zeros((x.shape[0], l_in + self.k - 1, self.c_out))
        for i in range(self.k):
            y[:, i:i + l_in, :] += x @ self.w[i]
        y += self.b
        return y

    def backward(self, dy):
        x = self._x
        l_in = x.shape[1]
        dx = np.zeros_like(x)
        for i in range(self.k):
            dy_slice = dy[:, i:i + l_in, :]
            self.dw[i] += x.reshape(-1, self.c_in).T @ dy_slice.reshape(-1, self.c_out)
            dx += dy_slice @ self.w[i].T
        self.db += dy.sum(axis=(0, 1))
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pooling along length; trailing remainder dropped."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.pool = spec.args["pool"]
        self._argmax: np.ndarray | None = None
        self._in_shape: tuple | None = None

    def forward(self, x, training):
        p = self.pool
        l_out = x.shape[1] // p
        self._in_shape = x.shape
        trimmed = x[:, :l_out * p, :].reshape(x.shape[0], l_out, p, x.shape[2])
        self._argmax = trimmed.argmax(axis=2)
        return trimmed.max(axis=2)

    def backward(self, dy):
        b, l_out, c = dy.shape
        p = self.pool
        dx = np.zeros(self._in_shape)
        windows = dx[:, :l_out * p, :].reshape(b, l_out, p, c)
        bi, li, ci = np.ogrid[:b, :l_out, :c]
        windows[bi, li, self._argmax, ci] = dy
        return dx


class UpsampleNearest(Layer):
    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.factor = spec.args["factor"]

    def forward(self, x, training):
        return np.repeat(x, self.factor, axis=1)

    def backward(self, dy):
        b, l_out, c = dy.shape
        return dy.reshape(b, l_out // self.factor, self.factor, c).sum(axis=2)


class BatchNorm(Layer):
    """Per-channel normalization over (batch, length).

    Training mode uses batch statistics (population convention) and updates
    running stats with momentum 0.9; inference mode uses running stats.
    """

    MOMENTUM = 0.9
    EPS = 1e-5

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        c = spec.args["channels"]
        self.channels = c
        self.gamma = np.ones(c)
        self.beta = np.zeros(c)
        self.running_mean = np.zeros(c)
        self.running_var = np.ones(c)
        self.dgamma = np.zeros(c)
        self.dbeta = np.zeros(c)
        self._cache: tuple | None = None

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def param_count(self) -> int:
        # affine pair plus the two running-stat vectors
        return 4 * self.channels

    def forward(self, x, training):
        if x.shape[2] != self.channels:
            raise ShapeMismatch(f"batchnorm expected {self.channels} channels, got {x.shape}")
        if training:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            self.running_mean *= self.MOMENTUM
            self.running_mean += (1.0 - self.MOMENTUM) * mean
            self.running_var *= self.MOMENTUM
            self.running_var += (1.0 - self.MOMENTUM) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        x_hat = (x - mean) * inv_std
        if training:
            self._cache = (x_hat, inv_std, x.shape[0] * x.shape[1])
        return self.gamma * x_hat + self.beta

    def backward(self, dy):
        x_hat, inv_std, n = self._cache
        self.dgamma += (dy * x_hat).sum(axis=(0, 1))
        self.dbeta += dy.sum(axis=(0, 1))
        dxhat = dy * self.gamma
        # batch statistics couple every sample in the batch
        term = dxhat - dxhat.mean(axis=(0, 1)) - x_hat * (dxhat * x_hat).mean(axis=(0, 1))
        return term * inv_std


class Dense(Layer):
    """Fully connected layer; flattens (b, L, c) inputs and can reshape output."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        self.spec = spec
        self.n_in = spec.args["in_units"]
        self.n_out = spec.args["out_units"]
        self.out_shape = tuple(spec.args["out_shape"]) if "out_shape" in spec.args else None
        limit = np.sqrt(6.0 / (self.n_in + self.n_out))
        self.w = rng.uniform(-limit, limit, size=(self.n_in, self.n_out))
        self.b = np.zeros(self.n_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x2d: np.ndarray | None = None
        self._in_shape: tuple | None = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def param_count(self) -> int:
        return self.n_in * self.n_out + self.n_out

    def forward(self, x, training):
        self._in_shape = x.shape
        x2d = x.reshape(x.shape[0], -1)
        if x2d.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense expected {self.n_in} inputs, got {x2d.shape[1]}")
        self._x2d = x2d
        y = x2d @ self.w + self.b
        if self.out_shape is not None:
            y = y.reshape(x.shape[0], *self.out_shape)
        return y

    def backward(self, dy):
        dy2d = dy.reshape(dy.shape[0], -1)
        self.dw += self._x2d.T @ dy2d
        self.db += dy2d.sum(axis=0)
        return (dy2d @ self.w.T).reshape(self._in_shape)


class Activation(Layer):
    def __init__(self, spec: LayerSpec):
        self.spec = spec
        if spec.args["fn"] != "relu":
            raise ValueError(f"unsupported activation {spec.args['fn']!r}")
        self._mask: np.ndarray | None = None

    def forward(self, x, training):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


def build_layer(spec: LayerSpec, rng: np.random.Generator) -> Layer:
    kind = spec.kind
    if kind == "conv1d":
        return Conv1D(spec, rng)
    if kind == "conv1d_transpose":
        return ConvTranspose1D(spec, rng)
    if kind == "maxpool":
        return MaxPool1D(spec)
    if kind == "upsample":
        return UpsampleNearest(spec)
    if kind == "batchnorm":
        return BatchNorm(spec)
    if kind == "dense":
        return Dense(spec, rng)
    if kind == "activation":
        return Activation(spec)
    raise ValueError(f"unknown layer kind {kind!r}")


def infer_shape(input_shape: tuple[int, int] | int, specs: list[LayerSpec]):
    """Propagate a (length, channels) or flat-unit shape through layer specs.

    Raises ShapeMismatch on an inconsistent chain.
    """
    shape = input_shape
    for spec in specs:
        kind = spec.kind
        if kind == "conv1d" or kind == "conv1d_transpose":
            if not isinstance(shape, tuple):
                raise ShapeMismatch(f"{kind} needs a (length, channels) input, got {shape}")
            length, channels = shape
            if channels != spec.args["in_channels"]:
                raise ShapeMismatch(
                    f"{kind} expects {spec.args['in_channels']} channels, chain has {channels}")
            k = spec.args["kernel"]
            if kind == "conv1d":
                if length < k:
                    raise ShapeMismatch(f"conv1d length {length} < kernel {k}")
                shape = (length - k + 1, spec.args["out_channels"])
            else:
                shape = (length + k - 1, spec.args["out_channels"])
        elif kind == "maxpool":
            length, channels = shape
            shape = (length // spec.args["pool"], channels)
        elif kind == "upsample":
            length, channels = shape
            shape = (length * spec.args["factor"], channels)
        elif kind == "batchnorm":
            length, channels = shape
            if channels != spec.args["channels"]:
                raise ShapeMismatch(
                    f"batchnorm expects {spec.args['channels']} channels, chain has {channels}")
        elif kind == "dense":
            units = shape[0] * shape[1] if isinstance(shape, tuple) else shape
            if units != spec.args["in_units"]:
                raise ShapeMismatch(
                    f"dense expects {spec.args['in_units']} inputs, chain has {units}")
            if "out_shape" in spec.args:
                out = spec.args["out_shape"]
                if out[0] * out[1] != spec.args["out_units"]:
                    raise ShapeMismatch("dense out_shape does not match out_units")
                shape = (out[0], out[1])
            else:
                shape = spec.args["out_units"]
        elif kind == "activation":
            pass
        else:
            raise ShapeMismatch(f"unknown layer kind {kind!r}")
    return shape


def spec_param_count(specs: list[LayerSpec]) -> int:
    """Closed-form parameter count of a layer chain."""
    total = 0
    for spec in specs:
        kind = spec.kind
        if kind in ("conv1d", "conv1d_transpose"):
            total += spec.args["kernel"] * spec.args["in_channels"] * spec.args["out_channels"]
            total += spec.args["out_channels"]
        elif kind == "batchnorm":
            total += 4 * spec.args["channels"]
        elif kind == "dense":
            total += spec.args["in_units"] * spec.args["out_units"] + spec.args["out_units"]
    return total
