"""Sequential model container and the default autoencoder architecture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import layers as L
from .layers import LayerSpec, build_layer, infer_shape, spec_param_count


class Sequential:
    """Ordered layer stack with cached-activation backprop."""

    def __init__(self, specs: list[LayerSpec], rng: np.random.Generator):
        self.specs = list(specs)
        self.layers = [build_layer(s, rng) for s in self.specs]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def grads(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.grads())
        return out

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def state(self) -> list[np.ndarray]:
        """Every state array (params then buffers, per layer, in order)."""
        out = []
        for layer in self.layers:
            out.extend(layer.state())
        return out

    def snapshot(self) -> list[np.ndarray]:
        return [a.copy() for a in self.state()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        state = self.state()
        if len(state) != len(snapshot):
            raise ShapeMismatch("snapshot does not match model state")
        for dst, src in zip(state, snapshot):
            dst[...] = src

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def spec_dicts(self) -> list[dict]:
        return [s.to_dict() for s in self.specs]


@dataclass(frozen=True)
class AutoencoderSpec:
    """Input shape, encoder chain, latent width, decoder chain.

    The chain is validated end to end: encoder must emit ``latent`` units and
    the decoder must restore the input shape exactly.
    """

    input_shape: tuple[int, int]
    encoder: tuple[LayerSpec, ...]
    latent: int
    decoder: tuple[LayerSpec, ...]

    def __post_init__(self):
        latent_shape = infer_shape(self.input_shape, list(self.encoder))
        if latent_shape != self.latent:
            raise ShapeMismatch(
                f"encoder emits {latent_shape}, expected latent size {self.latent}")
        out_shape = infer_shape(self.latent, list(self.decoder))
        if out_shape != self.input_shape:
            raise ShapeMismatch(
                f"decoder emits {out_shape}, expected input shape {self.input_shape}")

    def build_encoder(self, rng: np.random.Generator) -> Sequential:
        return Sequential(list(self.encoder), rng)

    def build_decoder(self, rng: np.random.Generator) -> Sequential:
        return Sequential(list(self.decoder), rng)

    def encoder_param_count(self) -> int:
        return spec_param_count(list(self.encoder))

    def decoder_param_count(self) -> int:
        return spec_param_count(list(self.decoder))

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "latent": self.latent,
            "encoder": [s.to_dict() for s in self.encoder],
            "decoder": [s.to_dict() for s in self.decoder],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AutoencoderSpec":
        return cls(
            input_shape=tuple(data["input_shape"]),
            encoder=tuple(LayerSpec.from_dict(d) for d in data["encoder"]),
            latent=data["latent"],
            decoder=tuple(LayerSpec.from_dict(d) for d in data["decoder"]),
        )


def default_autoencoder_spec(window_len: int = 50, channels: int = 6,
                             latent: int = 75) -> AutoencoderSpec:
    """Smallest stack exercising every layer kind.

    Encoder: conv(6->16,k3), bn, relu, pool2, conv(16->32,k3), bn, relu,
    pool2, dense->latent. Decoder mirrors it with nearest upsampling and
    transposed convolutions; the output layer is linear (targets are
    z-scored).
    """
    l1 = window_len - 2          # conv k3 valid
    l2 = l1 // 2                 # pool 2
    l3 = l2 - 2                  # conv k3 valid
    l4 = l3 // 2                 # pool 2
    if l4 < 1 or l3 != l4 * 2 or l1 != l2 * 2:
        raise ShapeMismatch(
            f"window_len {window_len} does not survive the conv/pool chain cleanly")
    flat = l4 * 32
    encoder = (
        L.conv1d(channels, 16, 3),
        L.batchnorm(16),
        L.relu(),
        L.maxpool(2),
        L.conv1d(16, 32, 3),
        L.batchnorm(32),
        L.relu(),
        L.maxpool(2),
        L.dense(flat, latent),
    )
    decoder = (
        L.dense(latent, flat, out_shape=(l4, 32)),
        L.relu(),
        L.upsample(2),
        L.conv1d_transpose(32, 16, 3),
        L.batchnorm(16),
        L.relu(),
        L.upsample(2),
        L.conv1d_transpose(16, channels, 3),
    )
    return AutoencoderSpec(input_shape=(window_len, channels), encoder=encoder,
                           latent=latent, decoder=decoder)


def mse_per_sample(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """Mean-over-elements squared error per sample; shape (batch,)."""
    if x.shape != x_hat.shape:
        raise ShapeMismatch(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    return (diff * diff).reshape(x.shape[0], -1).mean(axis=1)


def mse(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean-over-elements squared error of a single window or batch."""
    if x.shape != x_hat.shape:
        raise ShapeMismatch(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    return float((diff * diff).mean())
