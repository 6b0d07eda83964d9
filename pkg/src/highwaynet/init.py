"""Parameter initialization: variance-preserving weights, negative gate bias.

Weights are zero-mean Gaussians scaled so signal variance survives depth
(fan-in scaling for relu-style transforms, fan-in+fan-out for the
symmetric variant); every transform-gate bias starts at one negative value
so the network initially favors carrying its input forward, which is what
makes very deep stacks optimizable from the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import ConvHighwayLayer, HighwayLayer, Network, PlainLayer, SoftmaxHead
from .ops import Rng

INIT_KINDS = ("he", "glorot")


@dataclass(frozen=True)
class InitScheme:
    kind: str = "he"
    gate_bias: float = -2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown init kind: {self.kind!r}")
        if not self.gate_bias < 0:
            raise ValueError(f"gate_bias must be negative, got {self.gate_bias}")


def init_std(kind: str, fan_in: int, fan_out: int) -> float:
    """Gaussian std for a weight tensor: he = sqrt(2/fan_in),
    glorot = sqrt(2/(fan_in+fan_out))."""
    if kind == "he":
        return math.sqrt(2.0 / fan_in)
    if kind == "glorot":
        return math.sqrt(2.0 / (fan_in + fan_out))
    raise ValueError(f"unknown init kind: {kind!r}")


def init_weights(shape, kind: str, rng: Rng) -> np.ndarray:
    """Zero-mean Gaussian fill for a [fan_out x fan_in] matrix or a
    [c_out, c_in, k, k] conv kernel (fan_in = c_in * k^2)."""
    shape = tuple(shape)
    if any(d <= 0 for d in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 4:
        c_out, c_in, k, k2 = shape
        fan_in = c_in * k * k2
        fan_out = c_out * k * k2
    else:
        raise ValueError(f"expected a matrix or conv kernel shape, got {shape}")
    return rng.normal(0.0, init_std(kind, fan_in, fan_out), size=shape)


def init_network(net: Network, scheme: InitScheme) -> Network:
    """Fill every parameter of the network in place and return it.

    All weight matrices/kernels follow scheme.kind (the gate weights get
    the same treatment as the transform weights); plain biases and the head
    bias start at zero; every gate bias starts at scheme.gate_bias.
    """
    rng = Rng(scheme.rng_seed)
    layers = ([net.input_layer] if net.input_layer is not None else []) + list(net.body) + [net.head]
    for layer in layers:
        if isinstance(layer, PlainLayer):
            layer.W_H[...] = init_weights(layer.W_H.shape, scheme.kind, rng)
            layer.b_H[...] = 0.0
        elif isinstance(layer, HighwayLayer):
            layer.W_H[...] = init_weights(layer.W_H.shape, scheme.kind, rng)
            layer.b_H[...] = 0.0
            layer.W_T[...] = init_weights(layer.W_T.shape, scheme.kind, rng)
            layer.b_T[...] = scheme.gate_bias
        elif isinstance(layer, ConvHighwayLayer):
            layer.K_H[...] = init_weights(layer.K_H.shape, scheme.kind, rng)
            layer.b_H[...] = 0.0
            layer.K_T[...] = init_weights(layer.K_T.shape, scheme.kind, rng)
            layer.b_T[...] = scheme.gate_bias
        elif isinstance(layer, SoftmaxHead):
            layer.W[...] = init_weights(layer.W.shape, scheme.kind, rng)
            layer.b[...] = 0.0
    return net


def build_network(
    kind: str,
    depth: int,
    width: int,
    in_features: int,
    classes: int,
    activation: str = "relu",
    image_shape=None,
    kernel_size: int = 3,
) -> Network:
    """Assemble an uninitialized network of the standard shape.

    Fully-connected kinds ("plain", "highway"): one plain layer mapping
    in_features -> width, then depth-1 body layers of that width, then the
    head; depth counts the input layer plus the body.  "conv-highway":
    depth gated conv layers over image_shape = (c, h, w), head on the
    flattened final map.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if kind in ("plain", "highway"):
        if width < 1:
            raise ValueError(f"width must be >= 1, got {width}")
        input_layer = PlainLayer(np.zeros((width, in_features)), np.zeros(width), activation)
        body = []
        for _ in range(depth - 1):
            if kind == "plain":
                body.append(PlainLayer(np.zeros((width, width)), np.zeros(width), activation))
            else:
                body.append(
                    HighwayLayer(
                        np.zeros((width, width)), np.zeros(width),
                        np.zeros((width, width)), np.zeros(width), activation,
                    )
                )
        head = SoftmaxHead(np.zeros((classes, width)), np.zeros(classes))
        return Network(input_layer, body, head)
    if kind == "conv-highway":
        if image_shape is None:
            raise ValueError("conv-highway networks need image_shape=(c, h, w)")
        c, h, w = image_shape
        body = [
            ConvHighwayLayer(
                np.zeros((c, c, kernel_size, kernel_size)), np.zeros(c),
                np.zeros((c, c, kernel_size, kernel_size)), np.zeros(c), activation,
            )
            for _ in range(depth)
        ]
        head = SoftmaxHead(np.zeros((classes, c * h * w)), np.zeros(classes))
        return Network(None, body, head)
    raise ValueError(f"unknown network kind: {kind!r}")
