"""Layer forward/backward passes and network assembly.

Layer zoo: plain affine layers, gated (highway) layers that blend a learned
transform with an identity carry path, their convolutional variant, and a
fused softmax/cross-entropy head.  Batch dimension always leads.  The
backward passes are hand-derived; docs/gradients.md walks through the chain
rule for the gated layers and the finite-difference tests in
tests/test_layers.py are the arbiter.
"""

from __future__ import annotations

import numpy as np

from .ops import (
    ACTIVATIONS,
    ShapeError,
    activation_derivative,
    apply_activation,
    matmul,
    sigmoid,
)


def block_combine(h: np.ndarray, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-unit gated blend y = h*t + x*(1-t).

    t near 0 passes the input through unchanged (carry); t near 1 replaces
    it with the transform output.
    """
    if not (h.shape == t.shape == x.shape):
        raise ShapeError(f"block_combine shapes disagree: {h.shape}, {t.shape}, {x.shape}")
    return h * t + x * (1.0 - t)


class PlainLayer:
    """Conventional affine + activation layer: y = phi(x W_H^T + b_H)."""

    def __init__(self, W_H: np.ndarray, b_H: np.ndarray, activation: str = "relu"):
        W_H = np.asarray(W_H, dtype=np.float64)
        b_H = np.asarray(b_H, dtype=np.float64)
        if W_H.ndim != 2 or b_H.ndim != 1 or b_H.shape[0] != W_H.shape[0]:
            raise ShapeError(f"plain layer shapes disagree: W_H {W_H.shape}, b_H {b_H.shape}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation kind: {activation!r}")
        self.W_H = W_H
        self.b_H = b_H
        self.activation = activation

    @property
    def in_width(self) -> int:
        return self.W_H.shape[1]

    @property
    def out_width(self) -> int:
        return self.W_H.shape[0]

    def forward(self, x: np.ndarray):
        a = matmul(x, self.W_H.T) + self.b_H
        y = apply_activation(a, self.activation)
        return y, {"x": x, "a": a}

    def backward(self, cache: dict, dL_dy: np.ndarray):
        x, a = cache["x"], cache["a"]
        if dL_dy.shape != a.shape:
            raise ShapeError(f"upstream gradient {dL_dy.shape} does not match cache {a.shape}")
        da = dL_dy * activation_derivative(a, self.activation)
        grads = {"W_H": matmul(da.T, x), "b_H": da.sum(axis=0)}
        dL_dx = matmul(da, self.W_H)
        return dL_dx, grads

    def parameters(self):
        return [("W_H", self.W_H), ("b_H", self.b_H)]


class HighwayLayer:
    """Gated layer: y = H(x)*T(x) + x*(1-T(x)) with T = sigmoid(x W_T^T + b_T).

    Input and output width must agree (the carry path is the identity), so
    all four parameter tensors share one width n.
    """

    def __init__(self, W_H, b_H, W_T, b_T, activation: str = "relu"):
        W_H = np.asarray(W_H, dtype=np.float64)
        b_H = np.asarray(b_H, dtype=np.float64)
        W_T = np.asarray(W_T, dtype=np.float64)
        b_T = np.asarray(b_T, dtype=np.float64)
        n = W_H.shape[0] if W_H.ndim == 2 else -1
        if any(w.shape != (n, n) for w in (W_H, W_T)) or any(
            b.shape != (n,) for b in (b_H, b_T)
        ):
            raise ShapeError(
                "highway layer needs square weights and matching biases of one width, got "
                f"W_H {W_H.shape}, b_H {b_H.shape}, W_T {W_T.shape}, b_T {b_T.shape}"
            )
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation kind: {activation!r}")
        self.W_H = W_H
        self.b_H = b_H
        self.W_T = W_T
        self.b_T = b_T
        self.activation = activation

    @property
    def in_width(self) -> int:
        return self.W_H.shape[1]

    @property
    def out_width(self) -> int:
        return self.W_H.shape[0]

    def forward(self, x: np.ndarray):
        a = matmul(x, self.W_H.T) + self.b_H
        h = apply_activation(a, self.activation)
        s = matmul(x, self.W_T.T) + self.b_T
        t = sigmoid(s)
        y = block_combine(h, t, x)
        return y, {"x": x, "a": a, "s": s, "h": h, "t": t}

    def backward(self, cache: dict, dL_dy: np.ndarray):
        """Chain rule through the coupled gate.

        With g = dL/dy:
          dL/dh = g*t            dL/da = dL/dh * phi'(a)
          dL/dt = g*(h - x)      dL/ds = dL/dt * t*(1-t)
          dL/dx = dL/da W_H + dL/ds W_T + g*(1-t)
        The (h - x) factor and the direct g*(1-t) carry term both come from
        differentiating y = h*t + x*(1-t) with C coupled to 1-T.
        """
        x, a, h, t = cache["x"], cache["a"], cache["h"], cache["t"]
        if dL_dy.shape != x.shape:
            raise ShapeError(f"upstream gradient {dL_dy.shape} does not match cache {x.shape}")
        da = dL_dy * t * activation_derivative(a, self.activation)
        ds = dL_dy * (h - x) * t * (1.0 - t)
        grads = {
            "W_H": matmul(da.T, x),
            "b_H": da.sum(axis=0),
            "W_T": matmul(ds.T, x),
            "b_T": ds.sum(axis=0),
        }
        dL_dx = matmul(da, self.W_H) + matmul(ds, self.W_T) + dL_dy * (1.0 - t)
        return dL_dx, grads

    def parameters(self):
        return [("W_H", self.W_H), ("b_H", self.b_H), ("W_T", self.W_T), ("b_T", self.b_T)]


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _corr2d(x: np.ndarray, kernels: np.ndarray, pad: int) -> np.ndarray:
    """Stride-1 cross-correlation with zero padding, via im2col lowering.

    x: [batch, c_in, h, w]; kernels: [c_out, c_in, k, k] -> [batch, c_out, h, w].
    Same-size output requires pad = (k-1)/2, which the layer enforces.
    """
    batch, c_in, height, width = x.shape
    c_out, c_in_k, k, _ = kernels.shape
    if c_in_k != c_in:
        raise ShapeError(f"kernel expects {c_in_k} input channels, got {c_in}")
    win = np.lib.stride_tricks.sliding_window_view(_pad2d(x, pad), (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, c_in * k * k)
    out = cols @ kernels.reshape(c_out, c_in * k * k).T
    return out.reshape(batch, height, width, c_out).transpose(0, 3, 1, 2)


class ConvHighwayLayer:
    """Convolutional gated layer; gates per pixel per channel.

    Both the transform and the gate are stride-1 convolutions with zero
    padding (k-1)/2 so the feature maps keep the input's channel count and
    spatial size; the carry path is again the identity.
    """

    def __init__(self, K_H, b_H, K_T, b_T, activation: str = "relu"):
        K_H = np.asarray(K_H, dtype=np.float64)
        b_H = np.asarray(b_H, dtype=np.float64)
        K_T = np.asarray(K_T, dtype=np.float64)
        b_T = np.asarray(b_T, dtype=np.float64)
        if K_H.ndim != 4 or K_H.shape[0] != K_H.shape[1] or K_H.shape[2] != K_H.shape[3]:
            raise ShapeError(f"conv kernels must be [c, c, k, k], got {K_H.shape}")
        c, _, k, _ = K_H.shape
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd for same-size padding, got k={k}")
        if K_T.shape != K_H.shape or b_H.shape != (c,) or b_T.shape != (c,):
            raise ShapeError(
                f"conv highway shapes disagree: K_H {K_H.shape}, b_H {b_H.shape}, "
                f"K_T {K_T.shape}, b_T {b_T.shape}"
            )
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation kind: {activation!r}")
        self.K_H = K_H
        self.b_H = b_H
        self.K_T = K_T
        self.b_T = b_T
        self.activation = activation

    @property
    def channels(self) -> int:
        return self.K_H.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.K_H.shape[2]

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    def forward(self, x: np.ndarray):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(
                f"conv highway expects [batch, {self.channels}, h, w] input, got {x.shape}"
            )
        bias_h = self.b_H[None, :, None, None]
        bias_t = self.b_T[None, :, None, None]
        a = _corr2d(x, self.K_H, self.padding) + bias_h
        h = apply_activation(a, self.activation)
        s = _corr2d(x, self.K_T, self.padding) + bias_t
        t = sigmoid(s)
        y = block_combine(h, t, x)
        return y, {"x": x, "a": a, "s": s, "h": h, "t": t}

    def backward(self, cache: dict, dL_dy: np.ndarray):
        """Same chain rule as the dense gated layer, with conv adjoints.

        The adjoint of a same-padded stride-1 cross-correlation is another
        same-padded cross-correlation with the kernels flipped in both
        spatial dims and transposed across channels.
        """
        x, a, h, t = cache["x"], cache["a"], cache["h"], cache["t"]
        if dL_dy.shape != x.shape:
            raise ShapeError(f"upstream gradient {dL_dy.shape} does not match cache {x.shape}")
        k, p = self.kernel_size, self.padding
        da = dL_dy * t * activation_derivative(a, self.activation)
        ds = dL_dy * (h - x) * t * (1.0 - t)

        win = np.lib.stride_tricks.sliding_window_view(_pad2d(x, p), (k, k), axis=(2, 3))
        grads = {
            "K_H": np.einsum("boij,bcijuv->ocuv", da, win),
            "b_H": da.sum(axis=(0, 2, 3)),
            "K_T": np.einsum("boij,bcijuv->ocuv", ds, win),
            "b_T": ds.sum(axis=(0, 2, 3)),
        }
        adj_h = np.flip(self.K_H, axis=(2, 3)).transpose(1, 0, 2, 3)
        adj_t = np.flip(self.K_T, axis=(2, 3)).transpose(1, 0, 2, 3)
        dL_dx = _corr2d(da, adj_h, p) + _corr2d(ds, adj_t, p) + dL_dy * (1.0 - t)
        return dL_dx, grads

    def parameters(self):
        return [("K_H", self.K_H), ("b_H", self.b_H), ("K_T", self.K_T), ("b_T", self.b_T)]


class SoftmaxHead:
    """Affine layer fused with softmax and mean cross-entropy."""

    def __init__(self, W: np.ndarray, b: np.ndarray):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ShapeError(f"softmax head shapes disagree: W {W.shape}, b {b.shape}")
        self.W = W
        self.b = b

    @property
    def in_width(self) -> int:
        return self.W.shape[1]

    @property
    def classes(self) -> int:
        return self.W.shape[0]

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        z = matmul(x, self.W.T) + self.b
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def forward_backward(self, x: np.ndarray, labels: np.ndarray):
        """Returns (loss, probs, dL_dx, grads).

        loss is the mean cross-entropy over the batch; the logit gradient is
        (probs - onehot) / batch, pushed back through the affine map.
        """
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
            raise ShapeError(f"labels {labels.shape} do not match batch {x.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise ValueError(
                f"label out of range [0, {self.classes}): min {labels.min()}, max {labels.max()}"
            )
        batch = x.shape[0]
        z = matmul(x, self.W.T) + self.b
        zmax = z.max(axis=1, keepdims=True)
        shifted = z - zmax
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        probs = np.exp(log_probs)
        loss = -log_probs[np.arange(batch), labels].mean()

        dz = probs.copy()
        dz[np.arange(batch), labels] -= 1.0
        dz /= batch
        grads = {"W": matmul(dz.T, x), "b": dz.sum(axis=0)}
        dL_dx = matmul(dz, self.W)
        return loss, probs, dL_dx, grads

    def parameters(self):
        return [("W", self.W), ("b", self.b)]


class Network:
    """A leading plain layer (dimension change), a homogeneous body, and a
    softmax head.

    Fully-connected networks always carry the input plain layer, matching
    the convention that a "depth d" network is that layer plus d-1 body
    layers (the head is not counted).  Convolutional gated networks have no
    input layer: their body preserves the image shape and the head consumes
    the flattened final feature map.  Any other dimension change is rejected
    here at construction.
    """

    def __init__(self, input_layer, body, head: SoftmaxHead):
        body = list(body)
        kinds = {type(layer) for layer in body}
        if len(kinds) > 1:
            raise ShapeError("network body must be homogeneous, got " +
                             ", ".join(sorted(k.__name__ for k in kinds)))
        if body and isinstance(body[0], ConvHighwayLayer):
            if input_layer is not None:
                raise ShapeError("convolutional body takes raw images; no input layer allowed")
            channels = {layer.channels for layer in body}
            if len(channels) > 1:
                raise ShapeError(f"conv body channel counts disagree: {sorted(channels)}")
        else:
            if input_layer is None:
                raise ShapeError("fully-connected network requires the leading plain layer")
            width = input_layer.out_width
            for i, layer in enumerate(body):
                if layer.in_width != width or layer.out_width != width:
                    raise ShapeError(
                        f"body layer {i} width {layer.in_width}x{layer.out_width} "
                        f"breaks the chain at width {width}"
                    )
            if head.in_width != width:
                raise ShapeError(f"head expects width {width}, has {head.in_width}")
        self.input_layer = input_layer
        self.body = body
        self.head = head

    @property
    def is_conv(self) -> bool:
        return bool(self.body) and isinstance(self.body[0], ConvHighwayLayer)

    @property
    def body_kind(self) -> str:
        if not self.body:
            return "plain"
        return {
            PlainLayer: "plain",
            HighwayLayer: "highway",
            ConvHighwayLayer: "conv-highway",
        }[type(self.body[0])]

    def _flatten(self, y: np.ndarray) -> np.ndarray:
        return y.reshape(y.shape[0], -1) if self.is_conv else y

    def forward_caches(self, x: np.ndarray):
        """Forward pass keeping every layer's cache (for backward/analysis)."""
        caches = []
        y = x
        if self.input_layer is not None:
            y, cache = self.input_layer.forward(y)
            caches.append(("input", self.input_layer, cache))
        for i, layer in enumerate(self.body):
            y, cache = layer.forward(y)
            caches.append((f"body.{i}", layer, cache))
        return y, caches

    def predict_probs(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_caches(x)
        return self.head.probabilities(self._flatten(y))

    def parameters(self):
        """All parameter tensors as (name, array), in forward order."""
        out = []
        if self.input_layer is not None:
            out += [(f"input.{n}", p) for n, p in self.input_layer.parameters()]
        for i, layer in enumerate(self.body):
            out += [(f"body.{i}.{n}", p) for n, p in layer.parameters()]
        out += [(f"head.{n}", p) for n, p in self.head.parameters()]
        return out


def network_forward_backward(net: Network, x_batch: np.ndarray, labels: np.ndarray):
    """One forward and one reverse sweep; gradients for every parameter.

    Returns (loss, grads) with grads keyed like net.parameters().
    """
    y, caches = net.forward_caches(x_batch)
    flat = net._flatten(y)
    loss, _, d_flat, head_grads = net.head.forward_backward(flat, labels)
    grads = {f"head.{n}": g for n, g in head_grads.items()}
    dL = d_flat.reshape(y.shape)
    for name, layer, cache in reversed(caches):
        dL, layer_grads = layer.backward(cache, dL)
        for n, g in layer_grads.items():
            grads[f"{name}.{n}"] = g
    return loss, grads


def count_parameters(net_or_layer) -> int:
    """Exact number of scalar parameters."""
    return int(sum(p.size for _, p in net_or_layer.parameters()))
