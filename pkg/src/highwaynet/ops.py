"""Dense float64 tensor ops, activations, and a seeded counter-based RNG.

Everything downstream (layers, training, search) builds on these few
functions.  All math is done in 64-bit floats so that the finite-difference
gradient checks in the test suite can use tight tolerances.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up for an operation."""


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check.

    Delegates to numpy; run-to-run deterministic on a fixed platform.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise.

    For x >= 0 computes 1/(1+e^-x); for x < 0 computes e^x/(1+e^x).  The
    split avoids overflow for strongly negative gate pre-activations.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def apply_activation(x: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise relu / tanh / identity."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(0.0, x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x.copy()
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_derivative(x_pre: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of the activation, evaluated at the pre-activation.

    relu' at exactly 0 is defined as 0 so gradient tests are deterministic.
    """
    x_pre = np.asarray(x_pre, dtype=np.float64)
    if kind == "relu":
        return (x_pre > 0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(x_pre)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(x_pre)
    raise ValueError(f"unknown activation kind: {kind!r}")


# ---------------------------------------------------------------------------
# Seeded RNG: counter-based splitmix64.
#
# The draw at counter position i is mix64(seed + (i+1)*GAMMA), a pure
# function of (seed, i) over uint64 arithmetic, so the integer stream is
# bit-identical on every platform and blocks can be generated vectorized.
# Constants are the standard splitmix64 ones.
# ---------------------------------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def derive_seed(master: int, index: int) -> int:
    """Per-trial seed: master XOR splitmix64 of the trial index.

    Documented so partial re-runs of a search reproduce individual trials.
    """
    idx = np.uint64(((index + 1) * 0x9E3779B97F4A7C15) & _MASK64)
    return int(np.uint64(master & _MASK64) ^ _mix64(idx[None])[0])


class Rng:
    """Single-owner deterministic random stream.

    Same seed reproduces the identical sequence of fills across runs and
    platforms, however the draws are chunked into calls.  Never share one
    instance between threads; derive children with :meth:`spawn` instead.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def spawn(self, index: int) -> "Rng":
        """Independent child stream; deterministic in (seed, index)."""
        return Rng(derive_seed(self.seed, index))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix64(np.uint64(self.seed) + idx * _GAMMA)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        """Uniform draws in [low, high); scalar ndarray if size is None."""
        shape = () if size is None else tuple(np.atleast_1d(size)) if not np.isscalar(size) else (size,)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)) * (2.0 ** -53)
        out = low + (high - low) * u
        return out.reshape(shape) if shape else out[0]

    def normal(self, mean: float = 0.0, std: float = 1.0, size=None) -> np.ndarray:
        """Gaussian draws via Box-Muller.

        Each draw consumes exactly two counter positions, so a fill is
        bit-identical however the calls are chunked.
        """
        shape = () if size is None else tuple(np.atleast_1d(size)) if not np.isscalar(size) else (size,)
        n = int(np.prod(shape)) if shape else 1
        block = self._raw(2 * n)
        # u1 in (0, 1] so log never sees zero
        u1 = ((block[0::2] >> np.uint64(11)) + np.uint64(1)) * (2.0 ** -53)
        u2 = (block[1::2] >> np.uint64(11)) * (2.0 ** -53)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        out = mean + std * z
        return out.reshape(shape) if shape else out[0]

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): argsort of random keys."""
        return np.argsort(self._raw(n), kind="stable")

    def integers(self, upper: int, size=None) -> np.ndarray:
        """Draws in [0, upper) by modular reduction (upper << 2^64)."""
        shape = () if size is None else tuple(np.atleast_1d(size)) if not np.isscalar(size) else (size,)
        n = int(np.prod(shape)) if shape else 1
        v = (self._raw(n) % np.uint64(upper)).astype(np.int64)
        return v.reshape(shape) if shape else int(v[0])

    def choice(self, options):
        """Pick one element of a sequence."""
        return options[self.integers(len(options))]
