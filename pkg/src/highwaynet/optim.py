"""Minibatch SGD with classical momentum and per-epoch lr decay.

The training loop is deliberately plain: shuffle, step through minibatches, decay
the rate once per epoch, and measure the full training set after every
epoch.  Divergence (non-finite loss) ends the run with a status instead of
propagating NaNs into the log.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, batches
from .layers import Network, network_forward_backward
from .ops import Rng, ShapeError


@dataclass(frozen=True)
class SgdConfig:
    lr0: float
    momentum: float = 0.9
    decay: float = 1.0
    epochs: int = 10
    batch_size: int = 64

    def __post_init__(self):
        # lr0 == 0 is allowed as the null update; useful in tests
        if not self.lr0 >= 0:
            raise ValueError(f"lr0 must be non-negative, got {self.lr0}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    entries: list[EpochStats] = field(default_factory=list)
    diverged: bool = False

    def losses(self) -> list[float]:
        return [e.loss for e in self.entries]

    def best_loss(self) -> float:
        return min(self.losses(), default=float("inf"))

    def final_loss(self) -> float:
        return self.entries[-1].loss if self.entries else float("inf")

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("epoch,loss,accuracy,lr,seconds\n")
            for e in self.entries:
                f.write(f"{e.epoch},{e.loss!r},{e.accuracy!r},{e.lr!r},{e.seconds!r}\n")


def sgd_step(params, grads: dict, velocity: dict, lr: float, momentum: float) -> None:
    """One heavy-ball update per tensor: v <- momentum*v - lr*g; w <- w + v."""
    for name, p in params:
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter {p.shape}")
        v = velocity[name]
        v *= momentum
        v -= lr * g
        p += v


def evaluate(net: Network, ds: Dataset, batch_size: int = 512):
    """Mean cross-entropy and accuracy over the whole dataset."""
    total_loss, correct = 0.0, 0
    for xb, yb in batches(ds, batch_size):
        flat, _ = net.forward_caches(xb)
        flat = net._flatten(flat)
        loss, probs, _, _ = net.head.forward_backward(flat, yb)
        total_loss += loss * xb.shape[0]
        correct += int((probs.argmax(axis=1) == yb).sum())
    return total_loss / ds.count, correct / ds.count


def train(net: Network, ds: Dataset, cfg: SgdConfig, rng: Rng):
    """Optimize the network in place; returns (net, TrainLog).

    After each epoch the log records the loss/accuracy of a fresh pass over
    the full training set, the lr used during the epoch (lr0 * decay^e
    exactly), and wall time.  A non-finite minibatch loss stops the run and
    flags the log as diverged.
    """
    velocity = {name: np.zeros_like(p) for name, p in net.parameters()}
    params = net.parameters()
    log = TrainLog()
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for epoch in range(cfg.epochs):
            lr = cfg.lr0 * cfg.decay ** epoch
            started = time.perf_counter()
            for xb, yb in batches(ds, cfg.batch_size, rng):
                loss, grads = network_forward_backward(net, xb, yb)
                if not np.isfinite(loss):
                    log.diverged = True
                    return net, log
                sgd_step(params, grads, velocity, lr, cfg.momentum)
            epoch_loss, epoch_acc = evaluate(net, ds)
            seconds = time.perf_counter() - started
            if not np.isfinite(epoch_loss):
                log.diverged = True
                return net, log
            log.entries.append(EpochStats(epoch + 1, float(epoch_loss), float(epoch_acc),
                                          lr, seconds))
    return net, log
