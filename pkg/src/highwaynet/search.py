"""Random hyperparameter search over seeded, independently re-runnable trials.

Each trial samples a configuration (log-uniform lr, uniform momentum/decay/
gate bias, a coin flip for the activation), initializes a fresh network, and
trains it; trials are ranked by the best training cross-entropy they ever
logged, diverged trials last.  Trial i's seed is derived from the master
seed by XOR with splitmix64(i), so any single trial can be reproduced
standalone and parallel execution cannot change the outcome.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .data import Dataset
from .init import InitScheme, build_network, init_network
from .ops import Rng, derive_seed
from .optim import SgdConfig, TrainLog, train


@dataclass(frozen=True)
class SearchSpace:
    lr0: tuple = (1e-3, 1e-1)          # log-uniform
    momentum: tuple = (0.5, 0.99)      # uniform
    decay: tuple = (0.9, 1.0)          # uniform
    activations: tuple = ("relu", "tanh")
    gate_bias: tuple | None = (-10.0, -1.0)  # uniform; None for plain networks
    trials: int = 5
    epochs: int = 15
    batch_size: int = 64

    def __post_init__(self):
        for name in ("lr0", "momentum", "decay"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range is empty: ({lo}, {hi})")
        if not self.lr0[0] > 0:
            raise ValueError(f"lr0 range must be positive for log-uniform sampling: {self.lr0}")
        if self.gate_bias is not None and not self.gate_bias[0] <= self.gate_bias[1]:
            raise ValueError(f"gate_bias range is empty: {self.gate_bias}")
        if not self.activations:
            raise ValueError("need at least one activation")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    def without_gate_bias(self) -> "SearchSpace":
        return replace(self, gate_bias=None)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float
    momentum: float
    decay: float
    activation: str
    gate_bias: float | None
    epochs: int
    batch_size: int

    def sgd(self) -> SgdConfig:
        return SgdConfig(self.lr0, self.momentum, self.decay, self.epochs, self.batch_size)


@dataclass
class TrialResult:
    trial: int
    config: TrainConfig
    seed: int
    status: str              # "ok" | "diverged"
    best_loss: float
    final_loss: float
    log: TrainLog


@dataclass(frozen=True)
class NetworkTemplate:
    """Architecture shared by every trial; activation/bias come per config."""
    kind: str                # "plain" | "highway" | "conv-highway"
    depth: int
    width: int
    in_features: int
    classes: int
    init_kind: str = "he"
    image_shape: tuple | None = None
    kernel_size: int = 3

    def build(self, config: TrainConfig, init_seed: int):
        net = build_network(self.kind, self.depth, self.width, self.in_features,
                            self.classes, config.activation,
                            image_shape=self.image_shape, kernel_size=self.kernel_size)
        gate_bias = config.gate_bias if config.gate_bias is not None else -2.0
        return init_network(net, InitScheme(self.init_kind, gate_bias, init_seed))


def sample_config(space: SearchSpace, rng: Rng) -> TrainConfig:
    """One independent draw per searched field."""
    lo, hi = space.lr0
    lr0 = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    momentum = float(rng.uniform(*space.momentum))
    decay = float(rng.uniform(*space.decay))
    activation = rng.choice(space.activations)
    gate_bias = float(rng.uniform(*space.gate_bias)) if space.gate_bias is not None else None
    return TrainConfig(lr0, momentum, decay, activation, gate_bias,
                       space.epochs, space.batch_size)


def run_trial(template: NetworkTemplate, dataset: Dataset, config: TrainConfig,
              seed: int, trial: int = 0) -> TrialResult:
    """Train one sampled configuration; reproducible from (config, seed)."""
    net = template.build(config, derive_seed(seed, 1))
    _, log = train(net, dataset, config.sgd(), Rng(derive_seed(seed, 2)))
    status = "diverged" if log.diverged else "ok"
    return TrialResult(trial, config, seed, status, log.best_loss(), log.final_loss(), log)


def _trial_for_index(args):
    template, dataset, space, master_seed, i = args
    seed = derive_seed(master_seed, i)
    config = sample_config(space, Rng(derive_seed(seed, 0)))
    return run_trial(template, dataset, config, seed, trial=i)


def run_search(space: SearchSpace, template: NetworkTemplate, dataset: Dataset,
               master_seed: int, jobs: int = 1) -> list[TrialResult]:
    """Run the whole search; returns trials ranked best-first.

    Ranking is ascending best training cross-entropy with diverged trials
    last; ties break on trial index, so serial and parallel runs agree.
    """
    if template.kind == "plain":
        space = space.without_gate_bias()
    work = [(template, dataset, space, master_seed, i) for i in range(space.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_for_index, work))
    else:
        results = [_trial_for_index(w) for w in work]
    results.sort(key=lambda r: (r.status != "ok", r.best_loss, r.trial))
    return results


def write_search_csv(results: list[TrialResult], path) -> None:
    """Summary CSV: one row per trial in ranked order."""
    with open(path, "w") as f:
        f.write("trial,status,lr0,momentum,decay,activation,gate_bias,best_loss,final_loss,seed\n")
        for r in results:
            c = r.config
            gate = "" if c.gate_bias is None else repr(c.gate_bias)
            f.write(f"{r.trial},{r.status},{c.lr0!r},{c.momentum!r},{c.decay!r},"
                    f"{c.activation},{gate},{r.best_loss!r},{r.final_loss!r},{r.seed}\n")
