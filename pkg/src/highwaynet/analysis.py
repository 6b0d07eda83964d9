"""Gate and block introspection for trained (or fresh) gated networks.

Produces, per body layer and per block: the learned gate bias, the gate's
mean output over a sample set, its output for one probe sample, and that
sample's block outputs.  The numbers are exported as CSV heatmap tables
(layers down the rows, blocks across the columns); rendering is left to
external plotting.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, batches
from .layers import HighwayLayer, Network


class AnalysisError(ValueError):
    """Raised when a network has nothing to introspect (no gated body)."""


@dataclass
class GateReport:
    bias_map: np.ndarray       # [layers, n] learned gate biases
    mean_activity: np.ndarray  # [layers, n] gate output averaged over samples
    sample_trace: np.ndarray   # [layers, n] gate output for the probe sample
    block_outputs: np.ndarray  # [layers, n] layer outputs for the probe sample
    sample_count: int


def gate_report(net: Network, samples: Dataset, probe_index: int = 0,
                max_samples: int = 10000, batch_size: int = 512) -> GateReport:
    """Observe the gates; the network is left untouched.

    Mean activity averages each gate's output over the first
    min(max_samples, len(samples)) examples.  The probe sample additionally
    contributes its per-layer gate trace and block outputs.
    """
    if not net.body or not isinstance(net.body[0], HighwayLayer):
        raise AnalysisError(
            f"gate analysis needs a dense gated body, network has {net.body_kind!r}"
        )
    if samples.count == 0:
        raise ValueError("empty sample set")
    if not 0 <= probe_index < samples.count:
        raise ValueError(f"probe index {probe_index} outside [0, {samples.count})")

    used = min(max_samples, samples.count)
    layers = len(net.body)
    width = net.body[0].out_width
    sums = np.zeros((layers, width))
    flat = samples.flattened()
    seen = 0
    capped = Dataset(flat.inputs[:used], flat.labels[:used], flat.num_classes, flat.name)
    for xb, _ in batches(capped, batch_size):
        _, caches = net.forward_caches(xb)
        for row, (name, layer, cache) in enumerate(c for c in caches if c[0] != "input"):
            sums[row] += cache["t"].sum(axis=0)
        seen += xb.shape[0]
    mean_activity = sums / seen

    probe = flat.inputs[probe_index:probe_index + 1]
    y, caches = net.forward_caches(probe)
    body_caches = [c for c in caches if c[0] != "input"]
    sample_trace = np.stack([cache["t"][0] for _, _, cache in body_caches])
    outputs = []
    cursor = probe
    if net.input_layer is not None:
        cursor, _ = net.input_layer.forward(cursor)
    for layer in net.body:
        cursor, _ = layer.forward(cursor)
        outputs.append(cursor[0].copy())
    block_outputs = np.stack(outputs)

    bias_map = np.stack([layer.b_T.copy() for layer in net.body])
    return GateReport(bias_map, mean_activity, sample_trace, block_outputs, seen)


def gate_sparsity(report: GateReport, threshold: float = 0.1) -> dict:
    """Per-layer fraction of gates with activity below the threshold.

    Reporting convention only; returned for both the mean activity and the
    single-sample trace.
    """
    return {
        "mean": (report.mean_activity < threshold).mean(axis=1),
        "sample": (report.sample_trace < threshold).mean(axis=1),
    }


def bias_activity_correlation(report: GateReport) -> float:
    """Pearson correlation between per-layer mean bias and mean activity.

    Purely descriptive; trained networks tend to show this negative, with
    strongly negative biases marking the selective (not shut-off) layers.
    """
    bias = report.bias_map.mean(axis=1)
    act = report.mean_activity.mean(axis=1)
    if bias.std() == 0 or act.std() == 0:
        return float("nan")
    return float(np.corrcoef(bias, act)[0, 1])


_CSV_NAMES = ("bias_map", "mean_activity", "sample_trace", "block_outputs")


def _write_matrix(path, matrix: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write(",".join(f"block_{j}" for j in range(matrix.shape[1])) + "\n")
        for row in matrix:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def export_report(report: GateReport, out_dir) -> list[str]:
    """Write the four heatmap tables; rows are layers with depth increasing
    downward, columns are blocks.  Returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in _CSV_NAMES:
        path = os.path.join(out_dir, f"{name}.csv")
        try:
            _write_matrix(path, getattr(report, name))
        except OSError as exc:
            raise OSError(f"could not write {path}: {exc}") from exc
        paths.append(path)
    return paths


def load_matrix_csv(path) -> np.ndarray:
    """Read back a table written by export_report (full printed precision)."""
    with open(path) as f:
        next(f)  # header
        rows = [[float(v) for v in line.strip().split(",")] for line in f if line.strip()]
    return np.array(rows)
