"""Dataset ingestion and batching.

Parsers for the big-endian IDX image/label container and the CIFAR-10/100
binary record layout, both bit-exact with byte round-trips, plus uniform
subsetting, epoch batching, and a deterministic synthetic digit generator
used when the real archives are not on disk (no downloads happen in the
library; see tools/fetch_mnist.py).

Pixels are normalized to [0, 1] by dividing by 255; nothing else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .ops import Rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_PIXELS = 3072  # 3 x 32 x 32


class FormatError(ValueError):
    """Raised for malformed dataset files (bad magic, truncation, ...)."""


@dataclass
class Dataset:
    inputs: np.ndarray   # [count, features] or [count, c, h, w], float64 in [0, 1]
    labels: np.ndarray   # [count] integer class ids
    num_classes: int
    name: str

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise FormatError(
                f"count mismatch: {self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise FormatError(
                f"label {int(self.labels.max())} outside [0, {self.num_classes})"
            )

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def features(self) -> int:
        return int(np.prod(self.inputs.shape[1:]))

    def flattened(self) -> "Dataset":
        """View with image inputs flattened to [count, features]."""
        if self.inputs.ndim == 2:
            return self
        return Dataset(self.inputs.reshape(self.count, -1), self.labels,
                       self.num_classes, self.name)


def _read_be32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise FormatError(f"truncated header in {path}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair (the MNIST container format)."""
    with open(images_path, "rb") as f:
        raw = f.read()
    magic = _read_be32(raw, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"bad image magic 0x{magic:08x} in {images_path} (want 0x{IDX_IMAGE_MAGIC:08x})"
        )
    count = _read_be32(raw, 4, images_path)
    rows = _read_be32(raw, 8, images_path)
    cols = _read_be32(raw, 12, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if pixels.size != count * rows * cols:
        raise FormatError(
            f"{images_path}: expected {count * rows * cols} pixels, found {pixels.size}"
        )

    with open(labels_path, "rb") as f:
        raw_l = f.read()
    magic_l = _read_be32(raw_l, 0, labels_path)
    if magic_l != IDX_LABEL_MAGIC:
        raise FormatError(
            f"bad label magic 0x{magic_l:08x} in {labels_path} (want 0x{IDX_LABEL_MAGIC:08x})"
        )
    count_l = _read_be32(raw_l, 4, labels_path)
    labels = np.frombuffer(raw_l, dtype=np.uint8, offset=8)
    if labels.size != count_l:
        raise FormatError(f"{labels_path}: expected {count_l} labels, found {labels.size}")
    if count != count_l:
        raise FormatError(f"image count {count} != label count {count_l}")

    inputs = pixels.astype(np.float64).reshape(count, rows * cols) / 255.0
    labels = labels.astype(np.int64)
    num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(inputs, labels, num_classes, "idx")


def save_idx(ds: Dataset, images_path, labels_path, rows: int = 28, cols: int = 28) -> None:
    """Write a dataset back to IDX; inverse of load_idx down to raw bytes."""
    flat = ds.flattened()
    if flat.features != rows * cols:
        raise FormatError(f"{flat.features} features do not fill {rows}x{cols} images")
    pixels = np.rint(flat.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, flat.count, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, flat.count))
        f.write(flat.labels.astype(np.uint8).tobytes())


def load_cifar_binary(paths, variant: str = "cifar10", as_images: bool = False) -> Dataset:
    """Parse CIFAR binary batch files.

    cifar10 records are 1 label byte + 3072 pixel bytes; cifar100 records
    carry 2 label bytes (coarse then fine) and the fine label is kept.
    Inputs come back flattened to 3072 features unless as_images is set.
    """
    if variant not in ("cifar10", "cifar100"):
        raise ValueError(f"unknown CIFAR variant: {variant!r}")
    label_bytes = 1 if variant == "cifar10" else 2
    record = label_bytes + CIFAR_PIXELS
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]

    all_pixels, all_labels = [], []
    for path in paths:
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % record != 0:
            raise FormatError(
                f"{path}: size {len(raw)} is not a multiple of the {record}-byte record"
            )
        data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        all_labels.append(data[:, label_bytes - 1].astype(np.int64))  # fine label last
        all_pixels.append(data[:, label_bytes:])
    pixels = np.concatenate(all_pixels)
    labels = np.concatenate(all_labels)
    inputs = pixels.astype(np.float64) / 255.0
    if as_images:
        inputs = inputs.reshape(-1, 3, 32, 32)
    num_classes = 10 if variant == "cifar10" else 100
    return Dataset(inputs, labels, num_classes, variant)


def save_cifar_binary(ds: Dataset, path, variant: str = "cifar10",
                      coarse_labels: np.ndarray | None = None) -> None:
    """Write CIFAR-format records; inverse of load_cifar_binary."""
    flat = ds.flattened()
    if flat.features != CIFAR_PIXELS:
        raise FormatError(f"{flat.features} features do not fill 3x32x32 images")
    pixels = np.rint(flat.inputs * 255.0).astype(np.uint8)
    fine = flat.labels.astype(np.uint8)[:, None]
    if variant == "cifar10":
        records = np.concatenate([fine, pixels], axis=1)
    else:
        if coarse_labels is None:
            coarse_labels = np.zeros(flat.count, dtype=np.uint8)
        records = np.concatenate([coarse_labels.astype(np.uint8)[:, None], fine, pixels], axis=1)
    with open(path, "wb") as f:
        f.write(records.tobytes())


def subset(ds: Dataset, n: int, rng: Rng) -> Dataset:
    """Uniform sample of n examples without replacement."""
    if n > ds.count:
        raise ValueError(f"cannot take {n} of {ds.count} examples")
    idx = rng.permutation(ds.count)[:n]
    return Dataset(ds.inputs[idx], ds.labels[idx], ds.num_classes, ds.name)


def batches(ds: Dataset, batch_size: int, rng: Rng | None = None):
    """Yield (inputs, labels) minibatches covering each example once.

    With an rng the epoch order is a fresh full permutation (inputs and
    labels stay paired); without one the order is sequential.  The last
    batch may be short.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(ds.count) if rng is not None else np.arange(ds.count)
    for start in range(0, ds.count, batch_size):
        sel = order[start:start + batch_size]
        yield ds.inputs[sel], ds.labels[sel]


def synthetic_digits(count: int, seed: int = 0, side: int = 28,
                     num_classes: int = 10) -> Dataset:
    """Deterministic digit-like image classification set.

    Ten smooth random prototype patterns; each sample is a prototype under a
    random 2-pixel translation, intensity scaling, and pixel noise, then
    quantized to uint8 and scaled back to [0, 1] so it round-trips through
    the IDX container exactly.  Serves as the offline stand-in when the real
    archives are absent.
    """
    rng = Rng(seed)
    coarse = 7
    protos = []
    for _ in range(num_classes):
        field = rng.uniform(0.0, 1.0, size=(coarse, coarse))
        up = np.kron(field, np.ones((side // coarse + 1, side // coarse + 1)))[:side, :side]
        # cheap box blur so the patterns have strokes rather than blocks
        blurred = up.copy()
        for shift in (1, 2):
            blurred += np.roll(up, shift, axis=0) + np.roll(up, -shift, axis=0)
            blurred += np.roll(up, shift, axis=1) + np.roll(up, -shift, axis=1)
        blurred /= 9.0
        lo, hi = blurred.min(), blurred.max()
        proto = (blurred - lo) / (hi - lo)
        proto[proto < 0.55] = 0.0  # sparse background like handwriting
        protos.append(proto)

    labels = rng.integers(num_classes, size=count).astype(np.int64)
    images = np.empty((count, side, side))
    shifts = rng.integers(5, size=(count, 2)) - 2
    intensity = rng.uniform(0.6, 1.0, size=count)
    noise = rng.uniform(0.0, 0.3, size=(count, side, side))
    for i in range(count):
        img = np.roll(protos[labels[i]], (shifts[i, 0], shifts[i, 1]), axis=(0, 1))
        images[i] = np.clip(img * intensity[i] + noise[i], 0.0, 1.0)
    pixels = np.rint(images * 255.0).astype(np.uint8)
    inputs = pixels.astype(np.float64).reshape(count, side * side) / 255.0
    return Dataset(inputs, labels, num_classes, "synthetic")
