"""Versioned checkpoint container for networks.

Layout (documented contract, covered by a byte round-trip test):

  bytes 0..7    magic b"HWNETCK1"
  bytes 8..11   header length N, little-endian uint32
  bytes 12..12+N  UTF-8 JSON header
  rest          parameter blobs, little-endian float64, concatenated in
                header order

The header records the architecture and, per parameter, its name and shape:

  {"format": 1,
   "body_kind": "plain" | "highway" | "conv-highway",
   "activation": "relu" | "tanh" | "identity",
   "has_input_layer": bool,
   "params": [{"name": "input.W_H", "shape": [50, 784]}, ...]}

Loading rebuilds the network and restores parameters bit-identically.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import ConvHighwayLayer, HighwayLayer, Network, PlainLayer, SoftmaxHead

MAGIC = b"HWNETCK1"


class CheckpointError(ValueError):
    """Raised for malformed or truncated checkpoint files."""


def save_checkpoint(net: Network, path) -> None:
    params = net.parameters()
    header = {
        "format": 1,
        "body_kind": net.body_kind,
        "activation": (net.body[0].activation if net.body
                       else net.input_layer.activation),
        "has_input_layer": net.input_layer is not None,
        "params": [{"name": name, "shape": list(p.shape)} for name, p in params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, p in params:
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _group_params(entries):
    """Group header entries by layer prefix, preserving order."""
    groups: dict[str, dict[str, list]] = {}
    for e in entries:
        prefix, field = e["name"].rsplit(".", 1)
        groups.setdefault(prefix, {})[field] = e["shape"]
    return groups


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {raw[:8]!r} in {path}")
    if len(raw) < 12:
        raise CheckpointError(f"truncated checkpoint header in {path}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header in {path}: {exc}") from exc
    if header.get("format") != 1:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")

    offset = 12 + header_len
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"truncated parameter blob {entry['name']!r} in {path}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(
            np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes in {path}")

    activation = header["activation"]
    groups = _group_params(header["params"])

    def build(prefix):
        fields = groups[prefix]
        get = lambda f: arrays[f"{prefix}.{f}"]
        if "W" in fields:
            return SoftmaxHead(get("W"), get("b"))
        if "K_H" in fields:
            return ConvHighwayLayer(get("K_H"), get("b_H"), get("K_T"), get("b_T"), activation)
        if "W_T" in fields:
            return HighwayLayer(get("W_H"), get("b_H"), get("W_T"), get("b_T"), activation)
        return PlainLayer(get("W_H"), get("b_H"), activation)

    input_layer = build("input") if header["has_input_layer"] else None
    body = [build(f"body.{i}") for i in range(sum(1 for g in groups if g.startswith("body.")))]
    head = build("head")
    return Network(input_layer, body, head)
