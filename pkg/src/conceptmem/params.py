"""Named parameter sets, initialization, and a binary checkpoint format.

A ParamSet maps dotted names to trainable leaf Nodes plus non-trainable
state arrays (batchnorm running statistics). Checkpoints serialize both
kinds losslessly: little-endian float64 payloads, so a save/load
round-trip is bit-identical.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, leaf
from .errors import CheckpointError, ContractError
from .rng import Xoshiro256

MAGIC = b"CMEMCKPT"
VERSION = 1


def glorot_uniform(rng: Xoshiro256, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ContractError(f"glorot fans must be positive, got {fan_in}/{fan_out}")
    a = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform_array(shape, -a, a)


@dataclass
class ParamSet:
    """Dotted-name registry of trainable leaves and auxiliary state."""

    params: dict[str, Node] = field(default_factory=dict)
    state: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, name: str, values: np.ndarray) -> Node:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        node = leaf(values, tag=name)
        self.params[name] = node
        return node

    def add_state(self, name: str, values: np.ndarray) -> np.ndarray:
        if name in self.state:
            raise ContractError(f"duplicate state name {name!r}")
        arr = np.asarray(values, dtype=np.float64)
        self.state[name] = arr
        return arr

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for node in self.params.values():
            node.grad = None

    def n_scalars(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def merge(self, other: "ParamSet", prefix: str) -> None:
        """Mount another set's entries under `prefix.`; nodes are shared."""
        for name, node in other.params.items():
            full = f"{prefix}.{name}"
            if full in self.params:
                raise ContractError(f"duplicate parameter name {full!r}")
            self.params[full] = node
        for name, arr in other.state.items():
            full = f"{prefix}.{name}"
            if full in self.state:
                raise ContractError(f"duplicate state name {full!r}")
            self.state[full] = arr

    def subset(self, prefix: str) -> "ParamSet":
        """View of entries under `prefix.`, names stripped of the prefix.

        Nodes and state arrays are shared with the parent, so loading
        into the subset updates the parent in place.
        """
        dot = prefix + "."
        out = ParamSet()
        out.params = {n[len(dot):]: p for n, p in self.params.items() if n.startswith(dot)}
        out.state = {n[len(dot):]: s for n, s in self.state.items() if n.startswith(dot)}
        return out


def save_checkpoint(path: str, pset: ParamSet, meta: dict | None = None) -> None:
    """Write every parameter and state array with names, kinds and shapes."""
    entries = [("param", n, pset.params[n].value) for n in sorted(pset.params)]
    entries += [("state", n, pset.state[n]) for n in sorted(pset.state)]
    header = {
        "meta": dict(meta or {}),
        "entries": [
            {"name": n, "kind": kind, "shape": list(arr.shape)} for kind, n, arr in entries
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for _, _, arr in entries:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint_header(path: str) -> tuple[dict, list[dict]]:
    """Meta dict and entry descriptors (name/kind/shape) without needing a
    matching ParamSet; payloads are not decoded."""
    with open(path, "rb") as fh:
        raw = fh.read(16)
        if raw[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        version, hlen = struct.unpack("<II", raw[8:16])
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    return header["meta"], header["entries"]


def load_checkpoint(path: str, pset: ParamSet, strict: bool = True) -> dict:
    """Load arrays into an existing ParamSet in place; returns the meta dict.

    strict=True requires an exact name match in both directions; with
    strict=False entries absent from `pset` are skipped (the transplant
    path: load a subset view to fill one namespace from a saved set).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    offset = 16 + hlen
    seen = set()
    for entry in header["entries"]:
        name, kind, shape = entry["name"], entry["kind"], tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated payload at {name!r}")
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
        target = pset.params if kind == "param" else pset.state
        if name not in target:
            if strict:
                raise CheckpointError(f"{path}: unexpected {kind} {name!r}")
            continue
        seen.add((kind, name))
        if kind == "param":
            node = pset.params[name]
            if node.value.shape != shape:
                raise CheckpointError(
                    f"{path}: {name!r} has shape {shape}, expected {node.value.shape}")
            node.value = np.ascontiguousarray(arr)
        else:
            if pset.state[name].shape != shape:
                raise CheckpointError(
                    f"{path}: {name!r} has shape {shape}, expected {pset.state[name].shape}")
            pset.state[name][...] = arr
    if strict:
        missing = [n for n in pset.params if ("param", n) not in seen]
        missing += [n for n in pset.state if ("state", n) not in seen]
        if missing:
            raise CheckpointError(f"{path}: entries missing for {sorted(missing)}")
    return header["meta"]
