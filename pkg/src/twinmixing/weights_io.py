"""TWMX binary weight container.

Layout (all integers unsigned 32-bit little-endian):

    magic "TWMX" | version | tensor count
    per tensor: name length | name (UTF-8) | rank | dims... | float32-LE payload

A weight store flattens to one record per tensor: ``<layer>.weight`` /
``.bias`` for convolutions and ``<layer>.gamma`` / ``.beta`` / ``.mean``
/ ``.var`` (/ ``.slope`` for PReLU) for normalization layers.  Save and
load round-trip bitwise.  Writes go through a temp file and an atomic
rename.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import ConfigError, WeightFormatError
from .kernels import BnActParams, ConvWeights
from .model import BN_EPS, ConvNode, ModelGraph, WeightStore
from .tensor import DTYPE

MAGIC = b"TWMX"
VERSION = 1

RawTensors = list[tuple[str, np.ndarray]]


def flatten_store(store: WeightStore) -> RawTensors:
    out: RawTensors = []
    for path, entry in store.items():
        if isinstance(entry, ConvWeights):
            out.append((f"{path}.weight", entry.weights))
            if entry.bias is not None:
                out.append((f"{path}.bias", entry.bias))
        elif isinstance(entry, BnActParams):
            out.append((f"{path}.gamma", entry.gamma))
            out.append((f"{path}.beta", entry.beta))
            out.append((f"{path}.mean", entry.mean))
            out.append((f"{path}.var", entry.var))
            if entry.slope is not None:
                out.append((f"{path}.slope", entry.slope))
        else:
            raise ConfigError(f"store entry '{path}' has unsupported type {type(entry).__name__}")
    return out


def save_raw(tensors: RawTensors, path: str) -> None:
    names = [n for n, _ in tensors]
    if len(set(names)) != len(names):
        raise ConfigError("tensor names must be unique")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype=DTYPE)
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    blob = b"".join(chunks)

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".twmx-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_raw(path: str) -> RawTensors:
    with open(path, "rb") as fh:
        blob = fh.read()

    view = memoryview(blob)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise WeightFormatError(f"truncated weight file: expected {what} at byte {pos}")
        chunk = view[pos: pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise WeightFormatError(f"bad magic in {path!r}: not a TWMX weight file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")

    tensors: RawTensors = []
    seen: set[str] = set()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        if name in seen:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        seen.add(name)
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = 1
        for d in dims:
            size *= d
        payload = take(4 * size, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(DTYPE)
        tensors.append((name, arr))
    if pos != len(view):
        raise WeightFormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return tensors


def save_weights(store: WeightStore, path: str) -> None:
    save_raw(flatten_store(store), path)


def load_weights(path: str, graph: ModelGraph) -> WeightStore:
    """Load and validate a store against the model plan.

    Every declared layer must be present with matching shapes; tensors
    for unknown layers are rejected by name.
    """
    raw = dict(read_raw(path))
    store: WeightStore = {}
    used: set[str] = set()

    def grab(name: str, shape: tuple[int, ...]) -> np.ndarray:
        if name not in raw:
            raise ConfigError(f"weight file missing tensor '{name}'")
        used.add(name)
        arr = raw[name]
        if arr.shape != shape:
            raise ConfigError(f"tensor '{name}' has shape {arr.shape}, expected {shape}")
        return arr

    for node in graph.nodes():
        p = node.path
        if isinstance(node, ConvNode):
            weights = grab(f"{p}.weight", node.weight_shape)
            bias = grab(f"{p}.bias", (node.out_channels,)) if node.spec.has_bias else None
            if not node.spec.has_bias and f"{p}.bias" in raw:
                raise ConfigError(f"tensor '{p}.bias' present but layer takes no bias")
            store[p] = ConvWeights(weights=weights, bias=bias)
        else:
            c = (node.channels,)
            slope = None
            if node.activation == "prelu":
                slope = grab(f"{p}.slope", c)
            store[p] = BnActParams(
                gamma=grab(f"{p}.gamma", c),
                beta=grab(f"{p}.beta", c),
                mean=grab(f"{p}.mean", c),
                var=grab(f"{p}.var", c),
                eps=BN_EPS,
                activation=node.activation,
                slope=slope,
            )

    orphans = sorted(set(raw) - used)
    if orphans:
        raise ConfigError(f"weight file contains tensors for unknown layers: {orphans}")
    return store
