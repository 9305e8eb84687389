"""Dense NCHW tensor core.

The universal value type of this package is a 4-D, C-contiguous,
float32 numpy array in (batch, channel, height, width) layout, frozen
(read-only) after construction.  There is deliberately no broadcasting:
every fusion site in the network has equal shapes by construction, and
rejecting mismatches catches graph-wiring bugs early.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ShapeError

DTYPE = np.float32


class Shape(NamedTuple):
    n: int
    c: int
    h: int
    w: int

    @classmethod
    def of(cls, x: np.ndarray) -> "Shape":
        return cls(*x.shape)

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w


def freeze(x: np.ndarray) -> np.ndarray:
    """Mark an array read-only and return it."""
    x.flags.writeable = False
    return x


def tensor(data, check_finite: bool = True) -> np.ndarray:
    """Build a frozen NCHW float32 tensor from array-like data."""
    x = np.ascontiguousarray(data, dtype=DTYPE)
    if x.ndim != 4:
        raise ShapeError(f"tensor must be 4-D (n, c, h, w), got shape {x.shape}")
    if check_finite and not np.all(np.isfinite(x)):
        raise ValueError("tensor contains non-finite elements")
    return freeze(x)


def zeros(shape) -> np.ndarray:
    return freeze(np.zeros(tuple(shape), dtype=DTYPE))


def full(shape, value: float) -> np.ndarray:
    return freeze(np.full(tuple(shape), value, dtype=DTYPE))


def check_nchw(x: np.ndarray, name: str = "input") -> None:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D array, got {getattr(x, 'shape', type(x))}")
    if x.dtype != DTYPE:
        raise ShapeError(f"{name} must be float32, got {x.dtype}")


def offset_of(shape: Shape, n: int, c: int, h: int, w: int) -> int:
    """Linear offset of element (n, c, h, w) in row-major NCHW order."""
    if not (0 <= n < shape.n and 0 <= c < shape.c and 0 <= h < shape.h and 0 <= w < shape.w):
        raise IndexError(f"index ({n},{c},{h},{w}) out of bounds for shape {tuple(shape)}")
    return ((n * shape.c + c) * shape.h + h) * shape.w + w


def coords_of(shape: Shape, offset: int) -> tuple[int, int, int, int]:
    """Inverse of :func:`offset_of`."""
    if not 0 <= offset < shape.size:
        raise IndexError(f"offset {offset} out of bounds for shape {tuple(shape)}")
    rest, w = divmod(offset, shape.w)
    rest, h = divmod(rest, shape.h)
    n, c = divmod(rest, shape.c)
    return n, c, h, w


def elementwise_combine(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Componentwise add/mul of two equal-shape tensors.

    Shapes must match exactly; there is no broadcasting.
    """
    check_nchw(a, "a")
    check_nchw(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch for elementwise {op}: {a.shape} vs {b.shape}")
    if op == "add":
        return freeze(np.add(a, b))
    if op == "mul":
        return freeze(np.multiply(a, b))
    raise ValueError(f"unknown elementwise op {op!r}, expected 'add' or 'mul'")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return elementwise_combine(a, b, "add")


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return elementwise_combine(a, b, "mul")


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    """Concatenate tensors along the channel axis, preserving list order."""
    if not parts:
        raise ShapeError("concat_channels requires a non-empty list")
    for i, p in enumerate(parts):
        check_nchw(p, f"parts[{i}]")
    ref = parts[0].shape
    for i, p in enumerate(parts[1:], start=1):
        if (p.shape[0], p.shape[2], p.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(
                f"concat_channels batch/spatial mismatch: parts[0] {ref} vs parts[{i}] {p.shape}"
            )
    if len(parts) == 1:
        return parts[0]
    return freeze(np.concatenate(parts, axis=1))


def slice_channels(x: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Channel slice [start, stop); a read-only view, no copy."""
    check_nchw(x)
    if not 0 <= start <= stop <= x.shape[1]:
        raise ShapeError(f"channel slice [{start}:{stop}) out of range for c={x.shape[1]}")
    return x[:, start:stop]
