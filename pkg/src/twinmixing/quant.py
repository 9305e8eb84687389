"""Simulated INT8 post-training quantization (quantize-dequantize).

Weights are mapped to a signed 8-bit per-tensor affine grid and back,
so downstream code keeps real-typed tensors whose values are restricted
to 256 levels.  Calibration is symmetric (zero point 0), which suits
zero-centered weight distributions and gives the simple round-trip
bound |x - qdq(x)| <= scale/2 inside the representable range.  Rounding
is half-to-even, so the mapping is unbiased, deterministic and
platform-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ConvWeights
from .model import WeightStore
from .tensor import DTYPE

QMIN, QMAX = -128, 127
SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("quantization scale must be positive")
        if not QMIN <= self.zero_point <= QMAX:
            raise ValueError(f"zero point {self.zero_point} outside [{QMIN}, {QMAX}]")


def calibrate(t: np.ndarray) -> QuantParams:
    """Symmetric per-tensor calibration: scale = max|t| / 127, zero point 0."""
    t = np.asarray(t)
    if t.size == 0:
        raise ValueError("cannot calibrate an empty tensor")
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot calibrate a tensor with non-finite values")
    amax = float(np.max(np.abs(t)))
    return QuantParams(scale=max(amax / QMAX, SCALE_FLOOR), zero_point=0)


def quant_dequant(t: np.ndarray, p: QuantParams) -> np.ndarray:
    """Snap values to the 256-level grid: round half to even, clamp, rescale."""
    x = np.asarray(t, dtype=np.float64)
    q = np.clip(np.rint(x / p.scale) + p.zero_point, QMIN, QMAX)
    return (p.scale * (q - p.zero_point)).astype(DTYPE)


@dataclass(frozen=True)
class QuantRow:
    tensor: str
    scale: float
    max_abs_error: float


def quantize_model(weights: WeightStore) -> tuple[WeightStore, list[QuantRow]]:
    """Quantize-dequantize every conv weight tensor with its own calibrated
    parameters; biases and normalization parameters stay full precision.
    Returns the new store plus a per-tensor error report."""
    out: WeightStore = {}
    rows: list[QuantRow] = []
    for path, entry in weights.items():
        if isinstance(entry, ConvWeights):
            p = calibrate(entry.weights)
            qdq = quant_dequant(entry.weights, p)
            rows.append(QuantRow(
                tensor=f"{path}.weight",
                scale=p.scale,
                max_abs_error=float(np.max(np.abs(qdq - entry.weights), initial=0.0)),
            ))
            out[path] = ConvWeights(weights=qdq, bias=entry.bias)
        else:
            out[path] = entry
    return out, rows


def quantize_raw(tensors: list[tuple[str, np.ndarray]]) -> tuple[list[tuple[str, np.ndarray]], list[QuantRow]]:
    """Raw-tensor variant for weight files without a companion config:
    every rank-4 ``*.weight`` tensor is a conv weight and gets quantized."""
    out: list[tuple[str, np.ndarray]] = []
    rows: list[QuantRow] = []
    for name, arr in tensors:
        if name.endswith(".weight") and arr.ndim == 4:
            p = calibrate(arr)
            qdq = quant_dequant(arr, p)
            rows.append(QuantRow(
                tensor=name,
                scale=p.scale,
                max_abs_error=float(np.max(np.abs(qdq - arr), initial=0.0)),
            ))
            out.append((name, qdq))
        else:
            out.append((name, arr))
    return out, rows


def quant_report_csv(rows: list[QuantRow]) -> str:
    lines = ["tensor,scale,max_abs_error"]
    lines += [f"{r.tensor},{r.scale!r},{r.max_abs_error!r}" for r in rows]
    return "\n".join(lines) + "\n"
