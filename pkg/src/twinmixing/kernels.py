"""Primitive neural operators with exact reference semantics.

One ``conv2d`` covers standard, grouped, depthwise, dilated and strided
convolution through :class:`ConvSpec`.  All kernels are pure functions of
their inputs, accumulate in a fixed order and are therefore bitwise
reproducible across calls.

Conventions pinned here (they matter for oracle agreement):

* convolution padding is zero-padding; ``same_padding`` gives
  ``d * (k - 1) // 2`` so odd kernels preserve spatial size at stride 1;
* ``avg_pool`` divides by the full window size, counting padded cells
  (count_include_pad);
* bilinear upsampling uses half-pixel source centers
  ``s = (t + 0.5) / 2 - 0.5`` clamped to the valid range, so constant
  inputs stay exactly constant;
* transposed convolution is the adjoint of ``conv2d`` for the same spec:
  weights are stored ``(in_channels, out_channels, kh, kw)`` and every
  input element scatters its kernel-weighted stamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import DTYPE, check_nchw, freeze


@dataclass(frozen=True)
class ConvSpec:
    """Full convolution parameterization."""

    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1
    padding: tuple[int, int] = (0, 0)
    has_bias: bool = False

    def __post_init__(self):
        for name in ("kernel", "stride", "dilation"):
            v = getattr(self, name)
            if len(v) != 2 or min(v) < 1:
                raise ShapeError(f"ConvSpec.{name} must be a pair of positive ints, got {v}")
        if len(self.padding) != 2 or min(self.padding) < 0:
            raise ShapeError(f"ConvSpec.padding must be a pair of non-negative ints, got {self.padding}")
        if self.groups < 1:
            raise ShapeError(f"ConvSpec.groups must be positive, got {self.groups}")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        """Output spatial size for an (h, w) input; must be >= 1."""
        (kh, kw), (sh, sw) = self.kernel, self.stride
        (dh, dw), (ph, pw) = self.dilation, self.padding
        ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"kernel {self.kernel} dilation {self.dilation} larger than padded input "
                f"({h}x{w}, padding {self.padding})"
            )
        return ho, wo

    def transposed_out_hw(self, h: int, w: int) -> tuple[int, int]:
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        ho = (h - 1) * sh - 2 * ph + kh
        wo = (w - 1) * sw - 2 * pw + kw
        if ho < 1 or wo < 1:
            raise ShapeError(f"transposed conv output would be empty for input {h}x{w}")
        return ho, wo


def same_padding(kernel: tuple[int, int], dilation: tuple[int, int] = (1, 1)) -> tuple[int, int]:
    """Padding that preserves spatial size at stride 1 for odd kernels."""
    return (dilation[0] * (kernel[0] - 1) // 2, dilation[1] * (kernel[1] - 1) // 2)


@dataclass(frozen=True)
class ConvWeights:
    """Convolution weights plus optional bias.

    Regular conv: ``weights[o, ci_in_group, i, j]``, shape
    ``(out_channels, in_channels / groups, kh, kw)``.  Transposed conv
    reads the same container in adjoint orientation:
    ``(in_channels, out_channels, kh, kw)``.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=DTYPE)
        if w.ndim != 4:
            raise ShapeError(f"conv weights must be 4-D, got shape {w.shape}")
        object.__setattr__(self, "weights", freeze(w))
        if self.bias is not None:
            b = np.ascontiguousarray(self.bias, dtype=DTYPE)
            if b.ndim != 1:
                raise ShapeError(f"conv bias must be 1-D, got shape {b.shape}")
            object.__setattr__(self, "bias", freeze(b))


_ACTIVATIONS = ("none", "relu", "prelu")


@dataclass(frozen=True)
class BnActParams:
    """Inference-mode per-channel affine normalization plus activation.

    ``y = gamma * (x - mean) / sqrt(var + eps) + beta`` followed by the
    activation; ``slope`` is the per-channel PReLU slope and is required
    exactly when ``activation == "prelu"``.
    """

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5
    activation: str = "none"
    slope: np.ndarray | None = None

    def __post_init__(self):
        for name in ("gamma", "beta", "mean", "var"):
            v = np.ascontiguousarray(getattr(self, name), dtype=DTYPE)
            if v.ndim != 1:
                raise ShapeError(f"BnActParams.{name} must be 1-D")
            object.__setattr__(self, name, freeze(v))
        c = self.gamma.shape[0]
        for name in ("beta", "mean", "var"):
            if getattr(self, name).shape[0] != c:
                raise ShapeError(f"BnActParams.{name} length {getattr(self, name).shape[0]} != {c}")
        if np.any(self.var < 0):
            raise ValueError("BnActParams.var must be non-negative")
        if self.eps <= 0:
            raise ValueError("BnActParams.eps must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "prelu":
            if self.slope is None:
                raise ValueError("prelu activation requires a slope vector")
            s = np.ascontiguousarray(self.slope, dtype=DTYPE)
            if s.shape != (c,):
                raise ShapeError(f"prelu slope length {s.shape} != channel count {c}")
            object.__setattr__(self, "slope", freeze(s))

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, channels: int, activation: str = "none", slope: float = 0.25,
                 eps: float = 1e-5) -> "BnActParams":
        """Parameters whose normalization step is exactly the identity."""
        c = channels
        s = np.full(c, slope, dtype=DTYPE) if activation == "prelu" else None
        return cls(
            gamma=np.ones(c, dtype=DTYPE),
            beta=np.zeros(c, dtype=DTYPE),
            mean=np.zeros(c, dtype=DTYPE),
            var=np.full(c, np.float32(1.0) - np.float32(eps), dtype=DTYPE),
            eps=eps,
            activation=activation,
            slope=s,
        )


def _pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d(x: np.ndarray, w: ConvWeights, spec: ConvSpec) -> np.ndarray:
    """2-D convolution; covers grouped/depthwise/dilated/strided cases."""
    check_nchw(x)
    co, cig, kh, kw = w.weights.shape
    if (kh, kw) != spec.kernel:
        raise ShapeError(f"weight kernel {(kh, kw)} != spec kernel {spec.kernel}")
    g = spec.groups
    n, ci, h, wi = x.shape
    if ci != cig * g:
        raise ShapeError(f"input channels {ci} != weights in/group {cig} * groups {g}")
    if co % g != 0:
        raise ShapeError(f"out channels {co} not divisible by groups {g}")
    if (w.bias is not None) != spec.has_bias:
        raise ShapeError("bias presence does not match spec.has_bias")
    if w.bias is not None and w.bias.shape[0] != co:
        raise ShapeError(f"bias length {w.bias.shape[0]} != out channels {co}")

    (sh, sw), (dh, dw), (ph, pw) = spec.stride, spec.dilation, spec.padding
    ho, wo = spec.out_hw(h, wi)
    xp = _pad(x, ph, pw)

    if cig == 1 and co == ci:
        # depthwise fast path: per-channel scalar taps, no matmul machinery
        out = np.zeros((n, co, ho, wo), dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                xs = xp[:, :, i * dh: i * dh + sh * (ho - 1) + 1: sh,
                        j * dw: j * dw + sw * (wo - 1) + 1: sw]
                out += w.weights[None, :, 0, i, j, None, None] * xs
    else:
        cog = co // g
        wg = w.weights.reshape(g, cog, cig, kh, kw)
        xg = xp.reshape(n, g, cig, xp.shape[2], xp.shape[3])
        acc = np.zeros((n, g, cog, ho * wo), dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                xs = xg[:, :, :, i * dh: i * dh + sh * (ho - 1) + 1: sh,
                        j * dw: j * dw + sw * (wo - 1) + 1: sw]
                acc += np.matmul(wg[None, :, :, :, i, j], xs.reshape(n, g, cig, ho * wo))
        out = acc.reshape(n, co, ho, wo)

    if w.bias is not None:
        out += w.bias[None, :, None, None]
    return freeze(out)


def transposed_conv2d(x: np.ndarray, w: ConvWeights, spec: ConvSpec) -> np.ndarray:
    """Transposed convolution: the adjoint of ``conv2d`` for the same spec.

    Supports groups == 1 and dilation == (1, 1) only, which is all the
    decoders need.
    """
    check_nchw(x)
    if spec.groups != 1 or spec.dilation != (1, 1):
        raise ShapeError("transposed_conv2d supports groups=1, dilation=(1,1) only")
    ci, co, kh, kw = w.weights.shape
    if (kh, kw) != spec.kernel:
        raise ShapeError(f"weight kernel {(kh, kw)} != spec kernel {spec.kernel}")
    n, cx, h, wi = x.shape
    if cx != ci:
        raise ShapeError(f"input channels {cx} != weights in channels {ci}")
    if (w.bias is not None) != spec.has_bias:
        raise ShapeError("bias presence does not match spec.has_bias")

    (sh, sw), (ph, pw) = spec.stride, spec.padding
    ho, wo = spec.transposed_out_hw(h, wi)
    hf, wf = (h - 1) * sh + kh, (wi - 1) * sw + kw
    full = np.zeros((n, co, hf, wf), dtype=DTYPE)
    xr = x.reshape(n, ci, h * wi)
    for i in range(kh):
        for j in range(kw):
            stamp = np.matmul(w.weights[:, :, i, j].T, xr).reshape(n, co, h, wi)
            full[:, :, i: i + sh * (h - 1) + 1: sh, j: j + sw * (wi - 1) + 1: sw] += stamp
    out = np.ascontiguousarray(full[:, :, ph: ph + ho, pw: pw + wo])
    if w.bias is not None:
        out += w.bias[None, :, None, None]
    return freeze(out)


def bilinear_upsample_x2(x: np.ndarray) -> np.ndarray:
    """Parameter-free 2x upsampling with half-pixel centers and edge clamp."""
    check_nchw(x)
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError("bilinear_upsample_x2 requires non-empty spatial dims")

    def axis_coords(size: int):
        s = (np.arange(2 * size, dtype=np.float64) + 0.5) / 2.0 - 0.5
        s = np.clip(s, 0.0, size - 1)
        lo = np.floor(s).astype(np.intp)
        hi = np.minimum(lo + 1, size - 1)
        return lo, hi, s - lo

    i0, i1, fi = axis_coords(h)
    j0, j1, fj = axis_coords(w)
    # interpolate in float64 so convex combinations never leave [min, max]
    x64 = x.astype(np.float64)
    top = x64[:, :, i0, :]
    bot = x64[:, :, i1, :]
    rows = top + fi[None, None, :, None] * (bot - top)
    left = rows[:, :, :, j0]
    right = rows[:, :, :, j1]
    out = left + fj[None, None, None, :] * (right - left)
    return freeze(out.astype(DTYPE))


def avg_pool(x: np.ndarray, kernel: tuple[int, int] = (3, 3),
             stride: tuple[int, int] = (2, 2), padding: tuple[int, int] = (1, 1)) -> np.ndarray:
    """Average pooling; the divisor counts padded cells (count_include_pad)."""
    check_nchw(x)
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    n, c, h, w = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {kernel} larger than padded input {h}x{w}")
    xp = _pad(x, ph, pw)
    acc = np.zeros((n, c, ho, wo), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            acc += xp[:, :, i: i + sh * (ho - 1) + 1: sh, j: j + sw * (wo - 1) + 1: sw]
    acc /= np.float32(kh * kw)
    return freeze(acc)


def channel_shuffle(x: np.ndarray, groups: int) -> np.ndarray:
    """Transpose the (groups, c/groups) channel matrix; data untouched."""
    check_nchw(x)
    n, c, h, w = x.shape
    if groups < 1 or c % groups != 0:
        raise ShapeError(f"channel count {c} not divisible by groups {groups}")
    if groups == 1:
        return x
    k = c // groups
    out = x.reshape(n, groups, k, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)
    return freeze(np.ascontiguousarray(out))


def bn_act(x: np.ndarray, p: BnActParams) -> np.ndarray:
    """Per-channel affine normalization followed by the configured activation."""
    check_nchw(x)
    if x.shape[1] != p.channels:
        raise ShapeError(f"input channels {x.shape[1]} != parameter length {p.channels}")
    scale = p.gamma / np.sqrt(p.var + np.float32(p.eps))
    shift = p.beta - p.mean * scale
    y = x * scale[None, :, None, None] + shift[None, :, None, None]
    if p.activation == "relu":
        y = np.maximum(y, np.float32(0.0))
    elif p.activation == "prelu":
        y = np.where(y > 0, y, p.slope[None, :, None, None] * y)
    return freeze(y)
