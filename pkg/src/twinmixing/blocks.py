"""Network building blocks: EPM Units, EPM modules, DBU and attention.

An EPM Unit is the core transform: grouped 1x1 projection, channel
shuffle, depthwise dilated 3x3 (spatial), grouped 1x1 restore.  At
stride 1 with matching channel counts a residual shortcut is added; at
stride 2 the shortcut branch is a 3x3/s2 average pool concatenated to
the pipeline output, growing the channel count by ``in_channels``.

An EPM module applies the reduce-split-transform-merge pattern: a 1x1
EPM Unit reduces width, parallel EPM Units with distinct dilation rates
transform, and hierarchical feature fusion (prefix sums, then concat)
merges the branches, which suppresses gridding artifacts from the
dilated taps.

All block functions are pure.  The optional ``on_step(path, out)``
callback observes every intermediate result; the complexity analyzer
predicts the same step names, which is how shape agreement between the
static walk and a real forward pass is tested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError
from .kernels import (
    BnActParams,
    ConvSpec,
    ConvWeights,
    avg_pool,
    bilinear_upsample_x2,
    bn_act,
    channel_shuffle,
    conv2d,
    same_padding,
    transposed_conv2d,
)
from .tensor import DTYPE, concat_channels, elementwise_combine, freeze

StepHook = Callable[[str, np.ndarray], None] | None

DEFAULT_GROUP_CAP = 8


def group_count(c_in: int, c_out: int, cap: int = DEFAULT_GROUP_CAP) -> int:
    """Groups for a grouped 1x1 conv: largest power of two dividing both
    channel counts, capped (default cap 8, overridable per config)."""
    common = min(c_in & -c_in, c_out & -c_out)
    return max(1, min(cap, common))


# ---------------------------------------------------------------------------
# EPM Unit


@dataclass(frozen=True)
class EpmUnitSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3           # spatial (depthwise) kernel; 1 for reduce units
    dilation: int = 1
    stride: int = 1
    g1: int = 1
    g2: int = 1

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ShapeError(f"EPM unit stride must be 1 or 2, got {self.stride}")
        if self.kernel not in (1, 3):
            raise ShapeError(f"EPM unit kernel must be 1 or 3, got {self.kernel}")
        for g, c_in, c_out in ((self.g1, self.in_channels, self.out_channels),
                               (self.g2, self.out_channels, self.out_channels)):
            if c_in % g or c_out % g:
                raise ShapeError(
                    f"groups {g} do not divide channels {c_in}->{c_out} in EPM unit")

    @property
    def residual(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    @property
    def total_out_channels(self) -> int:
        """Unit output width; stride 2 concatenates the pooled shortcut."""
        if self.stride == 2:
            return self.out_channels + self.in_channels
        return self.out_channels

    def pw1_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1), groups=self.g1)

    def dw_spec(self) -> ConvSpec:
        k = (self.kernel, self.kernel)
        d = (self.dilation, self.dilation)
        return ConvSpec(kernel=k, stride=(self.stride, self.stride), dilation=d,
                        groups=self.out_channels, padding=same_padding(k, d))

    def pw2_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1), groups=self.g2)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.dw_spec().out_hw(h, w)


def make_epm_unit_spec(in_channels: int, out_channels: int, *, kernel: int = 3,
                       dilation: int = 1, stride: int = 1,
                       group_cap: int = DEFAULT_GROUP_CAP) -> EpmUnitSpec:
    return EpmUnitSpec(
        in_channels=in_channels,
        out_channels=out_channels,
        kernel=kernel,
        dilation=dilation,
        stride=stride,
        g1=group_count(in_channels, out_channels, group_cap),
        g2=group_count(out_channels, out_channels, group_cap),
    )


@dataclass(frozen=True)
class EpmUnitWeights:
    pw1: ConvWeights
    pw1_bn: BnActParams
    dw: ConvWeights
    dw_bn: BnActParams
    pw2: ConvWeights
    pw2_bn: BnActParams


def epm_unit(x: np.ndarray, spec: EpmUnitSpec, weights: EpmUnitWeights,
             on_step: StepHook = None, path: str = "") -> np.ndarray:
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"EPM unit expects {spec.in_channels} channels, got {x.shape[1]}")

    def step(name, out):
        if on_step is not None:
            on_step(f"{path}.{name}" if path else name, out)
        return out

    y = step("pw1", conv2d(x, weights.pw1, spec.pw1_spec()))
    y = step("pw1_bn", bn_act(y, weights.pw1_bn))
    y = step("shuffle", channel_shuffle(y, spec.g1))
    y = step("dw", conv2d(y, weights.dw, spec.dw_spec()))
    y = step("dw_bn", bn_act(y, weights.dw_bn))
    y = step("pw2", conv2d(y, weights.pw2, spec.pw2_spec()))
    y = step("pw2_bn", bn_act(y, weights.pw2_bn))

    if spec.stride == 2:
        shortcut = step("pool", avg_pool(x, (3, 3), (2, 2), (1, 1)))
        return step("concat", concat_channels([y, shortcut]))
    if spec.residual:
        return step("residual", elementwise_combine(y, x, "add"))
    return y


# ---------------------------------------------------------------------------
# EPM module (reduce - split - transform - merge)


@dataclass(frozen=True)
class EpmModuleSpec:
    in_channels: int
    out_channels: int
    branch_count: int
    dilations: tuple[int, ...]
    stride: int
    reduce: EpmUnitSpec
    branches: tuple[EpmUnitSpec, ...]

    def __post_init__(self):
        if self.out_channels % self.branch_count:
            raise ShapeError(
                f"EPM module out_channels {self.out_channels} not divisible by "
                f"branch count {self.branch_count}")
        if len(self.dilations) != self.branch_count:
            raise ShapeError(
                f"EPM module needs {self.branch_count} dilation rates, got {self.dilations}")

    @property
    def branch_width(self) -> int:
        return self.out_channels // self.branch_count

    @property
    def residual(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.reduce.out_hw(h, w)


def make_epm_module_spec(in_channels: int, out_channels: int, *, branch_count: int,
                         dilations, stride: int = 1,
                         group_cap: int = DEFAULT_GROUP_CAP) -> EpmModuleSpec:
    """Plan an EPM module.

    The reduce step is a 1x1-kernel EPM Unit at the module's stride; its
    pipeline emits ``out_channels / branch_count`` channels (at stride 2
    the unit's concat shortcut widens that by ``in_channels``, and the
    branches consume the widened feature).
    """
    dilations = tuple(int(d) for d in dilations)
    width = out_channels // branch_count
    reduce = make_epm_unit_spec(in_channels, width, kernel=1, dilation=1,
                                stride=stride, group_cap=group_cap)
    branches = tuple(
        make_epm_unit_spec(reduce.total_out_channels, width, kernel=3, dilation=d,
                           stride=1, group_cap=group_cap)
        for d in dilations
    )
    return EpmModuleSpec(
        in_channels=in_channels,
        out_channels=out_channels,
        branch_count=branch_count,
        dilations=dilations,
        stride=stride,
        reduce=reduce,
        branches=branches,
    )


@dataclass(frozen=True)
class EpmModuleWeights:
    reduce: EpmUnitWeights
    branches: tuple[EpmUnitWeights, ...]


def hff_merge(branches: list[np.ndarray]) -> np.ndarray:
    """Hierarchical feature fusion: concat of left-to-right prefix sums."""
    if not branches:
        raise ShapeError("hff_merge requires at least one branch")
    fused = [branches[0]]
    for b in branches[1:]:
        fused.append(elementwise_combine(fused[-1], b, "add"))
    return concat_channels(fused)


def epm_module(x: np.ndarray, spec: EpmModuleSpec, weights: EpmModuleWeights,
               on_step: StepHook = None, path: str = "") -> np.ndarray:
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"EPM module expects {spec.in_channels} channels, got {x.shape[1]}")
    if len(weights.branches) != spec.branch_count:
        raise ShapeError(
            f"EPM module has {spec.branch_count} branches, got {len(weights.branches)} bundles")

    def sub(name):
        return f"{path}.{name}" if path else name

    r = epm_unit(x, spec.reduce, weights.reduce, on_step, sub("reduce"))
    outs = [
        epm_unit(r, bspec, bw, on_step, sub(f"b{i}"))
        for i, (bspec, bw) in enumerate(zip(spec.branches, weights.branches))
    ]
    merged = hff_merge(outs)
    if on_step is not None:
        on_step(sub("merge"), merged)
    if spec.residual:
        merged = elementwise_combine(merged, x, "add")
        if on_step is not None:
            on_step(sub("residual"), merged)
    return merged


# ---------------------------------------------------------------------------
# Dual Branch Upsampling


@dataclass(frozen=True)
class DbuSpec:
    in_channels: int
    skip_channels: int      # 0 == no skip connection
    out_channels: int

    @property
    def has_skip(self) -> bool:
        return self.skip_channels > 0

    def tconv_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(2, 2), stride=(2, 2))

    def refine_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(3, 3), padding=(1, 1))

    def coarse_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1))


@dataclass(frozen=True)
class DbuWeights:
    tconv: ConvWeights
    tconv_bn: BnActParams
    refine: ConvWeights | None
    refine_bn: BnActParams | None
    coarse: ConvWeights
    coarse_bn: BnActParams


def dbu(x: np.ndarray, skip: np.ndarray | None, spec: DbuSpec, weights: DbuWeights,
        on_step: StepHook = None, path: str = "") -> np.ndarray:
    """2x decoder block: learnable fine branch + bilinear coarse branch.

    The fine branch upsamples with a 2x2/s2 transposed conv and, when a
    skip is wired in, refines the concat of upsample and skip with a 3x3
    conv.  The coarse branch adjusts channels with a 1x1 conv and
    upsamples bilinearly.  The two are fused by element-wise addition.
    """
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"DBU expects {spec.in_channels} channels, got {x.shape[1]}")
    if spec.has_skip != (skip is not None):
        raise ShapeError(
            "skip tensor required exactly when spec.skip_channels > 0 "
            f"(skip_channels={spec.skip_channels}, skip={'present' if skip is not None else 'absent'})")

    def step(name, out):
        if on_step is not None:
            on_step(f"{path}.{name}" if path else name, out)
        return out

    fine = step("tconv", transposed_conv2d(x, weights.tconv, spec.tconv_spec()))
    fine = step("tconv_bn", bn_act(fine, weights.tconv_bn))
    if spec.has_skip:
        if skip.shape[2:] != fine.shape[2:]:
            raise ShapeError(
                f"skip spatial size {skip.shape[2:]} != upsampled size {fine.shape[2:]}")
        if skip.shape[1] != spec.skip_channels:
            raise ShapeError(
                f"skip has {skip.shape[1]} channels, spec says {spec.skip_channels}")
        fine = step("concat", concat_channels([fine, skip]))
        fine = step("refine", conv2d(fine, weights.refine, spec.refine_spec()))
        fine = step("refine_bn", bn_act(fine, weights.refine_bn))

    coarse = step("coarse", conv2d(x, weights.coarse, spec.coarse_spec()))
    coarse = step("coarse_bn", bn_act(coarse, weights.coarse_bn))
    coarse = step("upsample", bilinear_upsample_x2(coarse))

    return step("sum", elementwise_combine(fine, coarse, "add"))


# ---------------------------------------------------------------------------
# Simplified class-activation attention


@dataclass(frozen=True)
class PcaaLiteSpec:
    channels: int
    maps: int = 2

    def __post_init__(self):
        if self.maps < 1:
            raise ShapeError("attention needs at least one class map")

    def score_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1))

    def project_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1))


@dataclass(frozen=True)
class PcaaLiteWeights:
    score: ConvWeights       # channels -> maps, 1x1, no bias (softmax is shift-invariant)
    project: ConvWeights     # channels -> channels, 1x1, no bias (keeps zero-collapse exact)


def spatial_softmax(a: np.ndarray) -> np.ndarray:
    """Softmax over the spatial positions of each (n, map) plane."""
    n, k, h, w = a.shape
    flat = a.reshape(n, k, h * w).astype(np.float64)
    flat = flat - flat.max(axis=2, keepdims=True)
    e = np.exp(flat)
    out = e / e.sum(axis=2, keepdims=True)
    return freeze(out.reshape(n, k, h, w).astype(DTYPE))


def pcaa_lite(x: np.ndarray, spec: PcaaLiteSpec, weights: PcaaLiteWeights,
              on_step: StepHook = None, path: str = "") -> np.ndarray:
    """Class-map attention: per-map spatial softmax pools channel centers,
    the centers are redistributed by the same maps, and the projected
    result is added back to the input."""
    if x.shape[1] != spec.channels:
        raise ShapeError(f"attention expects {spec.channels} channels, got {x.shape[1]}")

    def step(name, out):
        if on_step is not None:
            on_step(f"{path}.{name}" if path else name, out)
        return out

    n, c, h, w = x.shape
    scores = step("score", conv2d(x, weights.score, spec.score_spec()))
    attn = step("softmax", spatial_softmax(scores))

    a2 = attn.reshape(n, spec.maps, h * w)
    x2 = x.reshape(n, c, h * w)
    centers = np.einsum("nks,ncs->nkc", a2, x2)           # per-map channel centers
    recomposed = np.einsum("nks,nkc->ncs", a2, centers).reshape(n, c, h, w)
    recomposed = step("attend", freeze(recomposed.astype(DTYPE, copy=False)))

    proj = step("project", conv2d(recomposed, weights.project, spec.project_spec()))
    return step("residual", elementwise_combine(x, proj, "add"))
