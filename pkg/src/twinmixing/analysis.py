"""Static complexity accounting and segmentation metrics.

FLOPs convention: one multiply-accumulate counts as 2 operations
(multiplication plus addition), so a convolution costs
``2 * kh * kw * (Cin/groups) * Cout * Hout * Wout`` per batch element
and a transposed convolution ``2 * kh * kw * Cin * Cout * Hin * Win``.
Element-wise additions cost one operation per element, bilinear 2x
upsampling a declared 11 operations per output element, average pooling
``kh * kw`` per output element.  Channel shuffles, concatenations and
slicing are free.  Normalization and activation are excluded by default
because the reference budgets are convolution-dominated; pass
``include_bn_flops=True`` to count them (2 + 1 ops per element), which
bounds the ambiguity at a few percent.

Parameter convention: the ``params`` column counts learnable tensors
(conv weights and biases, normalization gamma/beta, PReLU slopes); the
running mean/variance buffers are reported separately, so a plain
normalization layer stores 4C values of which 2C are learnable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ShapeError
from .model import BnNode, ConvNode, DbuPlan, ModelConfig, ModulePlan, UnitPlan, build_model

BILINEAR_FLOPS_PER_ELEMENT = 11
SOFTMAX_FLOPS_PER_ELEMENT = 4
BN_FLOPS_PER_ELEMENT = 2
ACT_FLOPS_PER_ELEMENT = 1


# ---------------------------------------------------------------------------
# Closed-form single-layer counts


def conv_param_count(c_in: int, c_out: int, kernel: tuple[int, int],
                     groups: int = 1, bias: bool = False) -> int:
    kh, kw = kernel
    return kh * kw * (c_in // groups) * c_out + (c_out if bias else 0)


def conv_flop_count(c_in: int, c_out: int, kernel: tuple[int, int],
                    out_hw: tuple[int, int], groups: int = 1, batch: int = 1) -> int:
    kh, kw = kernel
    ho, wo = out_hw
    return 2 * kh * kw * (c_in // groups) * c_out * ho * wo * batch


def transposed_conv_flop_count(c_in: int, c_out: int, kernel: tuple[int, int],
                               in_hw: tuple[int, int], batch: int = 1) -> int:
    kh, kw = kernel
    h, w = in_hw
    return 2 * kh * kw * c_in * c_out * h * w * batch


def bn_param_count(channels: int, prelu: bool = False) -> tuple[int, int]:
    """(learnable, buffers): gamma/beta plus optional slope; mean/var buffers."""
    return 2 * channels + (channels if prelu else 0), 2 * channels


def avg_pool_flop_count(channels: int, kernel: tuple[int, int],
                        out_hw: tuple[int, int], batch: int = 1) -> int:
    return kernel[0] * kernel[1] * channels * out_hw[0] * out_hw[1] * batch


def bilinear_flop_count(channels: int, out_hw: tuple[int, int], batch: int = 1) -> int:
    return BILINEAR_FLOPS_PER_ELEMENT * channels * out_hw[0] * out_hw[1] * batch


def elementwise_flop_count(shape) -> int:
    return int(prod(shape))


# ---------------------------------------------------------------------------
# Whole-model report


@dataclass(frozen=True)
class CostRow:
    layer: str
    kind: str                     # conv | bn | op
    params: int
    buffers: int
    flops: int
    out_shape: tuple[int, ...]
    groups: int = 1

    @property
    def stored(self) -> int:
        return self.params + self.buffers


@dataclass(frozen=True)
class ComplexityReport:
    rows: tuple[CostRow, ...]
    input_shape: tuple[int, int, int, int]
    include_bn_flops: bool

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_buffers(self) -> int:
        return sum(r.buffers for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    def row(self, layer: str) -> CostRow:
        for r in self.rows:
            if r.layer == layer:
                return r
        raise KeyError(layer)

    def predicted_shapes(self) -> dict[str, tuple[int, ...]]:
        return {r.layer: r.out_shape for r in self.rows}

    def to_csv(self, include_total: bool = True) -> str:
        lines = ["layer,params,flops"]
        lines += [f"{r.layer},{r.params},{r.flops}" for r in self.rows]
        if include_total:
            lines.append(f"total,{self.total_params},{self.total_flops}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "include_bn_flops": self.include_bn_flops,
            "totals": {
                "params": self.total_params,
                "buffers": self.total_buffers,
                "stored": self.total_params + self.total_buffers,
                "flops": self.total_flops,
            },
            "rows": [
                {
                    "layer": r.layer,
                    "kind": r.kind,
                    "params": r.params,
                    "buffers": r.buffers,
                    "flops": r.flops,
                    "out_shape": list(r.out_shape),
                    "groups": r.groups,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


class _Walker:
    """Emits one CostRow per weighted layer and per parameter-free op,
    in exactly the order (and with exactly the names) a traced forward
    pass reports them."""

    def __init__(self, batch: int, include_bn: bool):
        self.n = batch
        self.include_bn = include_bn
        self.rows: list[CostRow] = []

    def conv(self, node: ConvNode, in_hw) -> tuple[int, int]:
        spec = node.spec
        if node.transposed:
            out_hw = spec.transposed_out_hw(*in_hw)
            flops = transposed_conv_flop_count(node.in_channels, node.out_channels,
                                               spec.kernel, in_hw, self.n)
        else:
            out_hw = spec.out_hw(*in_hw)
            flops = conv_flop_count(node.in_channels, node.out_channels, spec.kernel,
                                    out_hw, spec.groups, self.n)
        params = conv_param_count(node.in_channels, node.out_channels, spec.kernel,
                                  spec.groups, spec.has_bias)
        self.rows.append(CostRow(node.path, "conv", params, 0, flops,
                                 (self.n, node.out_channels, *out_hw), spec.groups))
        return out_hw

    def bn(self, node: BnNode, hw) -> None:
        learn, buf = bn_param_count(node.channels, node.activation == "prelu")
        flops = 0
        if self.include_bn:
            per = BN_FLOPS_PER_ELEMENT
            if node.activation != "none":
                per += ACT_FLOPS_PER_ELEMENT
            flops = per * node.channels * hw[0] * hw[1] * self.n
        self.rows.append(CostRow(node.path, "bn", learn, buf, flops,
                                 (self.n, node.channels, *hw)))

    def op(self, path: str, flops: int, shape) -> None:
        self.rows.append(CostRow(path, "op", 0, 0, int(flops), tuple(shape)))

    # -- block walks, mirroring blocks.py step order ------------------------

    def unit(self, plan: UnitPlan, in_hw) -> tuple[tuple[int, int], int]:
        s, p = plan.spec, plan.path
        nodes = {n.path: n for n in plan.nodes()}
        self.conv(nodes[f"{p}.pw1"], in_hw)
        self.bn(nodes[f"{p}.pw1_bn"], in_hw)
        self.op(f"{p}.shuffle", 0, (self.n, s.out_channels, *in_hw))
        out_hw = self.conv(nodes[f"{p}.dw"], in_hw)
        self.bn(nodes[f"{p}.dw_bn"], out_hw)
        self.conv(nodes[f"{p}.pw2"], out_hw)
        self.bn(nodes[f"{p}.pw2_bn"], out_hw)
        if s.stride == 2:
            self.op(f"{p}.pool",
                    avg_pool_flop_count(s.in_channels, (3, 3), out_hw, self.n),
                    (self.n, s.in_channels, *out_hw))
            self.op(f"{p}.concat", 0, (self.n, s.total_out_channels, *out_hw))
        elif s.residual:
            self.op(f"{p}.residual",
                    elementwise_flop_count((self.n, s.out_channels, *out_hw)),
                    (self.n, s.out_channels, *out_hw))
        return out_hw, s.total_out_channels

    def module(self, plan: ModulePlan, in_hw) -> tuple[int, int]:
        s, p = plan.spec, plan.path
        out_hw, _ = self.unit(plan.reduce, in_hw)
        for b in plan.branches:
            self.unit(b, out_hw)
        merged = (self.n, s.out_channels, *out_hw)
        self.op(f"{p}.merge",
                (s.branch_count - 1) * s.branch_width * out_hw[0] * out_hw[1] * self.n,
                merged)
        if s.residual:
            self.op(f"{p}.residual", elementwise_flop_count(merged), merged)
        return out_hw

    def attn(self, plan, in_hw) -> None:
        s, p = plan.spec, plan.path
        nodes = {n.path: n for n in plan.nodes()}
        self.conv(nodes[f"{p}.score"], in_hw)
        hw = in_hw[0] * in_hw[1]
        self.op(f"{p}.softmax", SOFTMAX_FLOPS_PER_ELEMENT * s.maps * hw * self.n,
                (self.n, s.maps, *in_hw))
        # channel centers + recomposition: two MAC passes over (maps x C x HW)
        self.op(f"{p}.attend", 4 * s.maps * s.channels * hw * self.n,
                (self.n, s.channels, *in_hw))
        self.conv(nodes[f"{p}.project"], in_hw)
        self.op(f"{p}.residual", elementwise_flop_count((self.n, s.channels, *in_hw)),
                (self.n, s.channels, *in_hw))

    def dbu(self, plan: DbuPlan, in_hw) -> tuple[int, int]:
        s, p = plan.spec, plan.path
        nodes = {n.path: n for n in plan.nodes()}
        out_hw = self.conv(nodes[f"{p}.tconv"], in_hw)
        self.bn(nodes[f"{p}.tconv_bn"], out_hw)
        if s.has_skip:
            self.op(f"{p}.concat", 0,
                    (self.n, s.out_channels + s.skip_channels, *out_hw))
            self.conv(nodes[f"{p}.refine"], out_hw)
            self.bn(nodes[f"{p}.refine_bn"], out_hw)
        self.conv(nodes[f"{p}.coarse"], in_hw)
        self.bn(nodes[f"{p}.coarse_bn"], in_hw)
        self.op(f"{p}.upsample", bilinear_flop_count(s.out_channels, out_hw, self.n),
                (self.n, s.out_channels, *out_hw))
        self.op(f"{p}.sum", elementwise_flop_count((self.n, s.out_channels, *out_hw)),
                (self.n, s.out_channels, *out_hw))
        return out_hw


def complexity_report(config: ModelConfig,
                      input_shape: tuple[int, int, int, int] = (1, 3, 384, 640),
                      include_bn_flops: bool = False) -> ComplexityReport:
    n, c, h, w = input_shape
    if c != 3:
        raise ShapeError(f"expected 3 input channels, got {c}")
    if h % 8 or w % 8:
        raise ShapeError(f"input spatial dims must be divisible by 8, got {h}x{w}")
    graph = build_model(config)
    wk = _Walker(n, include_bn_flops)

    stem_nodes = {nd.path: nd for nd in graph.stem.nodes()}
    hw = wk.conv(stem_nodes["stem.conv"], (h, w))
    wk.bn(stem_nodes["stem.bn"], hw)

    for m in graph.encoder_modules():
        hw = wk.module(m, hw)
    wk.attn(graph.attn, hw)

    for dec in graph.decoders:
        dhw = hw
        for up in dec.ups:
            dhw = wk.dbu(up, dhw)
        head = {nd.path: nd for nd in dec.head.nodes()}
        wk.conv(head[f"{dec.name}.head"], dhw)

    return ComplexityReport(tuple(wk.rows), tuple(input_shape), include_bn_flops)


def count_params(config: ModelConfig) -> ComplexityReport:
    return complexity_report(config)


def count_flops(config: ModelConfig,
                input_shape: tuple[int, int, int, int] = (1, 3, 384, 640),
                include_bn_flops: bool = False) -> ComplexityReport:
    return complexity_report(config, input_shape, include_bn_flops)


# ---------------------------------------------------------------------------
# Segmentation metrics


@dataclass(frozen=True)
class MetricReport:
    per_class_iou: tuple[float, ...]
    miou: float
    pixel_accuracy: float
    balanced_accuracy: float
    confusion: tuple[dict, ...]       # per class: tp/fp/fn/tn
    metadata: dict

    def to_json_dict(self) -> dict:
        return {
            "per_class_iou": list(self.per_class_iou),
            "miou": self.miou,
            "pixel_accuracy": self.pixel_accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "confusion": list(self.confusion),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> np.ndarray:
    """(num_classes, num_classes) counts, rows = ground truth, cols = prediction.
    Counts are additive across shards/images."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    p = pred.reshape(-1).astype(np.int64)
    g = gt.reshape(-1).astype(np.int64)
    for name, arr in (("prediction", p), ("ground truth", g)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels outside [0, {num_classes})")
    cm = np.bincount(g * num_classes + p, minlength=num_classes * num_classes)
    return cm.reshape(num_classes, num_classes)


def metrics_from_confusion(cm: np.ndarray) -> MetricReport:
    """Derive the metric report from accumulated confusion counts.

    A class absent from both prediction and ground truth (0/0) scores
    IoU and recall 1.0 and is included in the means; the convention is
    flagged in the metadata.
    """
    cm = np.asarray(cm, dtype=np.int64)
    nc = cm.shape[0]
    total = int(cm.sum())
    ious, recalls, confusion = [], [], []
    for c in range(nc):
        tp = int(cm[c, c])
        fn = int(cm[c].sum()) - tp
        fp = int(cm[:, c].sum()) - tp
        tn = total - tp - fn - fp
        union = tp + fp + fn
        ious.append(tp / union if union else 1.0)
        recalls.append(tp / (tp + fn) if tp + fn else 1.0)
        confusion.append({"class": c, "tp": tp, "fp": fp, "fn": fn, "tn": tn})
    correct = int(np.trace(cm))
    return MetricReport(
        per_class_iou=tuple(ious),
        miou=float(np.mean(ious)),
        pixel_accuracy=correct / total if total else 1.0,
        balanced_accuracy=float(np.mean(recalls)),
        confusion=tuple(confusion),
        metadata={"absent_class_score": 1.0, "num_classes": nc, "pixels": total},
    )


def seg_metrics(pred_mask: np.ndarray, gt_mask: np.ndarray, num_classes: int) -> MetricReport:
    """Pixel-wise confusion counts and the derived IoU/accuracy metrics."""
    return metrics_from_confusion(confusion_matrix(pred_mask, gt_mask, num_classes))
