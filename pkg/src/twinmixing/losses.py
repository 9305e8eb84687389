"""Hybrid Focal + Tversky objective with analytic gradients.

Both losses act on foreground probability maps (the post-softmax
probability of the positive class) against binary labels; the gradient
is reported with respect to those probabilities, so the logit chain
rule stays the caller's concern.  All arithmetic is float64: the hand
tolerances on the reference values are tighter than float32 resolution,
and central finite differences would otherwise drown in rounding noise.

The per-task total is the unit-weight sum of the focal and Tversky
terms, and the overall objective is the unit-weight sum over the two
tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError

FOCAL_PROB_CLIP = 1e-7


@dataclass(frozen=True)
class LossParams:
    tversky_alpha: float = 0.7
    tversky_beta: float = 0.3
    tversky_smooth: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.tversky_smooth <= 0:
            raise ValueError("tversky_smooth must be positive")
        if not 0.0 < self.focal_alpha < 1.0:
            raise ValueError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be non-negative")
        if min(self.tversky_alpha, self.tversky_beta) < 0:
            raise ValueError("tversky weights must be non-negative")


# False negatives are penalized harder than false positives for both
# tasks (recall over precision); lanes, being thin structures, get the
# strongest recall emphasis.
DRIVABLE_PRESET = LossParams(tversky_alpha=0.7, tversky_beta=0.3)
LANE_PRESET = LossParams(tversky_alpha=0.9, tversky_beta=0.1)


@dataclass(frozen=True)
class ProbMap:
    """Predicted foreground probabilities plus binary ground truth."""

    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        g = np.asarray(self.labels, dtype=np.float64)
        if p.shape != g.shape:
            raise ShapeError(f"probs shape {p.shape} != labels shape {g.shape}")
        if np.any(np.isnan(p)):
            raise ValueError("probability map contains NaN")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.all((g == 0.0) | (g == 1.0)):
            raise ValueError("labels must be binary")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", g)


def prob_map_from_logits(logits: np.ndarray, labels: np.ndarray) -> ProbMap:
    """Softmax over the two logit channels; channel 1 is foreground."""
    if logits.ndim != 4 or logits.shape[1] != 2:
        raise ShapeError(f"expected (n, 2, h, w) logits, got {logits.shape}")
    l0 = logits[:, 0].astype(np.float64)
    l1 = logits[:, 1].astype(np.float64)
    fg = 1.0 / (1.0 + np.exp(l0 - l1))
    return ProbMap(probs=fg, labels=np.asarray(labels, dtype=np.float64))


def focal_loss(pm: ProbMap, params: LossParams) -> tuple[float, np.ndarray]:
    """Mean of -alpha * (1 - p_t)^gamma * log(p_t); p_t is the probability
    assigned to the true class.  Returns (value, d value / d prob)."""
    a, g = params.focal_alpha, params.focal_gamma
    eps = FOCAL_PROB_CLIP
    p_raw = pm.probs
    p = np.clip(p_raw, eps, 1.0 - eps)
    fg = pm.labels == 1.0
    pt = np.where(fg, p, 1.0 - p)

    count = pt.size
    value = float(np.sum(-a * (1.0 - pt) ** g * np.log(pt)) / count)

    if g == 0.0:
        d_pt = -a / pt
    else:
        d_pt = a * g * (1.0 - pt) ** (g - 1.0) * np.log(pt) - a * (1.0 - pt) ** g / pt
    grad = d_pt * np.where(fg, 1.0, -1.0) / count
    # the clip is part of the op: outside it the composite is flat
    grad = grad * ((p_raw > eps) & (p_raw < 1.0 - eps))
    return value, grad


def tversky_loss(pm: ProbMap, params: LossParams) -> tuple[float, np.ndarray]:
    """1 - (TP + s) / (TP + alpha*FP + beta*FN + s) on soft counts.

    TP/FP/FN are summed over the whole map, so the gradient couples all
    pixels through the shared quotient.
    """
    a, b, s = params.tversky_alpha, params.tversky_beta, params.tversky_smooth
    p, g = pm.probs, pm.labels
    tp = float(np.sum(p * g))
    fp = float(np.sum(p * (1.0 - g)))
    fn = float(np.sum((1.0 - p) * g))

    num = tp + s
    den = tp + a * fp + b * fn + s
    value = 1.0 - num / den

    d_num = g
    d_den = g + a * (1.0 - g) - b * g
    grad = -(d_num * den - num * d_den) / (den * den)
    return value, grad


def task_loss(pm: ProbMap, params: LossParams) -> float:
    return focal_loss(pm, params)[0] + tversky_loss(pm, params)[0]


def total_loss(drivable_pm: ProbMap, lane_pm: ProbMap,
               drivable_params: LossParams = DRIVABLE_PRESET,
               lane_params: LossParams = LANE_PRESET) -> float:
    """Unit-weight sum of the two per-task (focal + Tversky) losses."""
    return task_loss(drivable_pm, drivable_params) + task_loss(lane_pm, lane_params)


def grad_check(loss_fn, pm: ProbMap, params: LossParams, h: float = 1e-4) -> float:
    """Max relative error between the analytic gradient and central finite
    differences, over coordinates whose analytic gradient exceeds 1e-8."""
    _, grad = loss_fn(pm, params)
    base = pm.probs
    worst = 0.0
    flat_grad = grad.reshape(-1)
    for i in range(base.size):
        if abs(flat_grad[i]) <= 1e-8:
            continue
        plus = base.copy().reshape(-1)
        minus = plus.copy()
        plus[i] += h
        minus[i] -= h
        lp = loss_fn(replace(pm, probs=plus.reshape(base.shape)), params)[0]
        lm = loss_fn(replace(pm, probs=minus.reshape(base.shape)), params)[0]
        numeric = (lp - lm) / (2.0 * h)
        rel = abs(flat_grad[i] - numeric) / max(abs(flat_grad[i]), abs(numeric))
        worst = max(worst, rel)
    return worst
