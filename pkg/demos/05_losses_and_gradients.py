"""The hybrid Focal + Tversky objective and its analytic gradients.

Focal loss down-weights easy pixels by (1 - p_t)^gamma; Tversky loss
generalizes Dice with asymmetric false-positive/false-negative weights
(both tasks weight recall over precision, lanes most strongly).  The
analytic gradients are validated against central finite differences.
"""

import numpy as np

from twinmixing import (
    DRIVABLE_PRESET,
    LANE_PRESET,
    LossParams,
    ProbMap,
    focal_loss,
    grad_check,
    prob_map_from_logits,
    total_loss,
    tversky_loss,
)

print("== hand-checkable values ==")
pm = ProbMap(probs=np.array([1.0, 1.0, 0.0, 1.0]),
             labels=np.array([1.0, 1.0, 1.0, 0.0]))
value, _ = tversky_loss(pm, DRIVABLE_PRESET)
print(f"soft counts TP=2 FP=1 FN=1, alpha=0.7 beta=0.3 s=1 -> tversky {value}")

single = ProbMap(probs=np.array([[0.5]]), labels=np.array([[1.0]]))
value, _ = focal_loss(single, LossParams())
print(f"one pixel at p_t=0.5 (alpha_t=0.25, gamma=2) -> focal {value:.6f} "
      f"(= 0.25 * 0.25 * ln 2 = {0.25 * 0.25 * np.log(2):.6f})")

print("\n== presets ==")
print(f"drivable: alpha={DRIVABLE_PRESET.tversky_alpha}, beta={DRIVABLE_PRESET.tversky_beta}")
print(f"lane:     alpha={LANE_PRESET.tversky_alpha}, beta={LANE_PRESET.tversky_beta}")
print("(false negatives cost more than false positives; lanes most of all)")

print("\n== gradients vs central finite differences ==")
rng = np.random.default_rng(0)
pm = ProbMap(probs=rng.uniform(0.05, 0.95, size=(8, 8)),
             labels=(rng.uniform(size=(8, 8)) < 0.5).astype(np.float64))
print(f"focal   max relative error: {grad_check(focal_loss, pm, LossParams()):.2e}")
print(f"tversky max relative error: {grad_check(tversky_loss, pm, DRIVABLE_PRESET):.2e}")

print("\n== the combined objective ==")
logits = rng.normal(size=(1, 2, 8, 8)).astype(np.float32)
labels = (rng.uniform(size=(1, 8, 8)) < 0.3).astype(np.float64)
drv = prob_map_from_logits(logits, labels)
lane = prob_map_from_logits(rng.normal(size=(1, 2, 8, 8)).astype(np.float32), labels)
print(f"total = drivable task (focal+tversky) + lane task: {total_loss(drv, lane):.4f}")
perfect = ProbMap(probs=labels[0], labels=labels[0])
print(f"perfect predictions on both tasks -> {total_loss(perfect, perfect):.2e}")
