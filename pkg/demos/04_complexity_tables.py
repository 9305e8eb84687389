"""Parameter and FLOP accounting across the model family.

Reproduces the complexity side of the reference tables: per-variant
totals at 640x384 (one multiply-accumulate = 2 FLOPs), the effect of the
grouped-convolution cap, and a per-section breakdown.
"""

from collections import defaultdict

from twinmixing import ModelConfig, complexity_report, load_config

REFERENCE = {"tiny": (0.10, 1.08), "base": (0.43, 3.95), "large": (1.50, 14.25)}

print(f"{'config':8s} {'params':>10s} {'FLOPs':>10s} {'ref params':>11s} {'ref FLOPs':>10s}")
for name, (ref_p, ref_f) in REFERENCE.items():
    rep = complexity_report(load_config(name), (1, 3, 384, 640))
    print(f"{name:8s} {rep.total_params / 1e6:9.3f}M {rep.total_flops / 1e9:9.3f}G "
          f"{ref_p:10.2f}M {ref_f:9.2f}G")

print("\nper-section breakdown (base):")
rep = complexity_report(load_config("base"))
agg = defaultdict(lambda: [0, 0])
for row in rep.rows:
    section = row.layer.split(".")[0]
    agg[section][0] += row.params
    agg[section][1] += row.flops
for section, (p, f) in agg.items():
    print(f"  {section:6s} {p / 1e3:8.1f}K params {f / 1e9:7.3f}G FLOPs")

print("\ngrouped-convolution cap sweep (tiny); larger caps cut the 1x1 cost:")
cfg = load_config("tiny")
print(f"{'cap':>4s} {'grouped-conv params':>20s} {'total params':>13s} {'total FLOPs':>12s}")
for cap in (1, 2, 4, 8, 16, 32):
    swept = ModelConfig.from_dict({**cfg.to_dict(), "group_cap": cap})
    rep = complexity_report(swept)
    grouped = sum(r.params for r in rep.rows
                  if r.kind == "conv" and (".pw1" in r.layer or ".pw2" in r.layer))
    print(f"{cap:4d} {grouped:20,d} {rep.total_params:13,d} {rep.total_flops:12,d}")

print("\nnormalization/activation FLOPs are excluded by default; the toggle")
print("bounds the convention ambiguity:")
base = complexity_report(cfg)
with_bn = complexity_report(cfg, include_bn_flops=True)
delta = with_bn.total_flops - base.total_flops
print(f"  tiny: +{delta / 1e6:.1f}M FLOPs (+{delta / base.total_flops:.1%}) when included")
