"""The named building blocks, composed from the primitive operators.

Shows the EPM Unit pipeline (grouped 1x1 / shuffle / depthwise dilated /
grouped 1x1), the reduce-split-transform-merge EPM module with its
hierarchical feature fusion, the Dual Branch Upsampling block, and the
zero-weight collapse property that makes all of them easy to test.
"""

import numpy as np

from twinmixing import (
    BnActParams,
    ConvWeights,
    DbuSpec,
    DbuWeights,
    EpmModuleWeights,
    EpmUnitWeights,
    dbu,
    epm_module,
    epm_unit,
    hff_merge,
    make_epm_module_spec,
    make_epm_unit_spec,
)

rng = np.random.default_rng(0)


def zero_unit_weights(spec):
    z = lambda shape: ConvWeights(weights=np.zeros(shape, dtype=np.float32))
    zb = lambda: BnActParams(gamma=np.zeros(spec.out_channels, dtype=np.float32),
                             beta=np.zeros(spec.out_channels, dtype=np.float32),
                             mean=np.zeros(spec.out_channels, dtype=np.float32),
                             var=np.ones(spec.out_channels, dtype=np.float32))
    k = spec.kernel
    return EpmUnitWeights(
        pw1=z((spec.out_channels, spec.in_channels // spec.g1, 1, 1)), pw1_bn=zb(),
        dw=z((spec.out_channels, 1, k, k)), dw_bn=zb(),
        pw2=z((spec.out_channels, spec.out_channels // spec.g2, 1, 1)), pw2_bn=zb(),
    )


print("== EPM Unit ==")
spec = make_epm_unit_spec(16, 16, dilation=4)
print(f"16 -> 16 channels, dilation 4: groups g1={spec.g1}, g2={spec.g2}, "
      f"residual={spec.residual}")
x = rng.uniform(-1, 1, size=(1, 16, 8, 8)).astype(np.float32)
out = epm_unit(x, spec, zero_unit_weights(spec))
print("zero weights collapse to the shortcut: output == input ->",
      bool(np.array_equal(out, x)))

spec2 = make_epm_unit_spec(16, 16, stride=2)
out2 = epm_unit(x, spec2, zero_unit_weights(spec2))
print(f"stride-2 unit concatenates the pooled shortcut: {x.shape} -> {out2.shape}")

print("\n== EPM module: reduce - split - transform - merge ==")
mod = make_epm_module_spec(16, 16, branch_count=4, dilations=(1, 2, 4, 8))
print(f"branch width {mod.branch_width}, dilations {mod.dilations}")
w = EpmModuleWeights(reduce=zero_unit_weights(mod.reduce),
                     branches=tuple(zero_unit_weights(b) for b in mod.branches))
print("zero-weight module passes the residual through:",
      bool(np.array_equal(epm_module(x, mod, w), x)))

print("\nhierarchical feature fusion on injected branches:")
branches = [np.full((1, 1, 1, 2), float(v), dtype=np.float32) for v in (1, 10, 100)]
merged = hff_merge(branches)
print("branch values 1/10/100 -> channel groups", merged.reshape(3, 2)[:, 0],
      "(prefix sums suppress gridding artifacts)")

print("\n== Dual Branch Upsampling ==")
spec = DbuSpec(in_channels=8, skip_channels=4, out_channels=6)
weights = DbuWeights(
    tconv=ConvWeights(weights=rng.uniform(-0.3, 0.3, size=(8, 6, 2, 2)).astype(np.float32)),
    tconv_bn=BnActParams.identity(6, activation="relu"),
    refine=ConvWeights(weights=rng.uniform(-0.3, 0.3, size=(6, 10, 3, 3)).astype(np.float32)),
    refine_bn=BnActParams.identity(6, activation="relu"),
    coarse=ConvWeights(weights=rng.uniform(-0.3, 0.3, size=(6, 8, 1, 1)).astype(np.float32)),
    coarse_bn=BnActParams.identity(6, activation="relu"),
)
x = rng.uniform(-1, 1, size=(1, 8, 4, 4)).astype(np.float32)
skip = rng.uniform(-1, 1, size=(1, 4, 8, 8)).astype(np.float32)
out = dbu(x, skip, spec, weights)
print(f"fine (learnable transposed conv + skip refine) + coarse (1x1 + bilinear):")
print(f"  {x.shape} with skip {skip.shape} -> {out.shape}")
