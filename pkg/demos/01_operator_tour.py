"""A tour of the primitive operators.

Every neural operator in the engine is a pure function over NCHW
float32 arrays.  This script walks the convolution variants, channel
shuffle, the two upsamplers and pooling on tiny inputs you can check by
eye.
"""

import numpy as np

from twinmixing import (
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

print("== 1x1 convolution mixes channels ==")
x = np.stack([np.full((2, 2), 3.0), np.full((2, 2), 5.0)])[None].astype(np.float32)
w = ConvWeights(weights=np.ones((1, 2, 1, 1), dtype=np.float32))
print("channels are constant 3 and 5; a 1x1 all-ones kernel sums them:")
print(conv2d(x, w, ConvSpec(kernel=(1, 1)))[0, 0])

print("\n== depthwise dilated convolution ==")
x = np.arange(36, dtype=np.float32).reshape(1, 1, 6, 6)
w = np.zeros((1, 1, 3, 3), dtype=np.float32)
w[0, 0, 1, 1] = 1.0   # identity tap
spec = ConvSpec(kernel=(3, 3), dilation=(2, 2), groups=1,
                padding=same_padding((3, 3), (2, 2)))
out = conv2d(x, ConvWeights(weights=w), spec)
print("an identity center tap returns the input even at dilation 2:",
      bool(np.array_equal(out, x)))

print("\n== grouped convolution + channel shuffle ==")
x = np.zeros((1, 4, 1, 1), dtype=np.float32)
x[0, :, 0, 0] = [1, 2, 3, 4]
print("channels before:", x[0, :, 0, 0])
print("after shuffle(groups=2):", channel_shuffle(x, 2)[0, :, 0, 0])
print("two stacked shuffles invert each other:",
      bool(np.array_equal(channel_shuffle(channel_shuffle(x, 2), 2), x)))

print("\n== transposed convolution scatters stamps ==")
x = np.full((1, 1, 2, 2), 1.0, dtype=np.float32)
w = ConvWeights(weights=np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2))
print(transposed_conv2d(x, w, ConvSpec(kernel=(2, 2), stride=(2, 2)))[0, 0])

print("\n== bilinear 2x upsampling (half-pixel centers) ==")
x = np.array([[0.0, 2.0]], dtype=np.float32).reshape(1, 1, 1, 2)
print("input row [0, 2] becomes", bilinear_upsample_x2(x)[0, 0, 0])

print("\n== average pooling counts padded cells ==")
x = np.ones((1, 1, 2, 2), dtype=np.float32)
print("all-ones 2x2, 3x3/s2/p1 pool ->", avg_pool(x)[0, 0, 0, 0], "(= 4/9)")

print("\n== normalization + activation ==")
x = np.array([-4.0, -1.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 3)
relu = bn_act(x, BnActParams.identity(1, activation="relu"))
prelu = bn_act(x, BnActParams.identity(1, activation="prelu", slope=0.25))
print("relu :", relu.reshape(-1))
print("prelu:", prelu.reshape(-1))
