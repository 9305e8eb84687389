"""Kernel semantics against hand cases and naive-loop oracles."""

import numpy as np
import pytest

import oracles
import suites
from twinmixing import (
    BnActParams,
    ConvSpec,
    ConvWeights,
    ShapeError,
    avg_pool,
    bilinear_upsample_x2,
    bn_act,
    channel_shuffle,
    conv2d,
    same_padding,
    transposed_conv2d,
)


def f32(x):
    return np.asarray(x, dtype=np.float32)


class TestConv2d:
    def test_1x1_sums_channels(self):
        x = np.stack([np.full((4, 4), 3.0), np.full((4, 4), 5.0)])[None].astype(np.float32)
        w = ConvWeights(weights=f32([[[[1.0]], [[1.0]]]]))
        out = conv2d(x, w, ConvSpec(kernel=(1, 1)))
        assert out.shape == (1, 1, 4, 4)
        assert np.array_equal(out, np.full((1, 1, 4, 4), 8.0, dtype=np.float32))

    def test_depthwise_identity_kernel(self, rng):
        x = rng.uniform(-1, 1, size=(1, 3, 6, 6)).astype(np.float32)
        ident = np.zeros((3, 1, 3, 3), dtype=np.float32)
        ident[:, 0, 1, 1] = 1.0
        spec = ConvSpec(kernel=(3, 3), groups=3, padding=same_padding((3, 3)))
        out = conv2d(x, ConvWeights(weights=ident), spec)
        assert np.array_equal(out, x)

    def test_depthwise_dilated_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, size=(1, 4, 9, 9)).astype(np.float32)
        w = rng.uniform(-1, 1, size=(4, 1, 3, 3)).astype(np.float32)
        spec = ConvSpec(kernel=(3, 3), dilation=(4, 4), groups=4, padding=(4, 4))
        got = conv2d(x, ConvWeights(weights=w), spec)
        ref = oracles.conv2d_oracle(x, w, None, (1, 1), (4, 4), (4, 4), 4)
        assert np.max(np.abs(got - ref)) <= 1e-5

    def test_random_suite(self):
        assert suites.conv_suite(cases=30, seed=7) <= 1e-5

    def test_linearity(self, rng):
        x = rng.uniform(-1, 1, size=(1, 4, 5, 5)).astype(np.float32)
        z = rng.uniform(-1, 1, size=(1, 4, 5, 5)).astype(np.float32)
        w = ConvWeights(weights=rng.uniform(-1, 1, size=(6, 4, 3, 3)).astype(np.float32))
        spec = ConvSpec(kernel=(3, 3), padding=(1, 1))
        a, b = np.float32(0.37), np.float32(-1.21)
        lhs = conv2d((a * x + b * z).astype(np.float32), w, spec)
        rhs = a * conv2d(x, w, spec) + b * conv2d(z, w, spec)
        assert np.max(np.abs(lhs - rhs)) <= 1e-5

    def test_deterministic(self, rng):
        x = rng.uniform(-1, 1, size=(2, 4, 7, 7)).astype(np.float32)
        w = ConvWeights(weights=rng.uniform(-1, 1, size=(8, 2, 3, 3)).astype(np.float32))
        spec = ConvSpec(kernel=(3, 3), groups=2, padding=(1, 1))
        assert np.array_equal(conv2d(x, w, spec), conv2d(x, w, spec))

    def test_group_divisibility_error(self):
        x = np.zeros((1, 3, 4, 4), dtype=np.float32)
        w = ConvWeights(weights=np.zeros((4, 1, 1, 1), dtype=np.float32))
        with pytest.raises(ShapeError):
            conv2d(x, w, ConvSpec(kernel=(1, 1), groups=2))

    def test_kernel_larger_than_padded_input(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = ConvWeights(weights=np.zeros((1, 1, 3, 3), dtype=np.float32))
        with pytest.raises(ShapeError):
            conv2d(x, w, ConvSpec(kernel=(3, 3)))


class TestTransposedConv2d:
    def test_single_stamp(self):
        x = np.full((1, 1, 1, 1), 3.5, dtype=np.float32)
        w = ConvWeights(weights=np.ones((1, 1, 2, 2), dtype=np.float32))
        out = transposed_conv2d(x, w, ConvSpec(kernel=(2, 2), stride=(2, 2)))
        assert np.array_equal(out, np.full((1, 1, 2, 2), 3.5, dtype=np.float32))

    def test_2x2_scatter_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, size=(1, 1, 2, 2)).astype(np.float32)
        w = rng.uniform(-1, 1, size=(1, 1, 2, 2)).astype(np.float32)
        got = transposed_conv2d(x, ConvWeights(weights=w), ConvSpec(kernel=(2, 2), stride=(2, 2)))
        ref = oracles.transposed_conv2d_oracle(x, w, None, (2, 2), (0, 0))
        assert got.shape == (1, 1, 4, 4)
        assert np.max(np.abs(got - ref)) <= 1e-6

    def test_adjoint_of_conv(self, rng):
        # <conv(x), y> == <x, convT(y)> for matched specs; input sizes are
        # exact-fit so the round trip reproduces the original spatial dims
        done = 0
        while done < 20:
            kh = int(rng.integers(1, 4))
            sh = int(rng.integers(1, 3))
            ph = int(rng.integers(0, kh))
            ci, co = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            h = int(rng.integers(kh + 2, 10))
            spec = ConvSpec(kernel=(kh, kh), stride=(sh, sh), padding=(ph, ph))
            if h + 2 * ph - kh < 0 or (h + 2 * ph - kh) % sh != 0:
                continue
            done += 1
            w = ConvWeights(weights=rng.uniform(-1, 1, size=(co, ci, kh, kh)).astype(np.float32))
            x = rng.uniform(-1, 1, size=(1, ci, h, h)).astype(np.float32)
            cx = conv2d(x, w, spec)
            y = rng.uniform(-1, 1, size=cx.shape).astype(np.float32)
            lhs = float(np.sum(cx.astype(np.float64) * y))
            cty = transposed_conv2d(y, w, spec)
            rhs = float(np.sum(x.astype(np.float64) * cty))
            assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), abs(rhs), 1.0)

    def test_random_suite(self):
        assert suites.tconv_suite(cases=30, seed=8) <= 1e-5

    def test_rejects_dilation_and_groups(self):
        x = np.zeros((1, 2, 2, 2), dtype=np.float32)
        w = ConvWeights(weights=np.zeros((2, 2, 2, 2), dtype=np.float32))
        with pytest.raises(ShapeError):
            transposed_conv2d(x, w, ConvSpec(kernel=(2, 2), dilation=(2, 2)))
        with pytest.raises(ShapeError):
            transposed_conv2d(x, w, ConvSpec(kernel=(2, 2), groups=2))


class TestBilinear:
    def test_constant_point(self):
        x = np.full((1, 1, 1, 1), 7.0, dtype=np.float32)
        assert np.array_equal(bilinear_upsample_x2(x), np.full((1, 1, 2, 2), 7.0, dtype=np.float32))

    def test_half_pixel_hand_case(self):
        x = f32([0.0, 2.0]).reshape(1, 1, 1, 2)
        out = bilinear_upsample_x2(x)
        assert np.allclose(out[0, 0, 0], [0.0, 0.5, 1.5, 2.0], atol=0)
        assert np.allclose(out[0, 0, 1], [0.0, 0.5, 1.5, 2.0], atol=0)

    def test_matches_formula_oracle(self, rng):
        x = rng.uniform(-1, 1, size=(1, 3, 5, 4)).astype(np.float32)
        got = bilinear_upsample_x2(x)
        ref = oracles.bilinear_x2_oracle(x)
        assert np.max(np.abs(got - ref)) <= 1e-6

    def test_random_suite(self):
        assert suites.bilinear_suite(cases=30, seed=9) <= 1e-5

    def test_preserves_range(self, rng):
        for _ in range(20):
            x = oracles.random_nchw(rng)
            out = bilinear_upsample_x2(x)
            assert out.min() >= x.min()
            assert out.max() <= x.max()


class TestAvgPool:
    def test_constant_interior(self):
        x = np.full((1, 1, 5, 5), 5.0, dtype=np.float32)
        out = avg_pool(x)
        assert out[0, 0, 1, 1] == 5.0

    def test_corner_counts_padding(self):
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        out = avg_pool(x, (3, 3), (2, 2), (1, 1))
        assert out.shape == (1, 1, 1, 1)
        assert abs(out[0, 0, 0, 0] - 4.0 / 9.0) <= 1e-7

    def test_random_suite(self):
        assert suites.pool_suite(cases=30, seed=10) <= 1e-5


class TestChannelShuffle:
    def test_two_group_transpose(self):
        x = np.zeros((1, 4, 1, 1), dtype=np.float32)
        x[0, :, 0, 0] = [1.0, 2.0, 3.0, 4.0]   # A B C D
        out = channel_shuffle(x, 2)
        assert list(out[0, :, 0, 0]) == [1.0, 3.0, 2.0, 4.0]   # A C B D

    def test_single_group_identity(self, rng):
        x = rng.normal(size=(1, 6, 2, 2)).astype(np.float32)
        assert np.array_equal(channel_shuffle(x, 1), x)

    def test_inverse_composition(self, rng):
        x = rng.normal(size=(2, 12, 3, 3)).astype(np.float32)
        assert np.array_equal(channel_shuffle(channel_shuffle(x, 3), 4), x)

    def test_bijection_on_channels(self, rng):
        x = rng.normal(size=(1, 8, 2, 2)).astype(np.float32)
        out = channel_shuffle(x, 4)
        got = {out[0, c].tobytes() for c in range(8)}
        want = {x[0, c].tobytes() for c in range(8)}
        assert got == want

    def test_divisibility_error(self):
        with pytest.raises(ShapeError):
            channel_shuffle(np.zeros((1, 5, 1, 1), dtype=np.float32), 2)

    def test_random_suite(self):
        assert suites.shuffle_suite(cases=30, seed=11) == 0.0


class TestBnAct:
    def test_identity_params_bitwise(self, rng):
        x = rng.normal(size=(1, 4, 3, 3)).astype(np.float32)
        out = bn_act(x, BnActParams.identity(4))
        assert np.array_equal(out, x)

    def test_relu(self):
        x = f32([-1.0, 2.0]).reshape(1, 1, 1, 2)
        out = bn_act(x, BnActParams.identity(1, activation="relu"))
        assert list(out.reshape(-1)) == [0.0, 2.0]

    def test_prelu_slope(self):
        x = f32([-4.0, 4.0]).reshape(1, 1, 1, 2)
        out = bn_act(x, BnActParams.identity(1, activation="prelu", slope=0.25))
        assert list(out.reshape(-1)) == [-1.0, 4.0]

    def test_random_suite(self):
        assert suites.bn_act_suite(cases=30, seed=12) <= 1e-5

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            bn_act(np.zeros((1, 3, 2, 2), dtype=np.float32), BnActParams.identity(4))

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            BnActParams(gamma=f32([1.0]), beta=f32([0.0]), mean=f32([0.0]), var=f32([-1.0]))
