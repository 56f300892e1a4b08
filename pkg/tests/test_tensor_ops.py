"""Forward semantics of the tensor ops: hand-computed values, shape
errors, and the structural invariants (softmax normalization, conv
adjointness, instance-norm moments, bitwise replay)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attngan import Tensor, finite_checks
from attngan.tensor import NumericError, ShapeError
from attngan import tensor as T


def rand(shape, seed=0, lo=-2.0, hi=2.0, dtype=np.float32):
    return np.random.default_rng(seed).uniform(lo, hi, shape).astype(dtype)


class TestElementwise:
    def test_add_matches_numpy(self):
        a, b = rand((2, 3), 1), rand((2, 3), 2)
        assert np.array_equal(T.add(Tensor(a), Tensor(b)).data, a + b)

    def test_scalar_broadcast(self):
        a = rand((2, 3), 3)
        assert np.array_equal(T.add(Tensor(a), 1.5).data, a + np.float32(1.5))
        assert np.array_equal(T.mul(Tensor(a), 2.0).data, a * np.float32(2.0))
        assert np.array_equal(T.sub(1.0, Tensor(a)).data, np.float32(1.0) - a)

    def test_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ShapeError, match=r"add.*\(2, 3\).*\(3, 2\)"):
            T.add(Tensor(rand((2, 3))), Tensor(rand((3, 2))))

    def test_no_nontrivial_broadcasting(self):
        # (2, 3) + (3,) would broadcast in numpy; here it must fail loud
        with pytest.raises(ShapeError):
            T.add(Tensor(rand((2, 3))), Tensor(rand((3,))))

    def test_relu_leaky_tanh_sigmoid(self):
        x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0], dtype=np.float32)
        assert np.array_equal(T.relu(Tensor(x)).data, np.maximum(x, 0))
        lk = T.leaky_relu(Tensor(x), 0.2).data
        assert np.allclose(lk, np.where(x > 0, x, 0.2 * x))
        assert np.allclose(T.tanh(Tensor(x)).data, np.tanh(x))
        assert np.allclose(T.sigmoid(Tensor(x)).data, 1 / (1 + np.exp(-x)), atol=1e-7)

    def test_sigmoid_extreme_inputs_finite(self):
        x = np.array([-1e4, 1e4], dtype=np.float32)
        y = T.sigmoid(Tensor(x)).data
        assert np.all(np.isfinite(y))
        assert y[0] == 0.0 and y[1] == 1.0

    def test_mean_square_abs(self):
        x = np.array([[1.0, -3.0]], dtype=np.float32)
        assert T.mean(Tensor(x)).item() == -1.0
        assert np.array_equal(T.square(Tensor(x)).data, np.array([[1.0, 9.0]], dtype=np.float32))
        assert np.array_equal(T.absolute(Tensor(x)).data, np.array([[1.0, 3.0]], dtype=np.float32))

    def test_finite_checks_mode(self):
        bad = Tensor(np.array([np.inf], dtype=np.float32))
        T.add(bad, 1.0)  # fine when checking is off
        with finite_checks():
            with pytest.raises(NumericError, match="add"):
                T.add(bad, 1.0)


class TestMatmul:
    def test_value(self):
        a, b = rand((3, 4), 5), rand((4, 2), 6)
        assert np.allclose(T.matmul(Tensor(a), Tensor(b)).data, a @ b, rtol=1e-6)

    def test_inner_dim_mismatch(self):
        with pytest.raises(ShapeError, match="matmul"):
            T.matmul(Tensor(rand((3, 4))), Tensor(rand((3, 2))))


class TestConv2d:
    def test_all_ones_3x3_kernel_2x2(self):
        # every 2x2 window of an all-ones image sums to 4
        out = T.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))))
        assert out.shape == (1, 1, 2, 2)
        assert np.array_equal(out.data, np.full((1, 1, 2, 2), 4.0, dtype=np.float32))

    def test_identity_1x1_kernel(self):
        x = rand((2, 1, 5, 5), 7)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        out = T.conv2d(Tensor(x), Tensor(w))
        assert np.array_equal(out.data, x)

    def test_stride_and_padding_geometry(self):
        out = T.conv2d(Tensor(rand((1, 3, 32, 32), 8)), Tensor(rand((4, 3, 4, 4), 9)),
                       stride=2, padding=1)
        assert out.shape == (1, 4, 16, 16)

    def test_asymmetric_padding_preserves_size(self):
        out = T.conv2d(Tensor(rand((1, 2, 8, 8), 10)), Tensor(rand((1, 2, 4, 4), 11)),
                       stride=1, padding=((1, 2), (1, 2)))
        assert out.shape == (1, 1, 8, 8)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="conv2d"):
            T.conv2d(Tensor(rand((1, 3, 8, 8))), Tensor(rand((4, 2, 3, 3))))

    def test_bias(self):
        x, w = rand((1, 2, 4, 4), 12), rand((3, 2, 3, 3), 13)
        b = np.array([1.0, -1.0, 0.5], dtype=np.float32)
        with_bias = T.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1)
        without = T.conv2d(Tensor(x), Tensor(w), padding=1)
        assert np.allclose(with_bias.data, without.data + b.reshape(1, 3, 1, 1), rtol=1e-6)


class TestConvTranspose2d:
    @pytest.mark.parametrize("stride,padding,output_padding,in_hw", [
        (1, 0, 0, 6), (2, 1, 1, 8), (2, 0, 0, 7), (1, 1, 0, 6), (2, 1, 0, 7)])
    def test_adjoint_dot_product(self, stride, padding, output_padding, in_hw):
        # <conv(x), y> == <x, conv_transpose(y)> for the same kernel
        rng = np.random.default_rng(stride * 100 + padding)
        x = Tensor(rng.standard_normal((2, 3, in_hw, in_hw)), dtype=np.float64)
        w = Tensor(rng.standard_normal((4, 3, 3, 3)), dtype=np.float64)
        cx = T.conv2d(x, w, stride=stride, padding=padding)
        y = Tensor(rng.standard_normal(cx.shape), dtype=np.float64)
        ty = T.conv_transpose2d(y, w, stride=stride, padding=padding,
                                output_padding=output_padding)
        assert ty.shape == x.shape
        lhs = float((cx.data * y.data).sum())
        rhs = float((x.data * ty.data).sum())
        assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), abs(rhs))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="conv_transpose2d"):
            T.conv_transpose2d(Tensor(rand((1, 3, 4, 4))), Tensor(rand((4, 3, 3, 3))))


class TestSoftmaxOverChannel:
    def test_zero_logits_symmetric(self):
        out = T.softmax_over_channel(Tensor(np.zeros((1, 2, 3, 3))))
        assert np.array_equal(out.data, np.full((1, 2, 3, 3), 0.5, dtype=np.float32))

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_sums_to_one_everywhere(self, seed):
        logits = np.random.default_rng(seed).uniform(-30, 30, (2, 5, 4, 4)).astype(np.float32)
        out = T.softmax_over_channel(Tensor(logits))
        sums = out.data.sum(axis=1)
        assert np.abs(sums - 1.0).max() <= 1e-5
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_requires_4d(self):
        with pytest.raises(ShapeError):
            T.softmax_over_channel(Tensor(rand((3, 4))))


class TestInstanceNorm:
    def test_moments(self):
        x = rand((2, 3, 8, 8), 21, lo=-5, hi=5)
        y = T.instance_norm(Tensor(x)).data
        means = y.mean(axis=(2, 3))
        variances = y.var(axis=(2, 3))
        assert np.abs(means).max() <= 1e-4
        assert np.abs(variances - 1).max() <= 1e-3

    def test_constant_input_stays_finite(self):
        y = T.instance_norm(Tensor(np.full((1, 1, 4, 4), 3.0))).data
        assert np.all(np.isfinite(y))
        assert np.abs(y).max() <= 1e-2  # eps keeps 0/sqrt(eps) at zero


class TestShapeOps:
    def test_pad_then_crop_roundtrip(self):
        x = rand((1, 2, 4, 5), 30)
        padded = T.pad(Tensor(x), ((1, 2), (0, 3)))
        assert padded.shape == (1, 2, 7, 8)
        back = T.crop(padded, 1, 0, 4, 5)
        assert np.array_equal(back.data, x)

    def test_crop_out_of_bounds(self):
        with pytest.raises(ShapeError, match="crop"):
            T.crop(Tensor(rand((1, 1, 4, 4))), 2, 2, 3, 3)

    def test_upsample_nearest(self):
        x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
        up = T.upsample_nearest(Tensor(x), 2)
        expected = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
        assert np.array_equal(up.data, expected)

    def test_concat_slice_expand(self):
        a, b = rand((2, 2, 3, 3), 31), rand((2, 3, 3, 3), 32)
        cat = T.concat_channels([Tensor(a), Tensor(b)])
        assert cat.shape == (2, 5, 3, 3)
        assert np.array_equal(T.slice_channels(cat, 2, 5).data, b)
        single = Tensor(rand((2, 1, 3, 3), 33))
        assert np.array_equal(T.expand_channels(single, 4).data,
                              np.repeat(single.data, 4, axis=1))

    def test_concat_spatial_mismatch(self):
        with pytest.raises(ShapeError, match="concat_channels"):
            T.concat_channels([Tensor(rand((1, 1, 3, 3))), Tensor(rand((1, 1, 4, 4)))])


class TestDeterminism:
    def _pipeline(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.uniform(-1, 1, (2, 3, 16, 16)).astype(np.float32))
        w1 = Tensor(rng.standard_normal((8, 3, 3, 3)).astype(np.float32) * 0.1)
        h = T.conv2d(x, w1, stride=2, padding=1)
        h = T.instance_norm(h)
        h = T.leaky_relu(h, 0.2)
        h = T.upsample_nearest(h, 2)
        return T.softmax_over_channel(h).data

    def test_bitwise_identical_replay(self):
        a = self._pipeline(1234)
        b = self._pipeline(1234)
        assert a.dtype == b.dtype
        assert np.array_equal(a, b)


class TestTensorBasics:
    def test_shape_data_length_invariant(self):
        t = Tensor(rand((3, 4, 5)))
        assert int(np.prod(t.shape)) == t.data.size

    def test_default_dtype_is_float32(self):
        assert Tensor([1.0, 2.0]).dtype == np.float32

    def test_float64_preserved(self):
        assert Tensor(np.zeros(3, dtype=np.float64)).dtype == np.float64

    def test_detach_shares_values_drops_grad_flag(self):
        t = Tensor(rand((2, 2)), requires_grad=True)
        d = t.detach()
        assert not d.requires_grad
        assert np.array_equal(d.data, t.data)
