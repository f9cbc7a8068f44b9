import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal.errors import ShapeError
from trimodal.layers import (
    ConvSpec,
    ConvLayer,
    DenseLayer,
    MaxPoolLayer,
    MultiConvLayer,
    ReluLayer,
    SigmoidLayer,
    SoftmaxLayer,
    conv_forward,
    maxpool_forward,
)
from trimodal.tensor import Tensor


def spec1d(kernel, bias=0.0):
    kernel = np.asarray(kernel, dtype=float)
    return ConvSpec(
        rank=1,
        kernel_dims=(kernel.size,),
        in_channels=1,
        out_channels=1,
        weights=Tensor(kernel.reshape(1, 1, -1)),
        bias=[bias],
    )


class TestConvForward:
    def test_first_window_selector_kernel(self):
        out = conv_forward(Tensor([1.0, 2.0, 3.0]), spec1d([1.0, 0.0]))
        assert out.data.tolist() == [1.0, 2.0]

    def test_identity_kernel(self):
        out = conv_forward(Tensor([1.0, 2.0, 3.0]), spec1d([1.0]))
        assert out.data.tolist() == [1.0, 2.0, 3.0]

    def test_2d_window_sum(self):
        # hand-summed window dot product: 1+2+3+4 = 10
        spec = ConvSpec(
            rank=2,
            kernel_dims=(2, 2),
            in_channels=1,
            out_channels=1,
            weights=Tensor(np.ones((1, 1, 2, 2))),
            bias=[0.0],
        )
        out = conv_forward(Tensor([[1.0, 2.0], [3.0, 4.0]]), spec)
        assert out.data.tolist() == [[10.0]]

    def test_shape_mismatch_names_both_shapes(self):
        spec = spec1d([1.0, 0.0])
        with pytest.raises(ShapeError, match=r"\(2, 3, 4\).*\(1, 1, 2\)"):
            conv_forward(Tensor(np.ones((2, 3, 4))), spec)

    def test_input_smaller_than_kernel_rejected(self):
        with pytest.raises(ShapeError):
            conv_forward(Tensor([1.0]), spec1d([1.0, 0.0, 0.0]))

    def test_channeled_input_keeps_channel_axis(self):
        spec = ConvSpec(
            rank=1,
            kernel_dims=(1,),
            in_channels=2,
            out_channels=3,
            weights=Tensor(np.ones((3, 2, 1))),
            bias=[0.0, 0.0, 0.0],
        )
        out = conv_forward(Tensor([[1.0, 2.0], [3.0, 4.0]]), spec)
        assert out.dims == (3, 2)
        assert out.data[0].tolist() == [4.0, 6.0]


class TestMaxPoolForward:
    def test_window_two(self):
        assert maxpool_forward(Tensor([1.0, 3.0, 2.0, 5.0]), 2).data.tolist() == [3.0, 5.0]

    def test_identity_pool(self):
        assert maxpool_forward(Tensor([7.0]), 1).data.tolist() == [7.0]

    def test_global_2d_pool(self):
        out = maxpool_forward(Tensor([[1.0, 2.0], [3.0, 4.0]]), (2, 2))
        assert out.data.tolist() == [[4.0]]

    def test_non_divisible_rejected(self):
        with pytest.raises(ShapeError):
            maxpool_forward(Tensor([1.0, 2.0, 3.0]), 2)

    @given(
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=3),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_pool_output_is_subset_of_input(self, blocks, window, channels, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        x = rng.normal(size=(channels, blocks * window))
        out = maxpool_forward(Tensor(x), window)
        assert out.dims == (channels, blocks)
        assert set(out.flat().tolist()) <= set(x.reshape(-1).tolist())


class TestShapeAlgebra:
    @given(
        st.integers(min_value=1, max_value=5),   # kernel
        st.integers(min_value=1, max_value=8),   # extra length beyond kernel
        st.integers(min_value=1, max_value=3),   # in channels
        st.integers(min_value=1, max_value=4),   # out channels
    )
    @settings(max_examples=60, deadline=None)
    def test_conv1d_output_length(self, k, extra, cin, cout):
        length = k + extra - 1
        layer = ConvLayer(ConvSpec(rank=1, kernel_dims=(k,), in_channels=cin, out_channels=cout))
        assert layer.out_dims((cin, length)) == (cout, length - k + 1)

    @given(
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=0, max_value=5),
        st.integers(min_value=0, max_value=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_conv2d_output_dims(self, kh, kw, eh, ew):
        layer = ConvLayer(ConvSpec(rank=2, kernel_dims=(kh, kw), in_channels=1, out_channels=2))
        assert layer.out_dims((1, kh + eh, kw + ew)) == (2, eh + 1, ew + 1)

    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=6))
    @settings(max_examples=40, deadline=None)
    def test_pool_dims(self, window, blocks):
        layer = MaxPoolLayer(window)
        assert layer.out_dims((3, window * blocks)) == (3, blocks)

    def test_dense_flattens_and_checks_total(self):
        layer = DenseLayer(6, 4)
        assert layer.out_dims((2, 3)) == (4,)
        with pytest.raises(ShapeError):
            layer.out_dims((2, 4))

    def test_relu_sigmoid_softmax_preserve_dims(self):
        assert ReluLayer().out_dims((3, 4)) == (3, 4)
        assert SigmoidLayer().out_dims((5,)) == (5,)
        assert SoftmaxLayer().out_dims((7,)) == (7,)
        with pytest.raises(ShapeError):
            SoftmaxLayer().out_dims((2, 2))


class TestElementwise:
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_relu_nonnegative(self, values):
        out, _ = ReluLayer().forward(np.array(values))
        assert np.all(out >= 0)

    def test_softmax_sums_to_one(self):
        out, _ = SoftmaxLayer().forward(np.array([1.0, 2.0, 3.0]))
        assert out.sum() == pytest.approx(1.0)
        assert np.argmax(out) == 2


class TestMultiConv:
    def build(self, kernel_sizes, maps, align):
        specs = [
            ConvSpec(rank=1, kernel_dims=(k,), in_channels=2, out_channels=maps)
            for k in kernel_sizes
        ]
        layer = MultiConvLayer(specs, align=align)
        layer.init_params(np.random.Generator(np.random.PCG64(0)))
        return layer

    def test_concat_channel_count(self):
        layer = self.build((2, 3), maps=4, align=2)
        # lengths 11 and 10 -> common 10
        assert layer.out_dims((2, 12)) == (8, 10)

    def test_ablating_a_branch_changes_width_by_its_map_count(self):
        both = self.build((2, 3), maps=4, align=1)
        one = self.build((2,), maps=4, align=1)
        assert both.out_dims((2, 12))[0] - one.out_dims((2, 12))[0] == 4

    def test_branches_see_same_input(self):
        layer = self.build((1, 1), maps=1, align=1)
        x = np.arange(6, dtype=float).reshape(2, 3)
        out, _ = layer.forward(x)
        w0 = layer.specs[0].weights.data
        expect0 = w0[0, 0, 0] * x[0] + w0[0, 1, 0] * x[1]
        assert np.allclose(out[0], expect0)
