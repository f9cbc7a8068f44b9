import numpy as np
import pytest

from trimodal.errors import ConfigError, ShapeError
from trimodal.layers import (
    ConvSpec,
    ConvLayer,
    DenseLayer,
    MaxPoolLayer,
    MultiConvLayer,
    ReluLayer,
    SigmoidLayer,
    SoftmaxLayer,
)
from trimodal.network import Network, TrainConfig, dataset_loss, grad_check, train_softmax
from trimodal.tensor import Tensor


def dense_net(widths, seed=0, softmax=True, sigmoid=False):
    layers = []
    for a, b in zip(widths, widths[1:]):
        layers.append(DenseLayer(a, b))
        layers.append(SigmoidLayer() if sigmoid else ReluLayer())
    layers.pop()  # no activation after the last dense
    if softmax:
        layers.append(SoftmaxLayer())
    return Network(layers, (widths[0],), seed)


class TestForward:
    def test_empty_layer_list_is_identity(self):
        net = Network([], (3,), 0)
        x = Tensor([1.0, -2.0, 3.0])
        assert net.forward(x) == x

    def test_single_relu(self):
        net = Network([ReluLayer()], (2,), 0)
        assert net.forward(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]

    def test_conv_then_indivisible_pool_rejected_at_build(self):
        conv = ConvLayer(ConvSpec(
            rank=1, kernel_dims=(2,), in_channels=1, out_channels=1,
            weights=Tensor([[[1.0, 1.0]]]), bias=[0.0],
        ))
        with pytest.raises(ShapeError, match="layer 1"):
            Network([conv, MaxPoolLayer(2)], (1, 4), 0)

    def test_forward_rejects_wrong_input_dims(self):
        net = dense_net([4, 3, 2])
        with pytest.raises(ShapeError):
            net.forward(Tensor([1.0, 2.0]))

    def test_output_dims_pure_function_of_input(self):
        net = dense_net([6, 5, 3])
        assert net.output_dims == (3,)


class TestBackward:
    def test_dense_weight_gradient_is_input(self):
        # y = Wx, scalar loss = y  =>  dL/dW = x
        layer = DenseLayer(3, 1, weights=np.zeros((1, 3)), bias=np.zeros(1))
        net = Network([layer], (3,), 0)
        x = Tensor([2.0, -1.0, 4.0])
        net.forward(x)
        grads = net.backward(Tensor([1.0]))
        assert grads[0].tolist() == [[2.0, -1.0, 4.0]]
        assert grads[1].tolist() == [1.0]

    def test_inactive_relu_kills_gradient(self):
        net = Network([ReluLayer()], (1,), 0)
        net.forward(Tensor([-3.0]))
        # upstream gradient 5 -> 0 through an inactive unit
        assert net.backward(Tensor([5.0]))  == []
        layer = DenseLayer(1, 1, weights=np.array([[1.0]]), bias=np.zeros(1))
        net = Network([layer, ReluLayer()], (1,), 0)
        net.forward(Tensor([-3.0]))
        grads = net.backward(Tensor([5.0]))
        assert grads[0].tolist() == [[0.0]]

    def test_backward_before_forward_rejected(self):
        net = dense_net([2, 2])
        with pytest.raises(ShapeError, match="before forward"):
            net.backward(Tensor([1.0, 1.0]))

    def test_random_small_net_matches_finite_differences(self):
        conv = ConvLayer(ConvSpec(rank=1, kernel_dims=(3,), in_channels=2, out_channels=4))
        net = Network(
            [conv, ReluLayer(), MaxPoolLayer(2), DenseLayer(4 * 5, 6), ReluLayer(),
             DenseLayer(6, 3), SoftmaxLayer()],
            (2, 12), rng_seed=11,
        )
        rng = np.random.Generator(np.random.PCG64(7))
        err = grad_check(net, Tensor(rng.normal(size=(2, 12))), epsilon=1e-5)
        assert err < 1e-4


class TestGradCheck:
    def test_zero_network_finite_error(self):
        layer = DenseLayer(2, 2, weights=np.zeros((2, 2)), bias=np.zeros(2))
        net = Network([layer], (2,), 0)
        err = grad_check(net, Tensor([1.0, 2.0]), epsilon=1e-5)
        assert np.isfinite(err)

    def test_dense_only_seed7(self):
        net = dense_net([5, 8, 3], seed=7)
        rng = np.random.Generator(np.random.PCG64(7))
        err = grad_check(net, Tensor(rng.normal(size=5)), epsilon=1e-5)
        assert err < 1e-4

    def test_corrupted_gradient_detected(self):
        class BrokenRelu(ReluLayer):
            def backward(self, grad_out, cache):
                g, p = super().backward(grad_out, cache)
                return g + 0.1, p

        net = Network([DenseLayer(4, 4), BrokenRelu(), DenseLayer(4, 2)], (4,), 3)
        rng = np.random.Generator(np.random.PCG64(3))
        err = grad_check(net, Tensor(rng.normal(size=4)), epsilon=1e-5)
        assert err > 1e-2

    def test_nonpositive_epsilon_rejected(self):
        net = dense_net([2, 2])
        with pytest.raises(ConfigError):
            grad_check(net, Tensor([1.0, 1.0]), epsilon=0.0)

    def test_parameter_cap(self):
        net = dense_net([200, 200])
        with pytest.raises(ConfigError, match="10000"):
            grad_check(net, Tensor(np.ones(200)), epsilon=1e-5)

    def test_multiconv_and_sigmoid_gradients(self):
        specs = [ConvSpec(rank=1, kernel_dims=(k,), in_channels=2, out_channels=3)
                 for k in (2, 3)]
        net = Network(
            [MultiConvLayer(specs, align=2), SigmoidLayer(), MaxPoolLayer(2),
             DenseLayer(6 * 4, 4), SoftmaxLayer()],
            (2, 10), rng_seed=5,
        )
        rng = np.random.Generator(np.random.PCG64(5))
        err = grad_check(net, Tensor(rng.normal(size=(2, 10))), epsilon=1e-5)
        assert err < 1e-4

    def test_conv2d_gradients(self):
        conv = ConvLayer(ConvSpec(rank=2, kernel_dims=(2, 3), in_channels=2, out_channels=3))
        net = Network(
            [conv, ReluLayer(), MaxPoolLayer((2, 2)), DenseLayer(3 * 2 * 3, 3), SoftmaxLayer()],
            (2, 5, 8), rng_seed=9,
        )
        rng = np.random.Generator(np.random.PCG64(9))
        err = grad_check(net, Tensor(rng.normal(size=(2, 5, 8))), epsilon=1e-5)
        assert err < 1e-4


def separable_points():
    xs = [Tensor([-1.0, 0.5]), Tensor([1.0, -0.5])]
    ys = [0, 1]
    return xs, ys


class TestTrainSoftmax:
    def test_separable_points_reach_perfect_accuracy(self):
        xs, ys = separable_points()
        net = dense_net([2, 2], seed=1)
        net, trace = train_softmax(net, xs, ys, TrainConfig(0.5, 200, 1, seed=2))
        preds = [int(np.argmax(net.forward(x).data)) for x in xs]
        assert preds == ys
        assert trace[-1] < trace[0]

    def test_zero_learning_rate_is_noop(self):
        xs, ys = separable_points()
        net = dense_net([2, 2], seed=1)
        before = [p.copy() for p in net.params()]
        net, trace = train_softmax(net, xs, ys, TrainConfig(0.0, 5, 1, seed=2))
        for b, a in zip(before, net.params()):
            assert np.array_equal(b, a)
        assert len(set(trace)) == 1

    def test_same_seed_bit_identical(self):
        xs, ys = separable_points()
        traces = []
        weights = []
        for _ in range(2):
            net = dense_net([2, 4, 2], seed=1)
            net, trace = train_softmax(net, xs, ys, TrainConfig(0.1, 20, 2, seed=9))
            traces.append(trace)
            weights.append([p.copy() for p in net.params()])
        assert traces[0] == traces[1]
        for a, b in zip(*weights):
            assert np.array_equal(a, b)

    def test_loss_trace_non_increasing_at_stable_rate(self):
        rng = np.random.Generator(np.random.PCG64(4))
        xs = [Tensor(rng.normal(size=3) + (2.0 if i % 2 else -2.0)) for i in range(10)]
        ys = [i % 2 for i in range(10)]
        net = dense_net([3, 4, 2], seed=4)
        net, trace = train_softmax(net, xs, ys, TrainConfig(0.05, 30, 10, seed=4))
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-12)

    def test_out_of_range_label_rejected(self):
        xs, _ = separable_points()
        net = dense_net([2, 2], seed=1)
        with pytest.raises(ConfigError, match="label"):
            train_softmax(net, xs, [0, 2], TrainConfig(0.1, 1, 1, seed=0))

    def test_requires_terminal_softmax(self):
        net = dense_net([2, 2], softmax=False)
        with pytest.raises(ConfigError):
            train_softmax(net, *separable_points(), TrainConfig(0.1, 1, 1, seed=0))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        specs = [ConvSpec(rank=1, kernel_dims=(k,), in_channels=3, out_channels=2)
                 for k in (2, 3)]
        net = Network(
            [MultiConvLayer(specs, align=2), ReluLayer(), MaxPoolLayer(2),
             DenseLayer(2 * 2 * 4, 5), SigmoidLayer(), DenseLayer(5, 2), SoftmaxLayer()],
            (3, 11), rng_seed=21,
        )
        path = tmp_path / "net.json"
        net.save(path)
        loaded = Network.load(path)
        assert loaded.input_dims == net.input_dims
        assert loaded.rng_seed == net.rng_seed
        for a, b in zip(net.params(), loaded.params()):
            assert np.array_equal(a, b)
        x = Tensor(np.random.Generator(np.random.PCG64(0)).normal(size=(3, 11)))
        assert net.forward(x) == loaded.forward(x)

    def test_same_seed_same_init(self):
        a = dense_net([4, 3, 2], seed=13)
        b = dense_net([4, 3, 2], seed=13)
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa, pb)


class TestDatasetLoss:
    def test_perfect_prediction_low_loss(self):
        layer = DenseLayer(2, 2, weights=np.array([[10.0, 0.0], [0.0, 10.0]]), bias=np.zeros(2))
        net = Network([layer, SoftmaxLayer()], (2,), 0)
        loss = dataset_loss(net, [Tensor([1.0, 0.0])], [0])
        assert loss < 1e-4
