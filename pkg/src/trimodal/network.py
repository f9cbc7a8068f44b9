"""Sequential network container: build-time shape validation, seeded
initialization, forward/backward passes, finite-difference gradient checks,
mini-batch SGD training on softmax cross-entropy, and bit-exact JSON
serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import (
    ConvLayer,
    ConvSpec,
    DenseLayer,
    Layer,
    MaxPoolLayer,
    MultiConvLayer,
    ReluLayer,
    SigmoidLayer,
    SoftmaxLayer,
)
from .tensor import Tensor, as_tensor

_LOG_FLOOR = 1e-300

NETWORK_FORMAT = "trimodal-network"
NETWORK_VERSION = 1


@dataclass
class TrainConfig:
    """SGD hyperparameters. The pipeline never invents defaults from wall
    clocks; the seed is mandatory."""

    learning_rate: float
    epochs: int
    batch_size: int
    seed: int

    def __post_init__(self):
        # learning_rate 0 is allowed as an explicit no-op diagnostic mode
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


class Network:
    """Ordered layer stack over a fixed input shape.

    The shape chain is validated once at construction; forward failures can
    then only come from inputs that do not match ``input_dims``. Weights are
    initialized from ``rng_seed`` (uniform +-sqrt(6/(fan_in+fan_out))) so
    identical seed and layer list give bit-identical parameters.
    """

    def __init__(self, layers: Sequence[Layer], input_dims: Sequence[int], rng_seed: int):
        self.layers = list(layers)
        self.input_dims = tuple(int(d) for d in input_dims)
        self.rng_seed = int(rng_seed)
        self._last_forward: tuple[np.ndarray, list] | None = None

        dims = self.input_dims
        self.layer_dims = [dims]
        for i, layer in enumerate(self.layers):
            try:
                dims = layer.out_dims(dims)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from e
            self.layer_dims.append(dims)
        self.output_dims = dims

        rng = np.random.Generator(np.random.PCG64(self.rng_seed))
        for layer in self.layers:
            layer.init_params(rng)

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def forward_full(self, x: Tensor) -> tuple[Tensor, list[np.ndarray]]:
        """Pure forward pass; returns (output, per-layer outputs).

        activations[i] is the output of layer i; activations[-1] equals the
        returned output. Safe to call concurrently on a trained network.
        """
        xt = as_tensor(x)
        if xt.dims != self.input_dims:
            raise ShapeError(f"input dims {xt.dims} != network input {self.input_dims}")
        cur = xt.data
        activations: list[np.ndarray] = []
        caches: list = []
        for i, layer in enumerate(self.layers):
            cur, cache = layer.forward(cur)
            if not np.all(np.isfinite(cur)):
                raise ShapeError(f"layer {i} ({layer.kind}) produced non-finite values")
            activations.append(cur)
            caches.append(cache)
        self._caches = caches  # consumed by the stateful backward
        return Tensor(cur), activations

    def forward(self, x: Tensor) -> Tensor:
        out, activations = self.forward_full(x)
        self._last_forward = (out.data, self._caches)
        return out

    def backward(self, loss_grad: Tensor) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. every weight and bias, in
        layer order, given d(loss)/d(output). Requires a prior forward."""
        if self._last_forward is None:
            raise ShapeError("backward called before forward")
        out, caches = self._last_forward
        g = as_tensor(loss_grad).data
        if g.shape != out.shape:
            raise ShapeError(f"loss grad dims {g.shape} != output dims {out.shape}")
        per_layer: list[list[np.ndarray]] = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            g, pgrads = layer.backward(g, cache)
            if not np.all(np.isfinite(g)):
                raise ShapeError(f"non-finite gradient in {layer.kind} backward")
            per_layer.append(pgrads)
        grads: list[np.ndarray] = []
        for pgrads in reversed(per_layer):
            grads.extend(pgrads)
        return grads

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = layer.describe()
            if isinstance(layer, ConvLayer):
                entry["weights"] = layer.spec.weights.data.tolist()
                entry["bias"] = layer.spec.bias.tolist()
            elif isinstance(layer, MultiConvLayer):
                for b, s in zip(entry["branches"], layer.specs):
                    b["weights"] = s.weights.data.tolist()
                    b["bias"] = s.bias.tolist()
            elif isinstance(layer, DenseLayer):
                entry["weights"] = layer.weights.tolist()
                entry["bias"] = layer.bias.tolist()
            layers.append(entry)
        return {
            "format": NETWORK_FORMAT,
            "version": NETWORK_VERSION,
            "rng_seed": self.rng_seed,
            "input_dims": list(self.input_dims),
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != NETWORK_FORMAT or d.get("version") != NETWORK_VERSION:
            raise ConfigError(
                f"unsupported network container {d.get('format')!r} v{d.get('version')!r}"
            )
        layers: list[Layer] = []
        for entry in d["layers"]:
            kind = entry["kind"]
            if kind == "conv":
                layers.append(ConvLayer(ConvSpec(
                    rank=entry["rank"],
                    kernel_dims=tuple(entry["kernel_dims"]),
                    in_channels=entry["in_channels"],
                    out_channels=entry["out_channels"],
                    weights=Tensor(np.array(entry["weights"])),
                    bias=np.array(entry["bias"]),
                )))
            elif kind == "multiconv":
                specs = [ConvSpec(
                    rank=1,
                    kernel_dims=tuple(b["kernel_dims"]),
                    in_channels=b["in_channels"],
                    out_channels=b["out_channels"],
                    weights=Tensor(np.array(b["weights"])),
                    bias=np.array(b["bias"]),
                ) for b in entry["branches"]]
                layers.append(MultiConvLayer(specs, align=entry["align"]))
            elif kind == "maxpool":
                layers.append(MaxPoolLayer(tuple(entry["window"])))
            elif kind == "relu":
                layers.append(ReluLayer())
            elif kind == "sigmoid":
                layers.append(SigmoidLayer())
            elif kind == "dense":
                layers.append(DenseLayer(
                    entry["in_dim"], entry["out_dim"],
                    weights=np.array(entry["weights"]), bias=np.array(entry["bias"]),
                ))
            elif kind == "softmax":
                layers.append(SoftmaxLayer())
            else:
                raise ConfigError(f"unknown layer kind {kind!r}")
        return cls(layers, d["input_dims"], d["rng_seed"])

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def grad_check(net: Network, input: Tensor, epsilon: float = 1e-5) -> float:
    """Worst relative disagreement between analytic and central-difference
    gradients of a fixed random linear functional of the network output.

    Capped at 10k parameters; this is a verification harness, not a
    benchmark.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if net.param_count() > 10_000:
        raise ConfigError(f"grad_check capped at 10000 parameters, net has {net.param_count()}")

    probe_rng = np.random.Generator(np.random.PCG64(net.rng_seed + 0x9E3779B9))

    out = net.forward(input)
    probe = probe_rng.uniform(-1.0, 1.0, size=out.dims)
    analytic = net.backward(Tensor(probe))

    def loss() -> float:
        y, _ = net.forward_full(input)
        return float(np.sum(probe * y.data))

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            lo_hi = loss()
            flat_p[i] = orig - epsilon
            lo_lo = loss()
            flat_p[i] = orig
            numeric = (lo_hi - lo_lo) / (2 * epsilon)
            denom = max(abs(flat_g[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(flat_g[i] - numeric) / denom)
    return worst


def softmax_cross_entropy(probs: np.ndarray, label: int) -> float:
    return -float(np.log(max(probs[label], _LOG_FLOOR)))


def dataset_loss(net: Network, inputs: Sequence[Tensor], labels: Sequence[int]) -> float:
    total = 0.0
    for x, y in zip(inputs, labels):
        out, _ = net.forward_full(x)
        total += softmax_cross_entropy(out.data, y)
    return total / len(inputs)


def train_softmax(
    net: Network,
    inputs: Sequence[Tensor],
    labels: Sequence[int],
    cfg: TrainConfig,
) -> tuple[Network, list[float]]:
    """Mini-batch SGD on cross-entropy of the terminal softmax.

    Mutates and returns ``net``. The returned trace holds the mean
    full-training-set loss before training and after every epoch; with a
    learning rate below the stability threshold recorded in the experiment
    configs it is non-increasing. Deterministic given cfg.seed.
    """
    if not isinstance(net.layers[-1] if net.layers else None, SoftmaxLayer):
        raise ConfigError("train_softmax requires a terminal softmax layer")
    n_classes = net.output_dims[0]
    if len(inputs) != len(labels) or not inputs:
        raise ConfigError("inputs and labels must be same nonzero length")
    for i, y in enumerate(labels):
        if not (0 <= y < n_classes):
            raise ConfigError(f"label {y} at index {i} outside [0, {n_classes})")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = net.params()
    trace = [dataset_loss(net, inputs, labels)]

    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(inputs))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_sum: list[np.ndarray] | None = None
            for j in batch:
                out = net.forward(inputs[j])
                probs = out.data
                seed_grad = np.zeros_like(probs)
                seed_grad[labels[j]] = -1.0 / max(probs[labels[j]], _LOG_FLOOR)
                grads = net.backward(Tensor(seed_grad))
                if grad_sum is None:
                    grad_sum = [g.copy() for g in grads]
                else:
                    for acc, g in zip(grad_sum, grads):
                        acc += g
            scale = cfg.learning_rate / len(batch)
            for p, g in zip(params, grad_sum):
                p -= scale * g
        trace.append(dataset_loss(net, inputs, labels))
    return net, trace
