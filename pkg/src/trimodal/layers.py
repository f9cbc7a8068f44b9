"""Network layers: valid convolution (1-D/2-D), a parallel multi-kernel
convolution bank, non-overlapping max pooling, ReLU, sigmoid, dense, and
softmax.

Every layer implements the same small protocol: ``out_dims`` (pure shape
algebra), ``init_params``, ``forward`` returning (output, cache), and
``backward`` returning (input gradient, parameter gradients). Convolutions
are valid (no padding); pooling rejects spatial dims not divisible by the
window so config mistakes surface at build time instead of silently
truncating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, as_tensor


@dataclass
class ConvSpec:
    """Parameters of one valid convolution: kernel geometry plus weights.

    weights dims are [out_channels, in_channels, *kernel_dims]; bias has one
    entry per output channel. Weights may be left None and filled in by
    ``init_params`` at network build time.
    """

    rank: int
    kernel_dims: tuple[int, ...]
    in_channels: int
    out_channels: int
    weights: Tensor | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.kernel_dims = tuple(int(k) for k in self.kernel_dims)
        if self.rank not in (1, 2):
            raise ShapeError(f"conv rank must be 1 or 2, got {self.rank}")
        if len(self.kernel_dims) != self.rank:
            raise ShapeError(
                f"kernel_dims {self.kernel_dims} does not match rank {self.rank}"
            )
        if any(k < 1 for k in self.kernel_dims) or self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("kernel dims and channel counts must be positive")
        expected = (self.out_channels, self.in_channels) + self.kernel_dims
        if self.weights is not None:
            self.weights = as_tensor(self.weights)
            if self.weights.dims != expected:
                raise ShapeError(
                    f"conv weights dims {self.weights.dims} != expected {expected}"
                )
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if self.bias.shape != (self.out_channels,):
                raise ShapeError(
                    f"conv bias length {self.bias.shape[0]} != out_channels {self.out_channels}"
                )

    @property
    def weight_dims(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels) + self.kernel_dims


def _glorot(rng: np.random.Generator, dims: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=dims)


def _conv_valid(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: [C, *spatial], w: [O, C, *kernel] -> [O, *spatial']."""
    if w.ndim == 3:  # 1-D
        k = w.shape[2]
        win = sliding_window_view(x, k, axis=1)  # [C, L', k]
        return np.einsum("ock,clk->ol", w, win, optimize=True) + b[:, None]
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # [C, H', W', kh, kw]
    return np.einsum("ocij,cxyij->oxy", w, win, optimize=True) + b[:, None, None]


def _conv_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_w, grad_b) for a valid convolution."""
    grad_x = np.zeros_like(x)
    if w.ndim == 3:
        k = w.shape[2]
        lp = grad_out.shape[1]
        win = sliding_window_view(x, k, axis=1)
        grad_w = np.einsum("ol,clk->ock", grad_out, win, optimize=True)
        grad_b = grad_out.sum(axis=1)
        for j in range(k):
            grad_x[:, j : j + lp] += np.einsum("ol,oc->cl", grad_out, w[:, :, j])
        return grad_x, grad_w, grad_b
    kh, kw = w.shape[2], w.shape[3]
    hp, wp = grad_out.shape[1], grad_out.shape[2]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    grad_w = np.einsum("oxy,cxyij->ocij", grad_out, win, optimize=True)
    grad_b = grad_out.sum(axis=(1, 2))
    for i in range(kh):
        for j in range(kw):
            grad_x[:, i : i + hp, j : j + wp] += np.einsum(
                "oxy,oc->cxy", grad_out, w[:, :, i, j]
            )
    return grad_x, grad_w, grad_b


class ConvLayer:
    kind = "conv"

    def __init__(self, spec: ConvSpec):
        self.spec = spec

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        s = self.spec
        if len(in_dims) != s.rank + 1 or in_dims[0] != s.in_channels:
            raise ShapeError(
                f"conv expects [{s.in_channels}, *spatial] with rank {s.rank}, got {in_dims}"
            )
        spatial = in_dims[1:]
        if any(d < k for d, k in zip(spatial, s.kernel_dims)):
            raise ShapeError(
                f"conv spatial dims {spatial} smaller than kernel {s.kernel_dims}"
            )
        out_spatial = tuple(d - k + 1 for d, k in zip(spatial, s.kernel_dims))
        return (s.out_channels,) + out_spatial

    def init_params(self, rng: np.random.Generator) -> None:
        s = self.spec
        ksz = int(np.prod(s.kernel_dims))
        if s.weights is None:
            s.weights = Tensor(
                _glorot(rng, s.weight_dims, s.in_channels * ksz, s.out_channels * ksz)
            )
        if s.bias is None:
            s.bias = np.zeros(s.out_channels)

    def params(self) -> list[np.ndarray]:
        return [self.spec.weights.data, self.spec.bias]

    def forward(self, x: np.ndarray):
        return _conv_valid(x, self.spec.weights.data, self.spec.bias), x

    def backward(self, grad_out: np.ndarray, cache) -> tuple[np.ndarray, list[np.ndarray]]:
        x = cache
        grad_x, grad_w, grad_b = _conv_backward(x, self.spec.weights.data, grad_out)
        return grad_x, [grad_w, grad_b]

    def describe(self) -> dict:
        s = self.spec
        return {
            "kind": self.kind,
            "rank": s.rank,
            "kernel_dims": list(s.kernel_dims),
            "in_channels": s.in_channels,
            "out_channels": s.out_channels,
        }


class MultiConvLayer:
    """Parallel bank of 1-D convolutions with different kernel sizes.

    Each branch convolves the same input; branch outputs are cropped to the
    largest common length divisible by ``align`` and concatenated along the
    channel axis. ``align`` is normally the pool window that follows, so the
    merged map pools cleanly.
    """

    kind = "multiconv"

    def __init__(self, specs: Sequence[ConvSpec], align: int = 1):
        if not specs:
            raise ShapeError("multiconv needs at least one branch")
        if any(s.rank != 1 for s in specs):
            raise ShapeError("multiconv branches must be rank-1 convolutions")
        in_ch = {s.in_channels for s in specs}
        if len(in_ch) != 1:
            raise ShapeError(f"multiconv branches disagree on in_channels: {sorted(in_ch)}")
        if align < 1:
            raise ShapeError(f"multiconv align must be >= 1, got {align}")
        self.specs = list(specs)
        self.align = int(align)

    def _common_length(self, in_len: int) -> int:
        lens = [in_len - s.kernel_dims[0] + 1 for s in self.specs]
        if any(l < 1 for l in lens):
            raise ShapeError(
                f"input length {in_len} shorter than some multiconv kernel"
            )
        common = (min(lens) // self.align) * self.align
        if common < 1:
            raise ShapeError(
                f"multiconv output length {min(lens)} cannot align to {self.align}"
            )
        return common

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_dims) != 2 or in_dims[0] != self.specs[0].in_channels:
            raise ShapeError(
                f"multiconv expects [{self.specs[0].in_channels}, length], got {in_dims}"
            )
        common = self._common_length(in_dims[1])
        return (sum(s.out_channels for s in self.specs), common)

    def init_params(self, rng: np.random.Generator) -> None:
        for s in self.specs:
            ksz = s.kernel_dims[0]
            if s.weights is None:
                s.weights = Tensor(
                    _glorot(rng, s.weight_dims, s.in_channels * ksz, s.out_channels * ksz)
                )
            if s.bias is None:
                s.bias = np.zeros(s.out_channels)

    def params(self) -> list[np.ndarray]:
        out = []
        for s in self.specs:
            out.extend([s.weights.data, s.bias])
        return out

    def forward(self, x: np.ndarray):
        common = self._common_length(x.shape[1])
        parts = [
            _conv_valid(x, s.weights.data, s.bias)[:, :common] for s in self.specs
        ]
        return np.concatenate(parts, axis=0), (x, common)

    def backward(self, grad_out: np.ndarray, cache):
        x, common = cache
        grad_x = np.zeros_like(x)
        param_grads: list[np.ndarray] = []
        offset = 0
        for s in self.specs:
            full_len = x.shape[1] - s.kernel_dims[0] + 1
            g = np.zeros((s.out_channels, full_len))
            g[:, :common] = grad_out[offset : offset + s.out_channels]
            gx, gw, gb = _conv_backward(x, s.weights.data, g)
            grad_x += gx
            param_grads.extend([gw, gb])
            offset += s.out_channels
        return grad_x, param_grads

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "align": self.align,
            "branches": [
                {
                    "kernel_dims": list(s.kernel_dims),
                    "in_channels": s.in_channels,
                    "out_channels": s.out_channels,
                }
                for s in self.specs
            ],
        }


class MaxPoolLayer:
    """Non-overlapping max pooling over the trailing spatial axes.

    The window is one int per pooled axis; leading (channel) axes pass
    through. Spatial dims must divide evenly by the window.
    """

    kind = "maxpool"

    def __init__(self, window: int | Sequence[int]):
        win = (window,) if isinstance(window, int) else tuple(int(w) for w in window)
        if not win or any(w < 1 for w in win) or len(win) > 2:
            raise ShapeError(f"pool window must be 1 or 2 positive ints, got {win}")
        self.window = win

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        n = len(self.window)
        if len(in_dims) < n:
            raise ShapeError(f"pool window {self.window} has more axes than input {in_dims}")
        lead, spatial = in_dims[: len(in_dims) - n], in_dims[len(in_dims) - n :]
        for d, w in zip(spatial, self.window):
            if d % w != 0:
                raise ShapeError(
                    f"pool window {self.window} does not divide spatial dims {spatial}"
                )
        return lead + tuple(d // w for d, w in zip(spatial, self.window))

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray):
        self.out_dims(x.shape)
        if len(self.window) == 1:
            w = self.window[0]
            blocks = x.reshape(x.shape[:-1] + (x.shape[-1] // w, w))
            idx = blocks.argmax(axis=-1)
            out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
            return out, (x.shape, idx)
        wh, ww = self.window
        h, wd = x.shape[-2], x.shape[-1]
        blocks = x.reshape(x.shape[:-2] + (h // wh, wh, wd // ww, ww))
        blocks = np.moveaxis(blocks, -3, -2)  # [..., h', w', wh, ww]
        flat = blocks.reshape(blocks.shape[:-2] + (wh * ww,))
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx)

    def backward(self, grad_out: np.ndarray, cache):
        in_shape, idx = cache
        if len(self.window) == 1:
            w = self.window[0]
            gb = np.zeros(in_shape[:-1] + (in_shape[-1] // w, w))
            np.put_along_axis(gb, idx[..., None], grad_out[..., None], axis=-1)
            return gb.reshape(in_shape), []
        wh, ww = self.window
        h, wd = in_shape[-2], in_shape[-1]
        gflat = np.zeros(grad_out.shape + (wh * ww,))
        np.put_along_axis(gflat, idx[..., None], grad_out[..., None], axis=-1)
        gb = gflat.reshape(grad_out.shape + (wh, ww))
        gb = np.moveaxis(gb, -2, -3)  # [..., h', wh, w', ww]
        return gb.reshape(in_shape), []

    def describe(self) -> dict:
        return {"kind": self.kind, "window": list(self.window)}


class ReluLayer:
    kind = "relu"

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        return in_dims

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray):
        return np.maximum(x, 0.0), x

    def backward(self, grad_out: np.ndarray, cache):
        return grad_out * (cache > 0), []

    def describe(self) -> dict:
        return {"kind": self.kind}


class SigmoidLayer:
    kind = "sigmoid"

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        return in_dims

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray):
        y = 1.0 / (1.0 + np.exp(-x))
        return y, y

    def backward(self, grad_out: np.ndarray, cache):
        y = cache
        return grad_out * y * (1.0 - y), []

    def describe(self) -> dict:
        return {"kind": self.kind}


class DenseLayer:
    """Fully connected map y = W x + b; flattens its input to a vector."""

    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int,
                 weights: np.ndarray | None = None, bias: np.ndarray | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ShapeError(f"dense dims must be positive, got {in_dim}x{out_dim}")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float64)
        if self.weights is not None and self.weights.shape != (out_dim, in_dim):
            raise ShapeError(
                f"dense weights shape {self.weights.shape} != ({out_dim}, {in_dim})"
            )

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        total = int(np.prod(in_dims))
        if total != self.in_dim:
            raise ShapeError(
                f"dense expects {self.in_dim} inputs, got dims {in_dims} (= {total})"
            )
        return (self.out_dim,)

    def init_params(self, rng: np.random.Generator) -> None:
        if self.weights is None:
            self.weights = _glorot(rng, (self.out_dim, self.in_dim), self.in_dim, self.out_dim)
        if self.bias is None:
            self.bias = np.zeros(self.out_dim)

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    def forward(self, x: np.ndarray):
        flat = x.reshape(-1)
        return self.weights @ flat + self.bias, (flat, x.shape)

    def backward(self, grad_out: np.ndarray, cache):
        flat, in_shape = cache
        grad_w = np.outer(grad_out, flat)
        grad_x = (self.weights.T @ grad_out).reshape(in_shape)
        return grad_x, [grad_w, grad_out.copy()]

    def describe(self) -> dict:
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim}


class SoftmaxLayer:
    kind = "softmax"

    def out_dims(self, in_dims: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_dims) != 1:
            raise ShapeError(f"softmax expects a vector, got dims {in_dims}")
        return in_dims

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray):
        z = x - x.max()
        e = np.exp(z)
        y = e / e.sum()
        return y, y

    def backward(self, grad_out: np.ndarray, cache):
        y = cache
        return y * (grad_out - np.dot(grad_out, y)), []

    def describe(self) -> dict:
        return {"kind": self.kind}


Layer = (
    ConvLayer | MultiConvLayer | MaxPoolLayer | ReluLayer | SigmoidLayer | DenseLayer | SoftmaxLayer
)


def conv_forward(input: Tensor, spec: ConvSpec) -> Tensor:
    """Standalone valid convolution.

    Accepts either a channeled input [in_channels, *spatial] or, when
    in_channels is 1, a bare [*spatial] input; a bare input with a single
    output channel yields a bare [*spatial'] output.
    """
    x = as_tensor(input)
    if spec.weights is None or spec.bias is None:
        raise ShapeError("conv spec has no weights; initialize them first")
    bare = False
    data = x.data
    if len(x.dims) == spec.rank:
        if spec.in_channels != 1:
            raise ShapeError(
                f"input dims {x.dims} lack a channel axis but spec expects "
                f"{spec.in_channels} channels"
            )
        data = data[None, ...]
        bare = True
    elif len(x.dims) != spec.rank + 1:
        raise ShapeError(
            f"input dims {x.dims} incompatible with rank-{spec.rank} conv "
            f"weights {spec.weight_dims}"
        )
    ConvLayer(spec).out_dims(data.shape)
    out = _conv_valid(data, spec.weights.data, spec.bias)
    if bare and spec.out_channels == 1:
        out = out[0]
    return Tensor(out).assert_finite("conv_forward")


def maxpool_forward(input: Tensor, window: int | Sequence[int]) -> Tensor:
    """Standalone non-overlapping max pool over the trailing spatial axes."""
    x = as_tensor(input)
    layer = MaxPoolLayer(window)
    out, _ = layer.forward(x.data)
    return Tensor(out).assert_finite("maxpool_forward")
