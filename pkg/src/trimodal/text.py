"""Sentence feature extraction: embedding lookup into a fixed token window,
then a two-stage convolutional network whose penultimate fully connected
activations are the sentence feature vector.

Stage one runs parallel kernel widths over the word-vector sequence and
concatenates their maps; stage two convolves the merged maps. Branch outputs
are cropped to the largest common length divisible by the pool window so the
whole chain shape-checks (at the reference scale: 50 tokens, widths 3 and 4,
46 -> 23 -> 22 -> 11 -> 500).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .layers import (
    ConvLayer,
    ConvSpec,
    DenseLayer,
    MaxPoolLayer,
    MultiConvLayer,
    ReluLayer,
    SoftmaxLayer,
)
from .network import Network, TrainConfig, train_softmax
from .tensor import Tensor

PAD_TOKEN = "<pad>"


def tokenize(text: str) -> list[str]:
    """Whitespace split, lowercased."""
    return text.lower().split()


class EmbeddingTable:
    """Word -> fixed-length vector lookup with deterministic out-of-vocabulary
    fallback.

    Unknown words get a vector derived from (word, oov_seed) via a hash, so
    the same word maps to the same vector in every process and fold. The pad
    token embeds to zeros.
    """

    def __init__(self, dim: int, entries: dict[str, np.ndarray] | None = None, oov_seed: int = 0):
        if dim < 1:
            raise ConfigError(f"embedding dim must be positive, got {dim}")
        self.dim = int(dim)
        self.oov_seed = int(oov_seed)
        self.entries: dict[str, np.ndarray] = {}
        self._oov_cache: dict[str, np.ndarray] = {}
        if entries:
            for word, vec in entries.items():
                self.add(word, vec)

    def add(self, word: str, vec) -> None:
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if arr.size != self.dim:
            raise DataError(f"vector for {word!r} has length {arr.size}, table dim is {self.dim}")
        self.entries[word] = arr

    def _oov_vector(self, word: str) -> np.ndarray:
        cached = self._oov_cache.get(word)
        if cached is None:
            digest = hashlib.sha256(f"{self.oov_seed}\x00{word}".encode()).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
            cached = rng.uniform(-0.25, 0.25, size=self.dim)
            self._oov_cache[word] = cached
        return cached

    def lookup(self, word: str) -> np.ndarray:
        if word == PAD_TOKEN:
            return np.zeros(self.dim)
        vec = self.entries.get(word)
        return vec if vec is not None else self._oov_vector(word)

    @classmethod
    def load(cls, path, oov_seed: int = 0) -> "EmbeddingTable":
        """Read a plain text table: one line per word, ``word v1 v2 ... vd``."""
        entries: dict[str, np.ndarray] = {}
        dim = None
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                    if dim == 0:
                        raise DataError(f"{path}:{lineno}: no vector components")
                elif len(values) != dim:
                    raise DataError(
                        f"{path}:{lineno}: expected {dim} components, got {len(values)}"
                    )
                entries[word] = np.array([float(v) for v in values])
        if dim is None:
            raise DataError(f"{path}: empty embedding file")
        return cls(dim, entries, oov_seed=oov_seed)

    def save(self, path) -> None:
        with open(path, "w") as f:
            for word in sorted(self.entries):
                comps = " ".join(repr(float(v)) for v in self.entries[word])
                f.write(f"{word} {comps}\n")

    @classmethod
    def random(cls, words: Sequence[str], dim: int, seed: int) -> "EmbeddingTable":
        """Desk-scale stand-in for a pretrained table."""
        rng = np.random.Generator(np.random.PCG64(seed))
        table = cls(dim, oov_seed=seed)
        for word in words:
            table.add(word, rng.uniform(-0.25, 0.25, size=dim))
        return table


@dataclass
class SentenceWindow:
    """Fixed-width token slot layout: truncate long sentences, pad short ones."""

    width: int = 50
    pad_token: str = PAD_TOKEN

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError(f"window width must be positive, got {self.width}")

    def apply(self, tokens: Sequence[str]) -> list[str]:
        fitted = list(tokens[: self.width])
        fitted.extend([self.pad_token] * (self.width - len(fitted)))
        return fitted


def embed_sentence(tokens: Sequence[str], table: EmbeddingTable,
                   window: SentenceWindow) -> Tensor:
    """Token list -> [window.width, table.dim] matrix, row i = embedding of
    slot i. Out-of-vocabulary words and padding are handled, never errors."""
    rows = [table.lookup(tok) for tok in window.apply(tokens)]
    return Tensor(np.stack(rows))


@dataclass
class TextCnnConfig:
    """Geometry of the sentence feature network.

    Reference scale: 50-token window, first-stage kernel widths 3 and 4 with
    50 maps each, second-stage width 2 with 100 maps, pool window 2, and a
    500-wide fully connected feature layer.
    """

    window: int = 50
    conv1_kernel_sizes: tuple[int, ...] = (3, 4)
    conv1_maps: int = 50
    conv2_kernel: int = 2
    conv2_maps: int = 100
    pool_window: int = 2
    feature_width: int = 500

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.conv1_kernel_sizes)
        if not sizes or any(k < 1 for k in sizes):
            raise ConfigError(f"conv1 kernel sizes must be positive, got {sizes}")
        self.conv1_kernel_sizes = sizes
        for name in ("window", "conv1_maps", "conv2_kernel", "conv2_maps",
                     "pool_window", "feature_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def desk(cls) -> "TextCnnConfig":
        return cls(window=12, conv1_kernel_sizes=(2, 3), conv1_maps=6,
                   conv2_kernel=2, conv2_maps=8, pool_window=2, feature_width=16)


def build_text_network(cfg: TextCnnConfig, embedding_dim: int, n_classes: int,
                       seed: int) -> Network:
    """Assemble and shape-check the sentence network.

    Input is the embedded window transposed to [dim, window]. The feature
    vector is read from the ReLU after the wide dense layer (third layer from
    the end); the classifier head on top exists for training and diagnostics.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    branch_specs = [
        ConvSpec(rank=1, kernel_dims=(k,), in_channels=embedding_dim,
                 out_channels=cfg.conv1_maps)
        for k in cfg.conv1_kernel_sizes
    ]
    merged_channels = cfg.conv1_maps * len(cfg.conv1_kernel_sizes)
    conv2 = ConvLayer(ConvSpec(rank=1, kernel_dims=(cfg.conv2_kernel,),
                               in_channels=merged_channels, out_channels=cfg.conv2_maps))
    layers: list = [
        MultiConvLayer(branch_specs, align=cfg.pool_window),
        ReluLayer(),
        MaxPoolLayer(cfg.pool_window),
        conv2,
        ReluLayer(),
        MaxPoolLayer(cfg.pool_window),
    ]
    dims: tuple[int, ...] = (embedding_dim, cfg.window)
    for layer in layers:
        dims = layer.out_dims(dims)
    flat = int(np.prod(dims))
    layers.extend([
        DenseLayer(flat, cfg.feature_width),
        ReluLayer(),
        DenseLayer(cfg.feature_width, n_classes),
        SoftmaxLayer(),
    ])
    return Network(layers, (embedding_dim, cfg.window), seed)


FEATURE_LAYER_OFFSET = 3  # relu after the feature dense, counted from the end


class TextModel:
    """Trained sentence feature extractor: network + embedding table + window."""

    def __init__(self, net: Network, table: EmbeddingTable, cfg: TextCnnConfig,
                 class_names: Sequence[str] | None = None,
                 loss_trace: Sequence[float] | None = None):
        self.net = net
        self.table = table
        self.cfg = cfg
        self.window = SentenceWindow(cfg.window)
        self.class_names = list(class_names) if class_names else None
        self.loss_trace = list(loss_trace) if loss_trace else []
        feat_dims = net.layer_dims[len(net.layers) - FEATURE_LAYER_OFFSET]
        if net.input_dims != (table.dim, cfg.window) or feat_dims != (cfg.feature_width,):
            raise ConfigError(
                f"network (input {net.input_dims}, feature {feat_dims}) does not match "
                f"config (dim {table.dim}, window {cfg.window}, feature {cfg.feature_width})"
            )

    def _input(self, tokens: Sequence[str]) -> Tensor:
        return Tensor(embed_sentence(tokens, self.table, self.window).data.T)

    def features(self, tokens: Sequence[str]) -> np.ndarray:
        _, activations = self.net.forward_full(self._input(tokens))
        return activations[len(self.net.layers) - FEATURE_LAYER_OFFSET].copy()

    def predict(self, tokens: Sequence[str]) -> int:
        out, _ = self.net.forward_full(self._input(tokens))
        return int(np.argmax(out.data))


def extract_text_features(sentence: Sequence[str], model: TextModel) -> np.ndarray:
    """Penultimate-layer activations for one sentence; length is the
    configured feature width regardless of sentence length."""
    return model.features(sentence)


def train_text_model(
    corpus: Sequence[tuple[Sequence[str], int]],
    table: EmbeddingTable,
    cfg: TextCnnConfig,
    tcfg: TrainConfig,
    class_names: Sequence[str] | None = None,
) -> TextModel:
    """Fit the sentence network on (tokens, label) pairs with softmax
    cross-entropy; features are then read from the penultimate layer."""
    if not corpus:
        raise DataError("empty training corpus")
    labels = sorted({label for _, label in corpus})
    if len(labels) < 2:
        raise DataError(f"corpus has a single class {labels}, need at least 2")
    n_classes = max(labels) + 1
    net = build_text_network(cfg, table.dim, n_classes, seed=tcfg.seed)
    window = SentenceWindow(cfg.window)
    inputs = [Tensor(embed_sentence(toks, table, window).data.T) for toks, _ in corpus]
    targets = [label for _, label in corpus]
    net, trace = train_softmax(net, inputs, targets, tcfg)
    return TextModel(net, table, cfg, class_names=class_names, loss_trace=trace)
