"""Feature-level fusion and the linear SVM on top of it.

Fusion is raw concatenation of the per-modality vectors in the fixed order
T, A, V; no scaling or normalization is applied, and the layout table makes
the concatenation losslessly invertible. The SVM is trained in the primal
by stochastic subgradient descent on L2-regularized hinge loss with the
1/(lambda * t) step schedule; multiclass uses one-vs-rest heads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

MODALITY_ORDER = ("T", "A", "V")

SVM_FORMAT = "trimodal-svm"
SVM_VERSION = 1


@dataclass
class FeatureRecord:
    """One utterance: ids, class index, and per-modality feature vectors."""

    utterance_id: str
    speaker_id: str
    label: int
    features: dict[str, np.ndarray]

    def __post_init__(self):
        self.features = {
            m: np.asarray(v, dtype=np.float64).reshape(-1)
            for m, v in self.features.items()
        }
        unknown = set(self.features) - set(MODALITY_ORDER)
        if unknown:
            raise DataError(
                f"{self.utterance_id}: unknown modalities {sorted(unknown)}; "
                f"expected subset of {MODALITY_ORDER}"
            )


@dataclass
class FusedVector:
    """Concatenated features plus the (modality, offset, length) layout."""

    values: np.ndarray
    layout: list[tuple[str, int, int]]

    def slice(self, modality: str) -> np.ndarray:
        for m, off, length in self.layout:
            if m == modality:
                return self.values[off : off + length]
        raise DataError(f"modality {modality!r} not in layout {self.layout}")


def fuse(record: FeatureRecord, modalities: Sequence[str]) -> FusedVector:
    """Concatenate the requested modalities in canonical T, A, V order.

    Values are passed through bit-identical; requesting a modality the
    record lacks is an error naming it.
    """
    requested = set(modalities)
    unknown = requested - set(MODALITY_ORDER)
    if unknown or not requested:
        raise ConfigError(f"modalities must be a nonempty subset of {MODALITY_ORDER}")
    ordered = [m for m in MODALITY_ORDER if m in requested]
    parts = []
    layout = []
    offset = 0
    for m in ordered:
        if m not in record.features:
            raise DataError(f"{record.utterance_id}: missing modality {m!r}")
        vec = record.features[m]
        parts.append(vec)
        layout.append((m, offset, vec.size))
        offset += vec.size
    return FusedVector(np.concatenate(parts), layout)


@dataclass
class SvmModel:
    """Linear decision heads: one per class in one-vs-rest mode, a single
    positive-class head for binary problems."""

    weights: np.ndarray  # [n_heads, dim]
    bias: np.ndarray  # [n_heads]
    n_classes: int
    c: float
    seed: int
    layout: list[tuple[str, int, int]] = field(default_factory=list)

    @property
    def binary(self) -> bool:
        return self.weights.shape[0] == 1

    def to_dict(self) -> dict:
        return {
            "format": SVM_FORMAT,
            "version": SVM_VERSION,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "n_classes": self.n_classes,
            "c": self.c,
            "seed": self.seed,
            "layout": [[m, o, l] for m, o, l in self.layout],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("format") != SVM_FORMAT or d.get("version") != SVM_VERSION:
            raise ConfigError(f"unsupported svm container {d.get('format')!r}")
        return cls(
            weights=np.array(d["weights"]),
            bias=np.array(d["bias"]),
            n_classes=d["n_classes"],
            c=d["c"],
            seed=d["seed"],
            layout=[(m, o, l) for m, o, l in d["layout"]],
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "SvmModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _train_head(
    x: np.ndarray, y: np.ndarray, lam: float, epochs: int, seed: int
) -> tuple[np.ndarray, float]:
    """One hinge-loss head via per-example subgradient steps, eta = 1/(lam t),
    with projection onto the 1/sqrt(lam) ball after each step. The bias is
    carried as an augmented constant feature inside the regularized vector.
    y in {-1, +1}."""
    n, dim = x.shape
    w = np.zeros(dim + 1)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.Generator(np.random.PCG64(seed))
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (np.dot(w[:dim], x[i]) + w[dim])
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w[:dim] += eta * y[i] * x[i]
                w[dim] += eta * y[i]
            norm = np.sqrt(np.dot(w, w))
            if norm > radius:
                w *= radius / norm
    return w[:dim].copy(), float(w[dim])


def hinge_objective(model: SvmModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Full-dataset regularized hinge loss, summed over heads. The bias is
    part of the regularized vector, matching the training convention."""
    lam = 1.0 / (model.c * x.shape[0])
    total = 0.0
    for head in range(model.weights.shape[0]):
        if model.binary:
            y = np.where(labels == 1, 1.0, -1.0)
        else:
            y = np.where(labels == head, 1.0, -1.0)
        margins = y * (x @ model.weights[head] + model.bias[head])
        total += 0.5 * lam * (
            float(np.dot(model.weights[head], model.weights[head]))
            + model.bias[head] ** 2
        )
        total += float(np.mean(np.maximum(0.0, 1.0 - margins)))
    return total


def train_svm(
    records: Sequence[FeatureRecord],
    modalities: Sequence[str],
    c: float = 1.0,
    seed: int = 0,
    epochs: int = 100,
    one_vs_rest: bool | None = None,
) -> SvmModel:
    """Fit the linear classifier on fused features.

    Binary problems get a single head for class 1; more classes get one
    one-vs-rest head each (``one_vs_rest=True`` forces per-class heads even
    for 2 classes, which predicts identically to the single head). Identical
    seed, data, and config give identical weights.
    """
    if c <= 0:
        raise ConfigError(f"C must be positive, got {c}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if not records:
        raise DataError("no training records")
    fused = [fuse(r, modalities) for r in records]
    dims = {f.values.size for f in fused}
    if len(dims) != 1:
        raise DataError(f"inconsistent fused dimensions {sorted(dims)}")
    labels = np.array([r.label for r in records])
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise DataError(f"single class {classes} in training data")
    n_classes = max(classes) + 1
    x = np.stack([f.values for f in fused])
    lam = 1.0 / (c * x.shape[0])
    if one_vs_rest is None:
        one_vs_rest = n_classes > 2

    if not one_vs_rest:
        if n_classes != 2:
            raise ConfigError(f"single-head training needs 2 classes, got {n_classes}")
        y = np.where(labels == 1, 1.0, -1.0)
        w, b = _train_head(x, y, lam, epochs, seed)
        weights = w[None, :]
        bias = np.array([b])
    else:
        heads = []
        biases = []
        for cls_idx in range(n_classes):
            y = np.where(labels == cls_idx, 1.0, -1.0)
            w, b = _train_head(x, y, lam, epochs, seed)
            heads.append(w)
            biases.append(b)
        weights = np.stack(heads)
        bias = np.array(biases)
    return SvmModel(weights=weights, bias=bias, n_classes=n_classes,
                    c=c, seed=seed, layout=fused[0].layout)


def decision_values(model: SvmModel, fused: FusedVector) -> np.ndarray:
    """Per-class decision scores; binary models report [-d, +d] so argmax
    and tie handling match the sign rule."""
    x = fused.values
    if x.size != model.weights.shape[1]:
        raise DataError(
            f"fused length {x.size} != model dimension {model.weights.shape[1]}"
        )
    raw = model.weights @ x + model.bias
    if model.binary:
        return np.array([-raw[0], raw[0]])
    return raw


def predict(model: SvmModel, fused: FusedVector) -> tuple[int, np.ndarray]:
    """Class index plus per-class decision values; ties break toward the
    lower class index."""
    scores = decision_values(model, fused)
    return int(np.argmax(scores)), scores
