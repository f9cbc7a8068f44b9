"""Experiment execution: per-fold extractor and classifier training over
modality subsets, in-corpus and cross-corpus evaluation, and an audit log
proving that nothing from a test fold influenced training.

Extractor training, SVM training, and hyperparameter tuning see train-fold
utterances only; audio descriptor statistics are per-utterance pure and are
cached across folds. Every phase records the utterance ids it consumed, and
the run fails with InvariantError if a training phase ever touched a test
id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import FunctionalCatalog, extract_audio_features
from .datasets import (
    DatasetManifest,
    LabeledUtterance,
    SplitPlan,
    make_splits,
    make_tuning_split,
    map_labels,
    utterance_audio,
    utterance_frames,
    utterance_tokens,
)
from .errors import ConfigError, DataError, InvariantError
from .fusion import FeatureRecord, fuse, predict, train_svm
from .metrics import MetricsReport, compute_metrics
from .network import TrainConfig
from .text import EmbeddingTable, TextCnnConfig, train_text_model
from .visual import VisualCnnConfig, preprocess_sequence, train_visual_model

ALL_SUBSETS: tuple[tuple[str, ...], ...] = (
    ("T",), ("A",), ("V",), ("T", "A"), ("T", "V"), ("A", "V"), ("T", "A", "V"),
)


def subset_key(subset: Sequence[str]) -> str:
    return "+".join(subset)


@dataclass
class TrainParams:
    """Extractor SGD settings; per-fold seeds are derived by the runner."""

    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 4


@dataclass
class ExperimentConfig:
    seed: int = 0
    split_mode: str = "grouped_speaker_kfold"
    k: int = 3
    subsets: tuple[tuple[str, ...], ...] = ALL_SUBSETS
    embedding_dim: int = 10
    embedding_path: str | None = None
    text: TextCnnConfig = field(default_factory=TextCnnConfig.desk)
    text_train: TrainParams = field(default_factory=lambda: TrainParams(0.2, 20, 4))
    visual: VisualCnnConfig = field(default_factory=VisualCnnConfig.desk)
    visual_train: TrainParams = field(default_factory=lambda: TrainParams(0.05, 8, 4))
    catalog: FunctionalCatalog = field(default_factory=FunctionalCatalog)
    svm_c: float = 1.0
    svm_epochs: int = 60
    svm_c_grid: tuple[float, ...] = ()
    tuning_fraction: float = 0.8

    def __post_init__(self):
        self.subsets = tuple(tuple(s) for s in self.subsets)
        if not self.subsets:
            raise ConfigError("at least one modality subset required")
        for s in self.subsets:
            if not s or any(m not in ("T", "A", "V") for m in s):
                raise ConfigError(f"bad modality subset {s}")

    def needed_modalities(self) -> set[str]:
        return {m for s in self.subsets for m in s}

    def load_embedding_table(self) -> EmbeddingTable:
        if self.embedding_path is not None:
            return EmbeddingTable.load(self.embedding_path, oov_seed=self.seed)
        return EmbeddingTable(self.embedding_dim, oov_seed=self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "split_mode": self.split_mode,
            "k": self.k,
            "subsets": [list(s) for s in self.subsets],
            "embedding_dim": self.embedding_dim,
            "embedding_path": self.embedding_path,
            "text": vars(self.text) | {"conv1_kernel_sizes": list(self.text.conv1_kernel_sizes)},
            "text_train": vars(self.text_train),
            "visual": vars(self.visual) | {
                "canvas": list(self.visual.canvas),
                "conv1_kernel": list(self.visual.conv1_kernel),
                "conv2_kernel": list(self.visual.conv2_kernel),
                "pool": list(self.visual.pool),
            },
            "visual_train": vars(self.visual_train),
            "catalog": {
                "llds": list(self.catalog.llds),
                "functionals": list(self.catalog.functionals),
                "version": self.catalog.version,
            },
            "svm_c": self.svm_c,
            "svm_epochs": self.svm_epochs,
            "svm_c_grid": list(self.svm_c_grid),
            "tuning_fraction": self.tuning_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        if "subsets" in kwargs:
            kwargs["subsets"] = tuple(tuple(s) for s in kwargs["subsets"])
        if "text" in kwargs:
            t = dict(kwargs["text"])
            if "conv1_kernel_sizes" in t:
                t["conv1_kernel_sizes"] = tuple(t["conv1_kernel_sizes"])
            kwargs["text"] = TextCnnConfig(**t)
        if "text_train" in kwargs:
            kwargs["text_train"] = TrainParams(**kwargs["text_train"])
        if "visual" in kwargs:
            v = dict(kwargs["visual"])
            for key in ("canvas", "conv1_kernel", "conv2_kernel", "pool"):
                if key in v:
                    v[key] = tuple(v[key])
            kwargs["visual"] = VisualCnnConfig(**v)
        if "visual_train" in kwargs:
            kwargs["visual_train"] = TrainParams(**kwargs["visual_train"])
        if "catalog" in kwargs:
            c = dict(kwargs["catalog"])
            for key in ("llds", "functionals"):
                if key in c:
                    c[key] = tuple(c[key])
            kwargs["catalog"] = FunctionalCatalog(**c)
        if "svm_c_grid" in kwargs:
            kwargs["svm_c_grid"] = tuple(kwargs["svm_c_grid"])
        unknown = set(kwargs) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown experiment config fields {sorted(unknown)}")
        return cls(**kwargs)


class AuditLog:
    """Append-only record of which utterance ids each phase consumed."""

    def __init__(self):
        self.entries: list[dict] = []

    def record(self, phase: str, fold: int, utterance_ids: Sequence[str],
               subset: str | None = None) -> None:
        entry = {"phase": phase, "fold": fold, "utterance_ids": sorted(utterance_ids)}
        if subset is not None:
            entry["subset"] = subset
        self.entries.append(entry)

    def training_ids(self, fold: int) -> set[str]:
        out: set[str] = set()
        for e in self.entries:
            if e["fold"] == fold and e["phase"].startswith("train"):
                out.update(e["utterance_ids"])
        return out

    def assert_no_leakage(self, plan: SplitPlan) -> None:
        for fold, (_, test_ids) in enumerate(plan.folds):
            leaked = self.training_ids(fold) & set(test_ids)
            if leaked:
                raise InvariantError(
                    f"fold {fold}: training consumed test ids {sorted(leaked)[:5]}"
                )

    def save(self, path) -> None:
        with open(path, "w") as f:
            for e in self.entries:
                f.write(json.dumps(e) + "\n")


def _derive_seed(base: int, fold: int, phase: int) -> int:
    return base + 1009 * (fold + 1) + phase


@dataclass
class _FoldModels:
    text_model: object | None = None
    visual_model: object | None = None


def _train_fold_extractors(
    train_lab: list[LabeledUtterance],
    root: Path,
    cfg: ExperimentConfig,
    table: EmbeddingTable,
    fold: int,
    needed: set[str],
) -> _FoldModels:
    models = _FoldModels()
    if "T" in needed:
        corpus = [
            (utterance_tokens(lu.utterance, root), lu.label)
            for lu in train_lab if lu.utterance.text_vector is None
        ]
        if corpus:
            tp = cfg.text_train
            models.text_model = train_text_model(
                corpus, table, cfg.text,
                TrainConfig(tp.learning_rate, tp.epochs, tp.batch_size,
                            seed=_derive_seed(cfg.seed, fold, 1)),
            )
    if "V" in needed:
        utts = [
            (preprocess_sequence(utterance_frames(lu.utterance, root), cfg.visual), lu.label)
            for lu in train_lab if lu.utterance.visual_vector is None
        ]
        if utts:
            vp = cfg.visual_train
            models.visual_model = train_visual_model(
                utts, cfg.visual,
                TrainConfig(vp.learning_rate, vp.epochs, vp.batch_size,
                            seed=_derive_seed(cfg.seed, fold, 2)),
            )
    return models


def _features_for(
    lu: LabeledUtterance,
    root: Path,
    models: _FoldModels,
    cfg: ExperimentConfig,
    needed: set[str],
    audio_cache: dict[str, np.ndarray],
) -> FeatureRecord:
    u = lu.utterance
    feats: dict[str, np.ndarray] = {}
    if "T" in needed:
        if u.text_vector is not None:
            feats["T"] = u.text_vector
        elif models.text_model is not None:
            feats["T"] = models.text_model.features(utterance_tokens(u, root))
        else:
            raise DataError(f"{u.utterance_id}: no text features available")
    if "A" in needed:
        if u.audio_vector is not None:
            feats["A"] = u.audio_vector
        else:
            cached = audio_cache.get(u.utterance_id)
            if cached is None:
                cached = extract_audio_features(utterance_audio(u, root), cfg.catalog)
                audio_cache[u.utterance_id] = cached
            feats["A"] = cached
    if "V" in needed:
        if u.visual_vector is not None:
            feats["V"] = u.visual_vector
        elif models.visual_model is not None:
            from .visual import extract_visual_features

            pairs = preprocess_sequence(utterance_frames(u, root), cfg.visual)
            feats["V"] = extract_visual_features(pairs, models.visual_model)
        else:
            raise DataError(f"{u.utterance_id}: no visual features available")
    return FeatureRecord(u.utterance_id, u.speaker_id, lu.label, feats)


def _fit_svm_with_tuning(
    train_records: list[FeatureRecord],
    subset: tuple[str, ...],
    cfg: ExperimentConfig,
    fold: int,
    audit: AuditLog,
):
    svm_seed = _derive_seed(cfg.seed, fold, 3)
    c_value = cfg.svm_c
    if len(cfg.svm_c_grid) > 1:
        tune_train, tune_val = make_tuning_split(
            train_records, cfg.tuning_fraction, seed=_derive_seed(cfg.seed, fold, 4)
        )
        audit.record("train_tune", fold, [r.utterance_id for r in tune_train],
                     subset=subset_key(subset))
        best = None
        for c in cfg.svm_c_grid:
            candidate = train_svm(tune_train, subset, c=c, seed=svm_seed,
                                  epochs=cfg.svm_epochs)
            preds = [predict(candidate, fuse(r, subset))[0] for r in tune_val]
            score = compute_metrics([r.label for r in tune_val], preds,
                                    n_classes=candidate.n_classes).macro_f
            if best is None or score > best[0]:
                best = (score, c)
        c_value = best[1]
    model = train_svm(train_records, subset, c=c_value, seed=svm_seed,
                      epochs=cfg.svm_epochs)
    return model


@dataclass
class ExperimentResult:
    """Metric grid from one run: cells keyed by (subset, fold)."""

    dataset: str
    class_names: tuple[str, ...]
    subsets: tuple[tuple[str, ...], ...]
    plan: SplitPlan
    cells: dict[tuple[str, int], MetricsReport]
    predictions: list[dict] = field(default_factory=list)

    def fold_scores(self, subset: Sequence[str]) -> list[float]:
        key = subset_key(subset)
        return [rep.macro_f for (k, _), rep in sorted(self.cells.items()) if k == key]

    def mean_macro_f(self, subset: Sequence[str]) -> float:
        return float(np.mean(self.fold_scores(subset)))

    def summary(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for subset in self.subsets:
            key = subset_key(subset)
            reps = [rep for (k, _), rep in sorted(self.cells.items()) if k == key]
            out[key] = {
                "macro_f": float(np.mean([r.macro_f for r in reps])),
                "rmse": float(np.mean([r.rmse for r in reps])),
                "folds": len(reps),
            }
        return out


def run_experiment(
    manifest: DatasetManifest,
    cfg: ExperimentConfig,
    audit: AuditLog | None = None,
) -> ExperimentResult:
    """Full in-corpus protocol: label mapping, fold construction, per-fold
    extractor and SVM training on the train side only, evaluation on the
    test side, one metrics cell per (modality subset, fold)."""
    audit = audit if audit is not None else AuditLog()
    labeled = map_labels(manifest)
    if not labeled:
        raise DataError(f"{manifest.name}: no utterances survive label mapping")
    needed = cfg.needed_modalities()
    missing = [
        lu.utterance_id for lu in labeled
        if any(not lu.utterance.has_modality(m) for m in needed)
    ]
    if missing:
        raise DataError(f"missing modality payloads for {missing[:5]}")

    plan = make_splits(labeled, cfg.split_mode, cfg.k, cfg.seed)
    table = cfg.load_embedding_table() if "T" in needed else None
    by_id = {lu.utterance_id: lu for lu in labeled}
    n_classes = len(manifest.class_names)
    audio_cache: dict[str, np.ndarray] = {}
    cells: dict[tuple[str, int], MetricsReport] = {}
    predictions: list[dict] = []

    for fold, (train_ids, test_ids) in enumerate(plan.folds):
        train_lab = [by_id[i] for i in train_ids]
        test_lab = [by_id[i] for i in test_ids]
        audit.record("train_extractors", fold, train_ids)
        models = _train_fold_extractors(train_lab, manifest.root, cfg, table, fold, needed)
        train_records = [
            _features_for(lu, manifest.root, models, cfg, needed, audio_cache)
            for lu in train_lab
        ]
        test_records = [
            _features_for(lu, manifest.root, models, cfg, needed, audio_cache)
            for lu in test_lab
        ]
        for subset in cfg.subsets:
            audit.record("train_svm", fold, train_ids, subset=subset_key(subset))
            model = _fit_svm_with_tuning(train_records, subset, cfg, fold, audit)
            audit.record("test", fold, test_ids, subset=subset_key(subset))
            preds, decs = [], []
            for r in test_records:
                cls, scores = predict(model, fuse(r, subset))
                preds.append(cls)
                decs.append(scores)
                predictions.append({
                    "dataset": manifest.name, "subset": subset_key(subset),
                    "fold": fold, "utterance_id": r.utterance_id,
                    "true": r.label, "predicted": cls,
                    "decisions": [float(v) for v in scores],
                })
            cells[(subset_key(subset), fold)] = compute_metrics(
                [r.label for r in test_records], preds, np.stack(decs), n_classes
            )

    audit.assert_no_leakage(plan)
    return ExperimentResult(
        dataset=manifest.name,
        class_names=manifest.class_names,
        subsets=cfg.subsets,
        plan=plan,
        cells=cells,
        predictions=predictions,
    )


def cross_dataset_run(
    train_manifest: DatasetManifest,
    test_manifest: DatasetManifest,
    cfg: ExperimentConfig,
    audit: AuditLog | None = None,
) -> ExperimentResult:
    """Transfer protocol: extractors and SVM fit on every labeled utterance
    of the source corpus, evaluated on the whole target corpus. Nothing
    from the target influences training."""
    audit = audit if audit is not None else AuditLog()
    if train_manifest.label_scheme != test_manifest.label_scheme:
        raise DataError(
            f"label schemes differ: {train_manifest.label_scheme} vs "
            f"{test_manifest.label_scheme}"
        )
    train_lab = map_labels(train_manifest)
    test_lab = map_labels(test_manifest)
    if not train_lab or not test_lab:
        raise DataError("a corpus has no utterances after label mapping")
    needed = cfg.needed_modalities()
    table = cfg.load_embedding_table() if "T" in needed else None
    n_classes = len(train_manifest.class_names)
    audio_cache: dict[str, np.ndarray] = {}

    train_ids = tuple(lu.utterance_id for lu in train_lab)
    test_ids = tuple(lu.utterance_id for lu in test_lab)
    audit.record("train_extractors", 0, train_ids)
    models = _train_fold_extractors(train_lab, train_manifest.root, cfg, table, 0, needed)
    train_records = [
        _features_for(lu, train_manifest.root, models, cfg, needed, audio_cache)
        for lu in train_lab
    ]
    test_records = [
        _features_for(lu, test_manifest.root, models, cfg, needed, audio_cache)
        for lu in test_lab
    ]
    for subset in cfg.subsets:
        dims_train = {sum(r.features[m].size for m in subset) for r in train_records}
        dims_test = {sum(r.features[m].size for m in subset) for r in test_records}
        if dims_train != dims_test:
            raise DataError(
                f"fused dims differ across corpora for {subset_key(subset)}: "
                f"{sorted(dims_train)} vs {sorted(dims_test)}; extract both corpora "
                "with a shared embedding table, descriptor catalog, and visual config"
            )

    cells: dict[tuple[str, int], MetricsReport] = {}
    predictions: list[dict] = []
    for subset in cfg.subsets:
        audit.record("train_svm", 0, train_ids, subset=subset_key(subset))
        model = _fit_svm_with_tuning(train_records, subset, cfg, 0, audit)
        audit.record("test", 0, test_ids, subset=subset_key(subset))
        preds, decs = [], []
        for r in test_records:
            cls, scores = predict(model, fuse(r, subset))
            preds.append(cls)
            decs.append(scores)
            predictions.append({
                "dataset": test_manifest.name, "subset": subset_key(subset),
                "fold": 0, "utterance_id": r.utterance_id,
                "true": r.label, "predicted": cls,
                "decisions": [float(v) for v in scores],
            })
        cells[(subset_key(subset), 0)] = compute_metrics(
            [r.label for r in test_records], preds, np.stack(decs), n_classes
        )

    plan = SplitPlan(mode="cross_dataset", folds=[(train_ids, test_ids)], seed=cfg.seed)
    # training may consume only source-corpus ids (A = B degenerate transfer
    # is legitimate and equals training-set evaluation)
    outside = audit.training_ids(0) - set(train_ids)
    if outside:
        raise InvariantError(
            f"cross-dataset training consumed non-source ids {sorted(outside)[:5]}"
        )
    return ExperimentResult(
        dataset=f"{train_manifest.name}->{test_manifest.name}",
        class_names=train_manifest.class_names,
        subsets=cfg.subsets,
        plan=plan,
        cells=cells,
        predictions=predictions,
    )


def extract_all_features(
    manifest: DatasetManifest,
    cfg: ExperimentConfig,
    subset: Sequence[str] | None = None,
) -> list[FeatureRecord]:
    """Train extractors on the whole labeled corpus and emit one feature
    record per utterance. This is the projection/inspection path, not the
    evaluation protocol; folds are the leak-safe route to metrics."""
    labeled = map_labels(manifest)
    if not labeled:
        raise DataError(f"{manifest.name}: no utterances survive label mapping")
    needed = set(subset) if subset else cfg.needed_modalities()
    table = cfg.load_embedding_table() if "T" in needed else None
    models = _train_fold_extractors(labeled, manifest.root, cfg, table, 0, needed)
    cache: dict[str, np.ndarray] = {}
    return [
        _features_for(lu, manifest.root, models, cfg, needed, cache) for lu in labeled
    ]
