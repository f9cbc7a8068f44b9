"""Command-line entry point.

Subcommands: synth (generate a synthetic corpus), extract (dump per-
utterance features), train (fit extractors and classifiers on a whole
corpus), eval (full fold protocol with reports), cross (train on one
corpus, test on another), viz (2-D projection and charts from eval
artifacts).

Every run takes a JSON config (--config) plus dotted-path overrides
(--set a.b.c=value) and writes a run_record.json capturing the fully
resolved config; re-running a subcommand with its run record as the config
regenerates every artifact byte-identically.

Exit codes: 0 success, 1 invalid config, 2 data problem, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .charts import bars_svg, emit_chart, scatter_svg
from .datasets import SynthSpec, gen_synthetic, load_manifest, map_labels
from .errors import ConfigError, DataError, InvariantError, TrimodalError
from .experiments import (
    AuditLog,
    ExperimentConfig,
    ExperimentResult,
    cross_dataset_run,
    extract_all_features,
    run_experiment,
    subset_key,
)
from .fusion import train_svm
from .tsne import tsne_2d

FEATURES_FORMAT = "trimodal-features"
FEATURES_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form path=value")
    path, raw = text.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def _apply_override(config: dict, keys: list[str], value: object) -> None:
    node = config
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    node[keys[-1]] = value


def load_config(path: str, overrides: list[str], command: str) -> dict:
    try:
        with open(path) as f:
            config = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if "run_record" in config:  # replaying a previous run
        record = config
        if record["run_record"].get("command") != command:
            raise ConfigError(
                f"run record was for {record['run_record'].get('command')!r}, "
                f"not {command!r}"
            )
        config = record["config"]
    for text in overrides:
        keys, value = _parse_override(text)
        _apply_override(config, keys, value)
    return config


def write_run_record(out_dir: Path, command: str, config: dict) -> None:
    record = {"run_record": {"command": command, "tool": "trimodal"}, "config": config}
    with open(out_dir / "run_record.json", "w") as f:
        json.dump(record, f, indent=1, sort_keys=True)
        f.write("\n")


def _require(config: dict, key: str) -> object:
    if key not in config:
        raise ConfigError(f"config is missing required field {key!r}")
    return config[key]


def _out_dir(config: dict) -> Path:
    out = Path(str(_require(config, "out_dir")))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment_config(config: dict) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(config.get("experiment", {}))
    if cfg.embedding_path is not None and not Path(cfg.embedding_path).exists():
        raise ConfigError(f"embedding file does not exist: {cfg.embedding_path}")
    return cfg


def _load_manifest_arg(config: dict, key: str):
    path = Path(str(_require(config, key)))
    if not path.exists():
        raise ConfigError(f"{key} does not exist: {path}")
    return load_manifest(path)


def _write_features(path: Path, dataset: str, class_names, records) -> None:
    doc = {
        "format": FEATURES_FORMAT,
        "version": FEATURES_VERSION,
        "dataset": dataset,
        "class_names": list(class_names),
        "records": [
            {
                "utterance_id": r.utterance_id,
                "speaker_id": r.speaker_id,
                "label": r.label,
                "features": {m: v.tolist() for m, v in sorted(r.features.items())},
            }
            for r in records
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def _write_reports(out_dir: Path, result: ExperimentResult) -> None:
    with open(out_dir / "report_cells.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dataset", "subset", "fold", "n", "macro_f", "rmse",
                    "tp_rate", "confusion"])
        for (subset, fold), rep in sorted(result.cells.items()):
            w.writerow([
                result.dataset, subset, fold, rep.n, repr(rep.macro_f),
                repr(rep.rmse) if rep.rmse is not None else "",
                ";".join(repr(v) for v in rep.tp_rate.tolist()),
                ";".join(",".join(str(c) for c in row) for row in rep.confusion.tolist()),
            ])
    with open(out_dir / "report_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dataset", "subset", "folds", "macro_f", "rmse"])
        for subset, stats in result.summary().items():
            w.writerow([result.dataset, subset, stats["folds"],
                        repr(stats["macro_f"]), repr(stats["rmse"])])
    with open(out_dir / "predictions.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dataset", "subset", "fold", "utterance_id", "true",
                    "predicted", "decisions"])
        for p in result.predictions:
            w.writerow([p["dataset"], p["subset"], p["fold"], p["utterance_id"],
                        p["true"], p["predicted"],
                        ";".join(repr(v) for v in p["decisions"])])


def cmd_synth(config: dict) -> None:
    out_dir = _out_dir(config)
    spec = SynthSpec.from_dict(dict(_require(config, "spec")))
    gen_synthetic(spec, out_dir / spec.name)
    write_run_record(out_dir, "synth", config)
    print(f"synth: corpus {spec.name!r} written under {out_dir / spec.name}")


def cmd_extract(config: dict) -> None:
    out_dir = _out_dir(config)
    manifest = _load_manifest_arg(config, "manifest")
    cfg = _experiment_config(config)
    records = extract_all_features(manifest, cfg)
    _write_features(out_dir / "features.json", manifest.name,
                    manifest.class_names, records)
    write_run_record(out_dir, "extract", config)
    print(f"extract: {len(records)} feature records -> {out_dir / 'features.json'}")


def cmd_train(config: dict) -> None:
    out_dir = _out_dir(config)
    manifest = _load_manifest_arg(config, "manifest")
    cfg = _experiment_config(config)
    records = extract_all_features(manifest, cfg)
    needed = cfg.needed_modalities()
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    labeled = map_labels(manifest)
    table = cfg.load_embedding_table() if "T" in needed else None
    from .experiments import _train_fold_extractors

    extractors = _train_fold_extractors(labeled, manifest.root, cfg, table, 0, needed)
    if extractors.text_model is not None:
        extractors.text_model.net.save(models_dir / "text_network.json")
    if extractors.visual_model is not None:
        extractors.visual_model.net.save(models_dir / "visual_network.json")
    for subset in cfg.subsets:
        model = train_svm(records, subset, c=cfg.svm_c, seed=cfg.seed,
                          epochs=cfg.svm_epochs)
        model.save(models_dir / f"svm_{subset_key(subset).replace('+', '_')}.json")
    _write_features(out_dir / "features.json", manifest.name,
                    manifest.class_names, records)
    write_run_record(out_dir, "train", config)
    print(f"train: models under {models_dir}")


def cmd_eval(config: dict) -> None:
    out_dir = _out_dir(config)
    manifest = _load_manifest_arg(config, "manifest")
    cfg = _experiment_config(config)
    audit = AuditLog()
    result = run_experiment(manifest, cfg, audit)
    _write_reports(out_dir, result)
    audit.save(out_dir / "audit.jsonl")
    if config.get("emit_features", True):
        records = extract_all_features(manifest, cfg)
        _write_features(out_dir / "features.json", manifest.name,
                        manifest.class_names, records)
    write_run_record(out_dir, "eval", config)
    summary = result.summary()
    for subset, stats in summary.items():
        print(f"eval: {subset:8s} macro_f {stats['macro_f']:.4f} rmse {stats['rmse']:.4f}")


def cmd_cross(config: dict) -> None:
    out_dir = _out_dir(config)
    train_manifest = _load_manifest_arg(config, "train_manifest")
    test_manifest = _load_manifest_arg(config, "test_manifest")
    cfg = _experiment_config(config)
    audit = AuditLog()
    result = cross_dataset_run(train_manifest, test_manifest, cfg, audit)
    _write_reports(out_dir, result)
    audit.save(out_dir / "audit.jsonl")
    write_run_record(out_dir, "cross", config)
    for subset, stats in result.summary().items():
        print(f"cross: {subset:8s} macro_f {stats['macro_f']:.4f}")


def _load_features(path: Path) -> dict:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read features {path}: {e}") from e
    if doc.get("format") != FEATURES_FORMAT or doc.get("version") != FEATURES_VERSION:
        raise DataError(f"{path}: unsupported features file")
    return doc


def cmd_viz(config: dict) -> None:
    out_dir = _out_dir(config)
    features_path = Path(str(_require(config, "features")))
    if not features_path.exists():
        raise ConfigError(f"features file does not exist: {features_path}")
    doc = _load_features(features_path)
    subset = tuple(config.get("subset", ["T", "A", "V"]))
    tsne_cfg = config.get("tsne", {})
    vectors, labels = [], []
    for rec in doc["records"]:
        missing = [m for m in subset if m not in rec["features"]]
        if missing:
            raise DataError(f"{rec['utterance_id']}: missing modalities {missing}")
        vectors.append(np.concatenate([np.asarray(rec["features"][m]) for m in subset]))
        labels.append(int(rec["label"]))
    proj = tsne_2d(
        np.stack(vectors),
        perplexity=float(tsne_cfg.get("perplexity", 10.0)),
        iterations=int(tsne_cfg.get("iterations", 400)),
        seed=int(tsne_cfg.get("seed", 0)),
    )
    with open(out_dir / "projection.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["utterance_id", "label", "x", "y"])
        for rec, (x, y) in zip(doc["records"], proj.points):
            w.writerow([rec["utterance_id"], rec["label"], repr(float(x)), repr(float(y))])
    title = f"{doc['dataset']} features ({subset_key(subset)})"
    emit_chart(scatter_svg(proj.points, labels, doc["class_names"], title),
               out_dir / "projection.svg")

    report_paths = config.get("reports", [])
    if report_paths:
        scores: dict[str, dict[str, float]] = {}
        for rp in report_paths:
            rp = Path(str(rp))
            if not rp.exists():
                raise ConfigError(f"report file does not exist: {rp}")
            with open(rp, newline="") as f:
                for row in csv.DictReader(f):
                    scores.setdefault(row["dataset"], {})[row["subset"]] = float(row["macro_f"])
        emit_chart(bars_svg(scores, title="macro F by modality subset"),
                   out_dir / "scores.svg")
    write_run_record(out_dir, "viz", config)
    print(f"viz: artifacts under {out_dir}")


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "cross": cmd_cross,
    "viz": cmd_viz,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="trimodal",
        description="Trimodal sentiment/emotion pipeline runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config or run record")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="PATH=VALUE", help="override a config field by dotted path")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides, args.command)
        COMMANDS[args.command](config)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"error: data: {e}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as e:
        print(f"error: invariant: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except TrimodalError as e:
        print(f"error: internal: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
