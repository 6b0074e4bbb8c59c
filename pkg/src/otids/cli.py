"""Command-line front end for offline experiments.

Subcommands bind the library into reproducible runs: `ingest` parses a
capture and reports missingness, `synth` writes the bundled synthetic
captures, `train` runs the fixed pipeline (interpolate, split, fit
preprocessing on the training rows, train, evaluate), `importance`
ranks features, and `gridsearch` cross-validates a list of margin-model
configurations.

Conventions: data goes to stdout or `--out`; progress and summaries go
to stderr.  Every report embeds the fully-resolved run parameters, so
re-running the recorded command reproduces the result.  Exit codes are
stable: 0 success, 2 I/O or parse failure on the data file, 3 schema
mismatch, 4 bad configuration, 5 degenerate data.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import ingest, seeds, serialize, synth
from .data_model import Dataset, builtin_schema
from .errors import (
    DegenerateDataError,
    InvalidConfig,
    ParseError,
    SchemaError,
)
from .evaluate import benchmark, ensemble_rf_svm
from .forest import ForestConfig, permutation_importance, train_forest
from .preprocess import (
    apply_scaler,
    feature_matrix,
    fit_scaler,
    interpolate_time,
    stratified_split,
)
from .svm import KernelSpec, OneClassConfig, SvmConfig, grid_search

MODEL_CHOICES = ("rf", "svm", "ocsvm", "ensemble")


# -- model configuration parsing ----------------------------------------------


def _take(doc: dict, allowed: dict[str, Any], what: str) -> dict[str, Any]:
    """Validate keys of a raw config dict against the allowed set."""
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{what} must be a JSON object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise InvalidConfig(f"unknown {what} keys: {', '.join(unknown)}")
    out = dict(allowed)
    out.update(doc)
    return out


def kernel_from_dict(doc: dict) -> KernelSpec:
    d = _take(doc, {"kind": "rbf", "gamma": None, "degree": 3, "coef0": 0.0},
              "kernel")
    return KernelSpec(kind=d["kind"], gamma=d["gamma"], degree=d["degree"],
                      coef0=d["coef0"])


def forest_from_dict(doc: dict) -> ForestConfig:
    d = _take(doc, {
        "n_trees": 100, "max_depth": None, "min_samples_leaf": 1,
        "features_per_split": "sqrt", "bootstrap": True, "seed": 0,
    }, "forest config")
    cfg = ForestConfig(**d)
    cfg.validate()
    return cfg


def svm_from_dict(doc: dict) -> SvmConfig:
    d = _take(doc, {
        "kernel": {}, "C": 1.0, "class_weights": "balanced",
        "tol": 1e-3, "max_passes": 100_000, "seed": 0,
    }, "svm config")
    weights = d["class_weights"]
    if isinstance(weights, dict):
        weights = {int(k): float(v) for k, v in weights.items()}
    return SvmConfig(kernel=kernel_from_dict(d["kernel"]), C=d["C"],
                     class_weights=weights, tol=d["tol"],
                     max_passes=d["max_passes"], seed=d["seed"])


def one_class_from_dict(doc: dict) -> OneClassConfig:
    d = _take(doc, {
        "kernel": {}, "nu": 0.1, "tol": 1e-4, "max_passes": 100_000, "seed": 0,
    }, "one-class config")
    return OneClassConfig(kernel=kernel_from_dict(d["kernel"]), nu=d["nu"],
                          tol=d["tol"], max_passes=d["max_passes"],
                          seed=d["seed"])


# -- pipeline configuration ----------------------------------------------------


@dataclass
class PipelineConfig:
    """One declarative experiment: dataset, preprocessing, model, split.

    Values resolve in three layers: built-in defaults, then the
    `--config` JSON file, then individual CLI flags.  The resolved form
    is echoed into every emitted report.
    """

    dataset: str | None = None
    schema: str | None = None
    model: str = "rf"
    model_config: dict = field(default_factory=dict)
    top_k: int | None = None
    interpolate: bool = True
    scale: str = "auto"
    pca_components: int | None = None
    pca_variance_threshold: float | None = None
    split_fraction: float = 0.8
    seed: int = 0
    threads: int = 1
    out: str | None = None
    model_out: str | None = None

    def validate(self) -> None:
        if self.dataset is None:
            raise InvalidConfig("no dataset given (--dataset or config file)")
        if self.schema is None:
            raise InvalidConfig("no schema given (--schema or config file)")
        if self.model not in MODEL_CHOICES:
            raise InvalidConfig(
                f"model must be one of {MODEL_CHOICES}, got {self.model!r}"
            )
        if self.scale not in ("auto", "on", "off"):
            raise InvalidConfig(
                f"scale must be auto, on or off, got {self.scale!r}"
            )
        if self.pca_components is not None and \
                self.pca_variance_threshold is not None:
            raise InvalidConfig(
                "give at most one of pca_components / pca_variance_threshold"
            )

    @property
    def scale_flag(self) -> bool | None:
        return {"auto": None, "on": True, "off": False}[self.scale]

    def to_json_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_CONFIG_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}


def _load_json_file(path: str, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"malformed {what} {path}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        doc = _load_json_file(args.config, "config file")
        if not isinstance(doc, dict):
            raise InvalidConfig("config file must hold a JSON object")
        unknown = sorted(set(doc) - _CONFIG_KEYS)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if not isinstance(cfg.model_config, dict):
        raise InvalidConfig("model_config must be a JSON object")
    cfg.validate()
    return cfg


# -- shared plumbing -----------------------------------------------------------


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc: dict, out: str | None) -> None:
    text = serialize.dumps(doc)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def load_dataset(path: str, schema_id: str) -> tuple[Dataset, ingest.IngestReport]:
    schema = builtin_schema(schema_id)
    if path.lower().endswith(".arff"):
        return ingest.parse_arff(path, schema)
    return ingest.parse_csv(path, schema)


def _ingest_report_dict(rep: ingest.IngestReport) -> dict[str, Any]:
    return {
        "kind": "ingest-report",
        "schema_version": 1,
        "rows_read": rep.rows_read,
        "rows_rejected": rep.rows_rejected,
        "missing_cells": rep.missing_cells,
        "missing_fraction": rep.missing_fraction,
        "per_column_missing": rep.per_column_missing,
    }


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    d, rep = load_dataset(args.data, args.schema)
    if args.emit:
        n = ingest.write_canonical(d, args.emit)
        _log(f"wrote {n} bytes of canonical CSV to {args.emit}")
    _emit(_ingest_report_dict(rep), args.out)
    _log(
        f"{rep.rows_read} rows ({rep.rows_rejected} rejected), "
        f"missing fraction {rep.missing_fraction:.4f}"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.layout == "ds1":
        d = synth.gen_pipeline(seed=args.seed)
    else:
        d = synth.gen_batch(seed=args.seed)
    if args.delete_fraction:
        d = synth.delete_mcar(d, args.delete_fraction, seed=args.delete_seed)
    if args.out is None:
        ingest.write_canonical(d, sys.stdout)
    else:
        n = ingest.write_canonical(d, args.out)
        _log(f"wrote {n} bytes to {args.out}")
    assert d.binary_labels is not None
    _log(
        f"{d.n_records} rows, attack fraction "
        f"{float(d.binary_labels.mean()):.4f}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    d, _ = load_dataset(cfg.dataset, cfg.schema)

    if cfg.model == "ensemble":
        mc = _take(cfg.model_config, {"forest": {}, "svm": {}},
                   "ensemble config")
        report, selected = ensemble_rf_svm(
            d,
            forest_config=forest_from_dict(mc["forest"]),
            top_k=cfg.top_k if cfg.top_k is not None else 5,
            svm_config=svm_from_dict(mc["svm"]),
            split_fraction=cfg.split_fraction,
            seed=cfg.seed,
            threads=cfg.threads,
            interpolate=cfg.interpolate,
            dataset_id=cfg.schema,
        )
        model = None
        _log(f"selected features: {', '.join(selected)}")
    else:
        parser = {"rf": forest_from_dict, "svm": svm_from_dict,
                  "ocsvm": one_class_from_dict}[cfg.model]
        model, report = benchmark(
            d,
            cfg.model,
            parser(cfg.model_config),
            split_fraction=cfg.split_fraction,
            seed=cfg.seed,
            threads=cfg.threads,
            scale=cfg.scale_flag,
            interpolate=cfg.interpolate,
            pca_components=cfg.pca_components,
            pca_variance_threshold=cfg.pca_variance_threshold,
            dataset_id=cfg.schema,
        )

    report = dataclasses.replace(report, pipeline=cfg.to_json_dict())
    if model is not None:
        model_out = cfg.model_out
        if model_out is None:
            base = Path(cfg.out).with_suffix("") if cfg.out else Path("otids")
            model_out = f"{base}.model.json"
        serialize.dump_path(model.to_json_dict(), model_out)
        _log(f"model written to {model_out}")
    _emit(report.to_json_dict(), cfg.out)
    m = report.metrics
    _log(
        f"{cfg.model} on {cfg.schema}: accuracy {m.accuracy:.4f}, "
        f"precision {m.precision:.4f}, recall {m.recall:.4f}, f1 {m.f1:.4f}"
    )
    return 0


def _prepared_matrices(cfg: PipelineConfig, d: Dataset):
    """Interpolate, split, and scale-on-train for the auxiliary commands."""
    if cfg.interpolate and d.missing_mask.any():
        d = interpolate_time(d, round_categorical=True)
    split = stratified_split(d, cfg.split_fraction, seeds.derive(cfg.seed, "split"))
    fm = feature_matrix(d)
    fm.require_complete("model training")
    assert d.binary_labels is not None
    return d, split, fm


def cmd_importance(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    d, _ = load_dataset(cfg.dataset, cfg.schema)
    d, split, fm = _prepared_matrices(cfg, d)
    y = d.binary_labels
    fc = dataclasses.replace(forest_from_dict(cfg.model_config),
                             seed=seeds.derive(cfg.seed, "model"))
    forest = train_forest(fm.data[split.train], y[split.train], fc,
                          threads=cfg.threads)
    if args.method == "gini":
        scores = forest.gini_importance
    else:
        scores = permutation_importance(
            forest, fm.data[split.test], y[split.test],
            repeats=args.repeats, seed=seeds.derive(cfg.seed, "perm"),
        )
    order = np.argsort(-scores, kind="stable")
    rows = [
        {"rank": r + 1, "name": fm.column_names[i], "score": float(scores[i])}
        for r, i in enumerate(order)
    ]
    for row in rows:
        print(f"{row['rank']:3d}  {row['score']:10.6f}  {row['name']}")
    doc = {
        "kind": "importance",
        "schema_version": 1,
        "method": args.method,
        "features": rows,
        "pipeline": cfg.to_json_dict(),
    }
    if args.out:
        _emit(doc, args.out)
    return 0


def cmd_gridsearch(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    raw = _load_json_file(args.grid, "grid file")
    if not isinstance(raw, list) or not raw:
        raise InvalidConfig("grid file must hold a non-empty JSON array")
    grid = [svm_from_dict(entry) for entry in raw]

    d, _ = load_dataset(cfg.dataset, cfg.schema)
    d, split, fm = _prepared_matrices(cfg, d)
    y = d.binary_labels
    scaled = apply_scaler(fit_scaler(fm, rows=split.train), fm)
    result = grid_search(
        scaled.data[split.train], y[split.train], grid,
        folds=args.folds, seed=seeds.derive(cfg.seed, "cv"),
        threads=cfg.threads,
    )
    for i, e in enumerate(result.entries):
        marker = "*" if i == result.best_index else " "
        print(
            f"{marker} C={e.config.C:<8g} kernel={e.config.kernel.kind}"
            f" gamma={e.config.kernel.gamma} mean_f1={e.mean_f1:.4f}"
        )
    doc = {
        "kind": "grid-result",
        "schema_version": 1,
        "folds": args.folds,
        "entries": [
            {"config": e.config.to_json_dict(), "mean_f1": e.mean_f1,
             "fold_f1": list(e.fold_f1)}
            for e in result.entries
        ],
        "best_index": result.best_index,
        "best": result.best.to_json_dict(),
        "pipeline": cfg.to_json_dict(),
    }
    if args.out:
        _emit(doc, args.out)
    return 0


# -- argument parsing ----------------------------------------------------------


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--dataset", help="path to the capture file (.csv or .arff)")
    p.add_argument("--schema", help="builtin schema id (ds1-modbus, ds2-opcua)")
    p.add_argument("--model", choices=MODEL_CHOICES)
    p.add_argument("--model-config", dest="model_config", type=json.loads,
                   metavar="JSON", help="inline model configuration")
    p.add_argument("--top-k", dest="top_k", type=int,
                   help="feature count for the ensemble model")
    p.add_argument("--interpolate", action=argparse.BooleanOptionalAction,
                   default=None,
                   help="fill missing cells by time interpolation "
                        "(--no-interpolate fails on missing cells instead)")
    p.add_argument("--scale", choices=("auto", "on", "off"))
    p.add_argument("--pca-components", dest="pca_components", type=int)
    p.add_argument("--pca-threshold", dest="pca_variance_threshold", type=float)
    p.add_argument("--split-fraction", dest="split_fraction", type=float)
    p.add_argument("--seed", type=int, help="master seed for the whole run")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="otids",
        description="Train and evaluate intrusion detectors on "
                    "industrial-control captures.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("ingest", help="parse a capture and report missingness")
    q.add_argument("data", help="path to the capture file")
    q.add_argument("--schema", required=True)
    q.add_argument("--emit", help="also write the parsed data as canonical CSV")
    q.add_argument("--out", help="write the report here instead of stdout")
    q.set_defaults(func=cmd_ingest)

    q = sub.add_parser("synth", help="generate a synthetic capture")
    q.add_argument("--layout", choices=("ds1", "ds2"), required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--delete-fraction", dest="delete_fraction", type=float,
                   default=0.0, help="blank this fraction of value cells")
    q.add_argument("--delete-seed", dest="delete_seed", type=int, default=0)
    q.add_argument("--out", help="write CSV here instead of stdout")
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("train", help="run the training pipeline")
    _add_pipeline_flags(q)
    q.add_argument("--model-out", dest="model_out",
                   help="where to write the trained model JSON")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("importance", help="rank features by forest importance")
    _add_pipeline_flags(q)
    q.add_argument("--method", choices=("gini", "permutation"), default="gini")
    q.add_argument("--repeats", type=int, default=5,
                   help="shuffle repeats for the permutation method")
    q.set_defaults(func=cmd_importance)

    q = sub.add_parser("gridsearch", help="cross-validate margin-model configs")
    _add_pipeline_flags(q)
    q.add_argument("--grid", required=True,
                   help="JSON file holding an array of svm configs")
    q.add_argument("--folds", type=int, default=3)
    q.set_defaults(func=cmd_gridsearch)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        _log(f"otids: parse error: {exc}")
        return 2
    except OSError as exc:
        _log(f"otids: i/o error: {exc}")
        return 2
    except SchemaError as exc:
        _log(f"otids: schema error: {exc}")
        return 3
    except InvalidConfig as exc:
        _log(f"otids: config error: {exc}")
        return 4
    except DegenerateDataError as exc:
        _log(f"otids: degenerate data: {exc}")
        return 5


if __name__ == "__main__":
    sys.exit(main())
