"""Binary detection metrics, evaluation reports, and end-to-end pipelines.

Everything here treats the attack class as the positive class.  Predicted
and reference labels may use either the 0/1 convention of the datasets or
the -1/+1 convention of margin classifiers; both are accepted and mapped
onto attack/normal before counting.

The pipeline runners (`benchmark`, `ensemble_rf_svm`) apply one fixed
order: interpolate, split, fit preprocessing on the training rows only,
train, evaluate.  A single master seed feeds every stochastic stage
through labeled sub-seeds, so a run is reproducible from one number.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from . import seeds
from .data_model import Dataset
from .errors import (
    DegenerateLabels,
    EmptyEvaluation,
    InvalidConfig,
    ShapeMismatch,
)
from .forest import ForestConfig, TrainedForest, train_forest
from .preprocess import (
    FeatureMatrix,
    apply_pca,
    apply_scaler,
    feature_matrix,
    fit_pca,
    fit_scaler,
    interpolate_time,
    stratified_split,
)
from .svm import (
    OneClassConfig,
    SvmConfig,
    TrainedOneClass,
    TrainedSvm,
    train_one_class,
    train_svm,
)

REPORT_SCHEMA_VERSION = 1

MODEL_KINDS = ("rf", "svm", "ocsvm")


def _as_attack_indicator(values: Sequence[int] | np.ndarray, name: str) -> np.ndarray:
    """Map a label vector onto booleans (True = attack).

    Accepts {0, 1} or {-1, +1}.  Anything else is rejected rather than
    guessed at.
    """
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyEvaluation(f"{name} is empty")
    present = set(np.unique(arr).tolist())
    if present <= {0, 1} or present <= {0.0, 1.0}:
        return arr > 0
    if present <= {-1, 1} or present <= {-1.0, 1.0}:
        return arr > 0
    raise InvalidConfig(
        f"{name} must use 0/1 or -1/+1 labels, found values {sorted(present)}"
    )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts for binary detection; attack is the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_json_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(
    predicted: Sequence[int] | np.ndarray, actual: Sequence[int] | np.ndarray
) -> ConfusionMatrix:
    """Count agreement between predicted and reference labels."""
    pred = _as_attack_indicator(predicted, "predicted")
    ref = _as_attack_indicator(actual, "actual")
    if pred.shape[0] != ref.shape[0]:
        raise ShapeMismatch(
            f"predicted has {pred.shape[0]} entries, actual has {ref.shape[0]}"
        )
    tp = int(np.count_nonzero(pred & ref))
    tn = int(np.count_nonzero(~pred & ~ref))
    fp = int(np.count_nonzero(pred & ~ref))
    fn = int(np.count_nonzero(~pred & ref))
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


@dataclass(frozen=True)
class Metrics:
    """Point metrics for one confusion matrix.

    Undefined ratios (zero denominator) are reported as 0.0 and named in
    `flags` so downstream consumers can tell a true zero from a vacuous
    one.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "flags": list(self.flags),
        }


def metrics(c: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall and F1 from counts."""
    total = c.total
    if total == 0:
        raise EmptyEvaluation("confusion matrix has no observations")
    flags: list[str] = []
    accuracy = (c.tp + c.tn) / total
    if c.tp + c.fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = c.tp / (c.tp + c.fn)
    if precision + recall == 0.0:
        f1 = 0.0
        flags.append("f1_undefined")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        flags=tuple(flags),
    )


def window_recall(
    predicted: Sequence[int] | np.ndarray,
    actual: Sequence[int] | np.ndarray,
    min_fraction: float = 0.25,
) -> tuple[int, int]:
    """Count contiguous attack windows whose alarm density clears a bar.

    Attacks in these captures come in contiguous bursts, so per-window
    detection is the operational question: did the alarm fire inside the
    burst?  A window counts as detected when the flagged fraction of its
    rows is at least min_fraction; the default bar of 0.25 sits well
    above any sane false-alarm base rate while tolerating per-packet
    misses inside a detected burst.  Returns (detected, total).
    """
    if not 0.0 < min_fraction <= 1.0:
        raise InvalidConfig(
            f"min_fraction must be in (0, 1], got {min_fraction}"
        )
    pred = _as_attack_indicator(predicted, "predicted")
    ref = _as_attack_indicator(actual, "actual")
    if pred.shape[0] != ref.shape[0]:
        raise ShapeMismatch(
            f"predicted has {pred.shape[0]} entries, actual has {ref.shape[0]}"
        )
    padded = np.concatenate(([False], ref, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[0::2], edges[1::2]
    detected = sum(
        1 for a, b in zip(starts, ends) if pred[a:b].mean() >= min_fraction
    )
    return detected, len(starts)


@dataclass(frozen=True)
class EvaluationReport:
    """Everything one pipeline run produced, ready for JSON."""

    dataset_id: str
    model_kind: str
    model_config: Mapping[str, Any]
    model_seed: int
    split_fraction: float
    split_seed: int
    confusion: ConfusionMatrix
    metrics: Metrics
    train_s: float
    predict_s: float
    preprocessing: Mapping[str, Any]
    ensemble: Mapping[str, Any] | None = None
    # Fully-resolved run parameters, echoed verbatim by pipeline drivers
    # so a report is sufficient to reproduce itself.
    pipeline: Mapping[str, Any] | None = None

    def to_json_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "model": {
                "kind": self.model_kind,
                "config": dict(self.model_config),
                "seed": self.model_seed,
            },
            "split": {"fraction": self.split_fraction, "seed": self.split_seed},
            "confusion": self.confusion.to_json_dict(),
            "metrics": self.metrics.to_json_dict(),
            "timing": {"train_s": self.train_s, "predict_s": self.predict_s},
            "preprocessing": dict(self.preprocessing),
        }
        if self.ensemble is not None:
            doc["ensemble"] = dict(self.ensemble)
        if self.pipeline is not None:
            doc["pipeline"] = dict(self.pipeline)
        return doc


_NONNEG_NUMBER = {"type": "number", "minimum": 0}
_NONNEG_INT = {"type": "integer", "minimum": 0}

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "schema_version",
        "dataset_id",
        "model",
        "split",
        "confusion",
        "metrics",
        "timing",
        "preprocessing",
    ],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "dataset_id": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["kind", "config", "seed"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["rf", "svm", "ocsvm", "ensemble"]},
                "config": {"type": "object"},
                "seed": _NONNEG_INT,
            },
        },
        "split": {
            "type": "object",
            "required": ["fraction", "seed"],
            "additionalProperties": False,
            "properties": {
                "fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": _NONNEG_INT,
            },
        },
        "confusion": {
            "type": "object",
            "required": ["tp", "tn", "fp", "fn"],
            "additionalProperties": False,
            "properties": {
                "tp": _NONNEG_INT,
                "tn": _NONNEG_INT,
                "fp": _NONNEG_INT,
                "fn": _NONNEG_INT,
            },
        },
        "metrics": {
            "type": "object",
            "required": ["accuracy", "precision", "recall", "f1", "flags"],
            "additionalProperties": False,
            "properties": {
                "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                "precision": {"type": "number", "minimum": 0, "maximum": 1},
                "recall": {"type": "number", "minimum": 0, "maximum": 1},
                "f1": {"type": "number", "minimum": 0, "maximum": 1},
                "flags": {"type": "array", "items": {"type": "string"}},
            },
        },
        "timing": {
            "type": "object",
            "required": ["train_s", "predict_s"],
            "additionalProperties": False,
            "properties": {"train_s": _NONNEG_NUMBER, "predict_s": _NONNEG_NUMBER},
        },
        "preprocessing": {"type": "object"},
        "ensemble": {"type": "object"},
        "pipeline": {"type": "object"},
    },
}


@dataclass(frozen=True)
class _Prepared:
    """Complete feature matrix plus the split bookkeeping the report needs."""

    fm: FeatureMatrix
    train_rows: np.ndarray
    test_rows: np.ndarray
    y_train: np.ndarray
    y_test: np.ndarray
    split_seed: int
    interpolated: bool


def _prepare(
    d: Dataset, split_fraction: float, seed: int, interpolate: bool = True
) -> _Prepared:
    interpolated = False
    if interpolate and d.missing_mask.any():
        d = interpolate_time(d, round_categorical=True)
        interpolated = True
    split_seed = seeds.derive(seed, "split")
    split = stratified_split(d, split_fraction, split_seed)
    fm = feature_matrix(d)
    fm.require_complete("model training")
    assert d.binary_labels is not None  # stratified_split already checked
    y = d.binary_labels
    return _Prepared(
        fm=fm,
        train_rows=split.train,
        test_rows=split.test,
        y_train=y[split.train],
        y_test=y[split.test],
        split_seed=split_seed,
        interpolated=interpolated,
    )


def _scaled(fm: FeatureMatrix, train_rows: np.ndarray) -> FeatureMatrix:
    """Standardize all rows with statistics taken from the training rows."""
    return apply_scaler(fit_scaler(fm, rows=train_rows), fm)


def benchmark(
    d: Dataset,
    model_kind: str,
    model_config: ForestConfig | SvmConfig | OneClassConfig | None = None,
    *,
    split_fraction: float = 0.8,
    seed: int = 0,
    threads: int = 1,
    scale: bool | None = None,
    interpolate: bool = True,
    pca_components: int | None = None,
    pca_variance_threshold: float | None = None,
    dataset_id: str = "dataset",
) -> tuple[TrainedForest | TrainedSvm | TrainedOneClass, EvaluationReport]:
    """Run the full pipeline for one model and time its stages.

    `scale` defaults to True for the margin models and False for the
    forest, which is invariant to monotone feature rescaling.  The model
    seed is derived from the master seed; a seed set on `model_config` is
    overridden so that one number controls the whole run.
    """
    if model_kind not in MODEL_KINDS:
        raise InvalidConfig(
            f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}"
        )
    if seed < 0:
        raise InvalidConfig("seed must be nonnegative")
    prep = _prepare(d, split_fraction, seed, interpolate)
    model_seed = seeds.derive(seed, "model")

    if scale is None:
        scale = model_kind != "rf"
    fm = prep.fm
    if scale:
        fm = _scaled(fm, prep.train_rows)
    pca_k: int | None = None
    if pca_components is not None or pca_variance_threshold is not None:
        pca = fit_pca(
            fm,
            rows=prep.train_rows,
            n_components=pca_components,
            variance_threshold=pca_variance_threshold,
        )
        fm = apply_pca(pca, fm)
        pca_k = pca.n_components
    x_train = fm.data[prep.train_rows]
    x_test = fm.data[prep.test_rows]

    model: TrainedForest | TrainedSvm | TrainedOneClass
    start = time.perf_counter()
    if model_kind == "rf":
        config = model_config if model_config is not None else ForestConfig()
        if not isinstance(config, ForestConfig):
            raise InvalidConfig("model_config for rf must be a ForestConfig")
        config = dataclasses.replace(config, seed=model_seed)
        model = train_forest(x_train, prep.y_train, config, threads=threads)
    elif model_kind == "svm":
        config = model_config if model_config is not None else SvmConfig()
        if not isinstance(config, SvmConfig):
            raise InvalidConfig("model_config for svm must be a SvmConfig")
        config = dataclasses.replace(config, seed=model_seed)
        model = train_svm(x_train, prep.y_train, config)
    else:
        config = model_config if model_config is not None else OneClassConfig()
        if not isinstance(config, OneClassConfig):
            raise InvalidConfig("model_config for ocsvm must be a OneClassConfig")
        normal_rows = x_train[prep.y_train == 0]
        if normal_rows.shape[0] == 0:
            raise DegenerateLabels("no normal rows to fit the one-class model on")
        model = train_one_class(normal_rows, config)
    train_s = time.perf_counter() - start

    start = time.perf_counter()
    if model_kind == "rf":
        predicted = model.predict(x_test)
    else:
        decision = model.decide(x_test)
        if model_kind == "svm":
            predicted = (decision > 0).astype(np.int64)
        else:
            # One-class: outliers are flagged as attacks.
            predicted = (decision < 0).astype(np.int64)
    predict_s = time.perf_counter() - start

    cm = confusion(predicted, prep.y_test)
    report = EvaluationReport(
        dataset_id=dataset_id,
        model_kind=model_kind,
        model_config=config.to_json_dict(),
        model_seed=model_seed,
        split_fraction=split_fraction,
        split_seed=prep.split_seed,
        confusion=cm,
        metrics=metrics(cm),
        train_s=train_s,
        predict_s=predict_s,
        preprocessing={
            "interpolated": prep.interpolated,
            "scaled": bool(scale),
            "pca_components": pca_k,
        },
    )
    return model, report


def ensemble_rf_svm(
    d: Dataset,
    forest_config: ForestConfig | None = None,
    top_k: int = 5,
    svm_config: SvmConfig | None = None,
    *,
    split_fraction: float = 0.8,
    seed: int = 0,
    threads: int = 1,
    interpolate: bool = True,
    dataset_id: str = "dataset",
) -> tuple[EvaluationReport, tuple[str, ...]]:
    """Forest-ranked feature selection feeding a weighted margin model.

    A forest is trained on the full training matrix, its impurity-based
    importances rank the features, and the margin model is retrained on
    the top_k columns (kept in original column order).  The report's
    confusion block describes the reduced model on the test rows; the
    `ensemble` block records what the reduction cost in accuracy and
    bought in training time relative to the full-width margin model.
    """
    if seed < 0:
        raise InvalidConfig("seed must be nonnegative")
    prep = _prepare(d, split_fraction, seed, interpolate)
    n_features = prep.fm.cols
    if not 1 <= top_k <= n_features:
        raise InvalidConfig(
            f"top_k must be in [1, {n_features}], got {top_k}"
        )
    model_seed = seeds.derive(seed, "model")

    fc = forest_config if forest_config is not None else ForestConfig()
    fc = dataclasses.replace(fc, seed=model_seed)
    start = time.perf_counter()
    forest = train_forest(
        prep.fm.data[prep.train_rows], prep.y_train, fc, threads=threads
    )
    forest_s = time.perf_counter() - start

    order = np.argsort(-forest.gini_importance, kind="stable")
    selected = np.sort(order[:top_k])
    selected_names = tuple(prep.fm.column_names[i] for i in selected)

    sc = svm_config if svm_config is not None else SvmConfig()
    sc = dataclasses.replace(sc, seed=model_seed)

    full = _scaled(prep.fm, prep.train_rows)
    start = time.perf_counter()
    full_model = train_svm(full.data[prep.train_rows], prep.y_train, sc)
    full_s = time.perf_counter() - start
    full_pred = (full_model.decide(full.data[prep.test_rows]) > 0).astype(np.int64)
    full_acc = metrics(confusion(full_pred, prep.y_test)).accuracy

    reduced = _scaled(prep.fm.select(selected), prep.train_rows)
    start = time.perf_counter()
    reduced_model = train_svm(reduced.data[prep.train_rows], prep.y_train, sc)
    reduced_s = time.perf_counter() - start
    start = time.perf_counter()
    reduced_pred = (
        reduced_model.decide(reduced.data[prep.test_rows]) > 0
    ).astype(np.int64)
    predict_s = time.perf_counter() - start

    cm = confusion(reduced_pred, prep.y_test)
    m = metrics(cm)
    report = EvaluationReport(
        dataset_id=dataset_id,
        model_kind="ensemble",
        model_config={
            "forest": fc.to_json_dict(),
            "svm": sc.to_json_dict(),
            "top_k": top_k,
        },
        model_seed=model_seed,
        split_fraction=split_fraction,
        split_seed=prep.split_seed,
        confusion=cm,
        metrics=m,
        train_s=forest_s + reduced_s,
        predict_s=predict_s,
        preprocessing={
            "interpolated": prep.interpolated,
            "scaled": True,
            "pca_components": None,
        },
        ensemble={
            "top_k": top_k,
            "selected_indices": [int(i) for i in selected],
            "selected_features": list(selected_names),
            "forest_train_s": forest_s,
            "full_svm_train_s": full_s,
            "reduced_svm_train_s": reduced_s,
            "train_time_saved_s": full_s - reduced_s,
            "full_svm_accuracy": full_acc,
            "reduced_svm_accuracy": m.accuracy,
            "accuracy_delta": m.accuracy - full_acc,
        },
    )
    return report, selected_names
