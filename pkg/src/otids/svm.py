"""Kernel support vector machines trained by pairwise coordinate ascent.

The two-class trainer solves the soft-margin dual with per-class box
constraints C_i = C * class_weight(y_i), which is how false negatives on
the rare attack class are made more expensive than false alarms.  The
one-class trainer fits the nu-parameterised normal-traffic envelope used
when almost no attack examples exist.  Both share one optimiser: repeated
exact minimisation over the maximal KKT-violating pair of multipliers,
stopping when the violation gap falls below the tolerance or the pass
budget runs out (the latter is a warning, not an error).

Label convention: +1 is the attack/positive class, -1 is normal; inputs
labelled {0, 1} are accepted and mapped with 0 -> -1.  A margin of exactly
zero classifies as +1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import accel, serialize
from .errors import (
    DegenerateLabels,
    EmptyInput,
    InvalidConfig,
    NotFinite,
    ShapeMismatch,
)
from .preprocess import FeatureMatrix, ScalerState, stratified_kfold


@dataclass(frozen=True)
class KernelSpec:
    """Kernel function selector.

    gamma=None on an rbf/poly kernel means "resolve at fit time" to
    1 / (n_features * mean per-column variance) of the training matrix.
    """

    kind: str = "rbf"
    gamma: float | None = None
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "poly"):
            raise InvalidConfig(f"unknown kernel kind {self.kind!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise InvalidConfig("gamma must be positive")
        if self.kind == "poly" and self.degree < 1:
            raise InvalidConfig("poly degree must be >= 1")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma,
                "degree": self.degree, "coef0": self.coef0}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "KernelSpec":
        return cls(**doc)


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, FeatureMatrix):
        m.require_complete("kernel evaluation")
        return m.data
    return np.atleast_2d(np.asarray(m, dtype=np.float64))


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Evaluate the kernel on a single pair of vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ShapeMismatch(f"vector shapes differ: {x.shape} vs {z.shape}")
    if spec.kind == "linear":
        return float(np.dot(x, z))
    if spec.gamma is None:
        raise InvalidConfig("gamma is unresolved; give a value or fit a model")
    if spec.kind == "rbf":
        diff = x - z
        return float(np.exp(-spec.gamma * np.dot(diff, diff)))
    return float((spec.gamma * np.dot(x, z) + spec.coef0) ** spec.degree)


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Gram matrix K[i, j] = k(A[i], B[j])."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(
            f"feature counts differ: {A.shape[1]} vs {B.shape[1]}"
        )
    if spec.kind == "linear":
        return A @ B.T
    if spec.gamma is None:
        raise InvalidConfig("gamma is unresolved; give a value or fit a model")
    if spec.kind == "rbf":
        sq = (
            np.einsum("ij,ij->i", A, A)[:, None]
            + np.einsum("ij,ij->i", B, B)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.clip(sq, 0.0, None, out=sq)
        return np.exp(-spec.gamma * sq)
    return (spec.gamma * (A @ B.T) + spec.coef0) ** spec.degree


def resolve_gamma(spec: KernelSpec, X: np.ndarray) -> KernelSpec:
    """Fill in the data-dependent default gamma, if the spec left it open."""
    if spec.kind == "linear" or spec.gamma is not None:
        return spec
    d = X.shape[1]
    mv = float(X.var(axis=0).mean())
    gamma = 1.0 / (d * mv) if mv > 0 else 1.0 / d
    return replace(spec, gamma=gamma)


def balanced_weights(y: np.ndarray) -> dict[int, float]:
    """Inverse-frequency class weights: n / (2 * count(class))."""
    n = len(y)
    return {
        int(c): n / (2.0 * np.count_nonzero(y == c))
        for c in np.unique(y)
    }


@dataclass(frozen=True)
class SvmConfig:
    kernel: KernelSpec = KernelSpec()
    C: float = 1.0
    class_weights: dict | str | None = "balanced"
    tol: float = 1e-3
    max_passes: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise InvalidConfig("C must be positive")
        if self.tol <= 0:
            raise InvalidConfig("tol must be positive")
        if self.max_passes < 1:
            raise InvalidConfig("max_passes must be >= 1")
        if isinstance(self.class_weights, str) and \
                self.class_weights not in ("balanced", "none"):
            raise InvalidConfig("class_weights must be a map, 'balanced' or 'none'")
        if isinstance(self.class_weights, dict):
            cw = {int(k): float(v) for k, v in self.class_weights.items()}
            if any(v <= 0 for v in cw.values()):
                raise InvalidConfig("class weights must be positive")
            object.__setattr__(self, "class_weights", cw)

    def resolve_weights(self, y: np.ndarray) -> dict[int, float]:
        if self.class_weights is None or self.class_weights == "none":
            return {-1: 1.0, 1: 1.0}
        if self.class_weights == "balanced":
            return balanced_weights(y)
        out = {-1: 1.0, 1: 1.0}
        out.update(self.class_weights)
        return out

    def to_json_dict(self) -> dict:
        cw = self.class_weights
        if isinstance(cw, dict):
            cw = {str(k): v for k, v in cw.items()}
        return {"kernel": self.kernel.to_json_dict(), "C": self.C,
                "class_weights": cw, "tol": self.tol,
                "max_passes": self.max_passes, "seed": self.seed}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SvmConfig":
        doc = dict(doc)
        doc["kernel"] = KernelSpec.from_json_dict(doc["kernel"])
        if isinstance(doc.get("class_weights"), dict):
            doc["class_weights"] = {int(k): v
                                    for k, v in doc["class_weights"].items()}
        return cls(**doc)


def _norm_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    uniq = set(np.unique(y).tolist())
    if uniq == {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    if uniq == {-1, 1}:
        return y.astype(np.float64)
    if len(uniq) < 2:
        raise DegenerateLabels(f"labels collapse to the single class {uniq}")
    raise InvalidConfig(f"need binary labels in {{0,1}} or {{-1,+1}}, got {sorted(uniq)}")


def _calc_bias(alpha, grad, y, box) -> float:
    """Offset so free vectors sit on their margin (midpoint of bounds if none)."""
    yg = y * grad
    free = (alpha > 0.0) & (alpha < box)
    if free.any():
        return float(yg[free].mean())
    ub = np.inf
    lb = -np.inf
    hi = alpha >= box
    lo = alpha <= 0.0
    ub_set = (hi & (y < 0)) | (lo & (y > 0))
    lb_set = (hi & (y > 0)) | (lo & (y < 0))
    if ub_set.any():
        ub = float(yg[ub_set].min())
    if lb_set.any():
        lb = float(yg[lb_set].max())
    if np.isinf(ub) and np.isinf(lb):
        return 0.0
    if np.isinf(ub):
        return lb
    if np.isinf(lb):
        return ub
    return (ub + lb) / 2.0


def _violation_gap(alpha, grad, y, box) -> float:
    yg = -y * grad
    up = ((y > 0) & (alpha < box)) | ((y < 0) & (alpha > 0))
    lo = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < box))
    if not up.any() or not lo.any():
        return 0.0
    return float(yg[up].max() - yg[lo].min())


@dataclass
class TrainedSvm:
    """Support vectors and multipliers of a fitted two-class machine."""

    kernel: KernelSpec
    support_vectors: np.ndarray
    alpha: np.ndarray
    sv_labels: np.ndarray
    sv_indices: np.ndarray
    b: float
    config: SvmConfig
    class_weights: dict[int, float]
    converged: bool
    n_passes: int
    final_gap: float
    scaler: ScalerState | None = None
    objective_deltas: np.ndarray | None = None

    def margin(self, X) -> np.ndarray:
        """Decision values sum_i alpha_i y_i k(sv_i, x) - b."""
        X = _as_matrix(X)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ShapeMismatch(
                f"model expects {self.support_vectors.shape[1]} features, "
                f"got {X.shape[1]}"
            )
        K = kernel_matrix(self.kernel, X, self.support_vectors)
        return K @ (self.alpha * self.sv_labels) - self.b

    def decide(self, X) -> np.ndarray:
        """Class in {-1, +1}; a margin of exactly 0 goes to +1."""
        return np.where(self.margin(X) >= 0.0, 1, -1)

    def to_json_dict(self) -> dict:
        return {
            "kind": "svm",
            "schema_version": 1,
            "kernel": self.kernel.to_json_dict(),
            "config": self.config.to_json_dict(),
            "class_weights": {str(k): v for k, v in self.class_weights.items()},
            "support_vectors": self.support_vectors,
            "alpha": self.alpha,
            "sv_labels": self.sv_labels,
            "sv_indices": self.sv_indices,
            "b": self.b,
            "converged": self.converged,
            "n_passes": self.n_passes,
            "final_gap": self.final_gap,
            "scaler": None if self.scaler is None else self.scaler.to_json_dict(),
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainedSvm":
        serialize.require_kind(doc, "svm", 1)
        return cls(
            kernel=KernelSpec.from_json_dict(doc["kernel"]),
            support_vectors=np.array(doc["support_vectors"], dtype=np.float64
                                     ).reshape(len(doc["alpha"]), -1),
            alpha=np.array(doc["alpha"], dtype=np.float64),
            sv_labels=np.array(doc["sv_labels"], dtype=np.float64),
            sv_indices=np.array(doc["sv_indices"], dtype=np.int64),
            b=float(doc["b"]),
            config=SvmConfig.from_json_dict(doc["config"]),
            class_weights={int(k): float(v)
                           for k, v in doc["class_weights"].items()},
            converged=bool(doc["converged"]),
            n_passes=int(doc["n_passes"]),
            final_gap=float(doc["final_gap"]),
            scaler=None if doc["scaler"] is None
            else ScalerState.from_json_dict(doc["scaler"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedSvm":
        return cls.from_json_dict(serialize.loads(text))


def train_svm(m, labels, config: SvmConfig | None = None,
              debug: bool = False) -> TrainedSvm:
    """Fit a weighted two-class kernel machine.

    Exhausting max_passes without reaching the tolerance emits a warning
    and marks the model unconverged rather than failing.  With debug=True
    the per-pass objective changes are kept on the model (the dual
    objective never worsens; tests assert this).
    """
    config = config or SvmConfig()
    X = _as_matrix(m)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("cannot train on zero rows")
    y = _norm_labels(labels)
    if y.shape[0] != n:
        raise ShapeMismatch("labels must align with rows")
    if not np.isfinite(X).all():
        raise NotFinite("training matrix contains non-finite values")

    kernel = resolve_gamma(config.kernel, X)
    weights = config.resolve_weights(y)
    box = np.ascontiguousarray(
        config.C * np.where(y > 0, weights[1], weights[-1])
    )
    K = np.ascontiguousarray(kernel_matrix(kernel, X, X))
    y = np.ascontiguousarray(y)
    p = np.full(n, -1.0)
    alpha = np.zeros(n)
    grad = p.copy()
    deltas = np.zeros(config.max_passes) if debug else np.empty(0)
    passes, conv = accel.smo_solve(K, y, p, box, alpha, grad,
                                   config.tol, config.max_passes, deltas)
    if not conv:
        warnings.warn(
            f"optimiser stopped after {passes} passes with violation gap "
            f"{_violation_gap(alpha, grad, y, box):.3e} > tol {config.tol}; "
            "model kept but marked unconverged",
            RuntimeWarning,
        )
    b = _calc_bias(alpha, grad, y, box)
    keep = alpha > 0.0
    return TrainedSvm(
        kernel=kernel,
        support_vectors=np.array(X[keep]),
        alpha=alpha[keep],
        sv_labels=y[keep],
        sv_indices=np.nonzero(keep)[0].astype(np.int64),
        b=b,
        config=config,
        class_weights=weights,
        converged=bool(conv),
        n_passes=int(passes),
        final_gap=_violation_gap(alpha, grad, y, box),
        objective_deltas=deltas[:passes] if debug else None,
    )


def kkt_residuals(model: TrainedSvm, m, labels) -> np.ndarray:
    """Per-row slack of the optimality conditions on the training set.

    Rows with alpha = 0 must have y*f >= 1, free rows y*f = 1, rows at the
    box y*f <= 1; the residual is how far each row violates its own case.
    """
    X = _as_matrix(m)
    y = _norm_labels(labels)
    f = model.margin(X)
    yf = y * f
    alpha = np.zeros(X.shape[0])
    alpha[model.sv_indices] = model.alpha
    box = model.config.C * np.where(y > 0, model.class_weights[1],
                                    model.class_weights[-1])
    res = np.where(alpha <= 0.0, np.maximum(0.0, 1.0 - yf),
                   np.where(alpha >= box, np.maximum(0.0, yf - 1.0),
                            np.abs(yf - 1.0)))
    return res


@dataclass(frozen=True)
class OneClassConfig:
    kernel: KernelSpec = KernelSpec()
    nu: float = 0.1
    tol: float = 1e-4
    max_passes: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise InvalidConfig(f"nu must be in (0, 1], got {self.nu}")
        if self.tol <= 0:
            raise InvalidConfig("tol must be positive")
        if self.max_passes < 1:
            raise InvalidConfig("max_passes must be >= 1")

    def to_json_dict(self) -> dict:
        return {"kernel": self.kernel.to_json_dict(), "nu": self.nu,
                "tol": self.tol, "max_passes": self.max_passes,
                "seed": self.seed}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "OneClassConfig":
        doc = dict(doc)
        doc["kernel"] = KernelSpec.from_json_dict(doc["kernel"])
        return cls(**doc)


@dataclass
class TrainedOneClass:
    """Envelope of normal traffic: sign(sum_i alpha_i k(sv_i, x) - rho)."""

    kernel: KernelSpec
    support_vectors: np.ndarray
    alpha: np.ndarray
    sv_indices: np.ndarray
    rho: float
    config: OneClassConfig
    converged: bool
    n_passes: int
    scaler: ScalerState | None = None

    def margin(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ShapeMismatch(
                f"model expects {self.support_vectors.shape[1]} features, "
                f"got {X.shape[1]}"
            )
        K = kernel_matrix(self.kernel, X, self.support_vectors)
        return K @ self.alpha - self.rho

    def decide(self, X) -> np.ndarray:
        """+1 inside the normal envelope, -1 outlier; 0 margin counts inside."""
        return np.where(self.margin(X) >= 0.0, 1, -1)

    def to_json_dict(self) -> dict:
        return {
            "kind": "ocsvm",
            "schema_version": 1,
            "kernel": self.kernel.to_json_dict(),
            "config": self.config.to_json_dict(),
            "support_vectors": self.support_vectors,
            "alpha": self.alpha,
            "sv_indices": self.sv_indices,
            "rho": self.rho,
            "converged": self.converged,
            "n_passes": self.n_passes,
            "scaler": None if self.scaler is None else self.scaler.to_json_dict(),
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainedOneClass":
        serialize.require_kind(doc, "ocsvm", 1)
        return cls(
            kernel=KernelSpec.from_json_dict(doc["kernel"]),
            support_vectors=np.array(doc["support_vectors"], dtype=np.float64
                                     ).reshape(len(doc["alpha"]), -1),
            alpha=np.array(doc["alpha"], dtype=np.float64),
            sv_indices=np.array(doc["sv_indices"], dtype=np.int64),
            rho=float(doc["rho"]),
            config=OneClassConfig.from_json_dict(doc["config"]),
            converged=bool(doc["converged"]),
            n_passes=int(doc["n_passes"]),
            scaler=None if doc["scaler"] is None
            else ScalerState.from_json_dict(doc["scaler"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedOneClass":
        return cls.from_json_dict(serialize.loads(text))


def train_one_class(m, config: OneClassConfig | None = None) -> TrainedOneClass:
    """Fit the nu-parameterised one-class envelope on (assumed normal) rows.

    Multipliers live in [0, 1/(nu*n)] and sum to one, so at most a nu
    fraction of training rows can end up outside the envelope (plus a
    small optimisation slack).
    """
    config = config or OneClassConfig()
    X = _as_matrix(m)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("cannot train on zero rows")
    if not np.isfinite(X).all():
        raise NotFinite("training matrix contains non-finite values")

    kernel = resolve_gamma(config.kernel, X)
    K = np.ascontiguousarray(kernel_matrix(kernel, X, X))
    cap = 1.0 / (config.nu * n)
    alpha = np.zeros(n)
    k_full = int(config.nu * n)
    alpha[:k_full] = cap
    if k_full < n:
        alpha[k_full] = 1.0 - k_full * cap
    y = np.ones(n)
    p = np.zeros(n)
    grad = K @ alpha
    box = np.full(n, cap)
    passes, conv = accel.smo_solve(K, y, p, box, alpha, grad,
                                   config.tol, config.max_passes, np.empty(0))
    if not conv:
        warnings.warn(
            f"one-class optimiser stopped after {passes} passes above "
            f"tolerance {config.tol}; model kept but marked unconverged",
            RuntimeWarning,
        )
    rho = _calc_bias(alpha, grad, y, box)
    keep = alpha > 0.0
    return TrainedOneClass(
        kernel=kernel,
        support_vectors=np.array(X[keep]),
        alpha=alpha[keep],
        sv_indices=np.nonzero(keep)[0].astype(np.int64),
        rho=rho,
        config=config,
        converged=bool(conv),
        n_passes=int(passes),
    )


@dataclass(frozen=True)
class GridEntry:
    config: SvmConfig
    mean_f1: float
    fold_f1: tuple[float, ...]


@dataclass(frozen=True)
class GridSearchResult:
    best: SvmConfig
    best_index: int
    entries: tuple[GridEntry, ...]


def _fold_f1(pred: np.ndarray, true: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == -1)))
    fn = int(np.sum((pred == -1) & (true == 1)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def grid_search(m, labels, grid, folds: int = 3, seed: int = 0,
                threads: int = 1) -> GridSearchResult:
    """Pick the config with the best mean F1 under stratified k-fold CV.

    Ties prefer the smaller C, then the earlier grid position.  Fold
    assignment is seeded, so the whole search is reproducible; configs and
    folds are independent, so they can be evaluated in parallel.
    """
    grid = list(grid)
    if not grid:
        raise InvalidConfig("empty grid")
    X = _as_matrix(m)
    y = _norm_labels(labels)
    fold_tests = stratified_kfold(y, folds, seed)
    all_idx = np.arange(X.shape[0])
    tasks = [(ci, fi) for ci in range(len(grid)) for fi in range(folds)]

    def run(task):
        ci, fi = task
        test = fold_tests[fi]
        train = np.setdiff1d(all_idx, test)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = train_svm(X[train], y[train], grid[ci])
        return _fold_f1(model.decide(X[test]), y[test])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(t) for t in tasks]

    entries = []
    for ci, cfg in enumerate(grid):
        fold_scores = tuple(scores[ci * folds + fi] for fi in range(folds))
        entries.append(GridEntry(cfg, float(np.mean(fold_scores)), fold_scores))
    best_i = 0
    for i in range(1, len(entries)):
        cur, best = entries[i], entries[best_i]
        if cur.mean_f1 > best.mean_f1 or (
                cur.mean_f1 == best.mean_f1 and cur.config.C < best.config.C):
            best_i = i
    return GridSearchResult(entries[best_i].config, best_i, tuple(entries))
