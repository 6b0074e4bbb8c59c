"""Decision trees and bootstrap-aggregated forests.

Trees are grown CART-style on Gini impurity: at each node a seeded random
subset of features is scanned for the threshold with the largest impurity
decrease, ties breaking toward the lowest feature index and then the
lowest threshold.  The forest predicts by majority vote (ties toward the
lowest class label) and reports feature relevance both as accumulated
impurity decrease and as permutation accuracy drop.

All randomness flows from the config seed: per-tree generators are derived
from (seed, tree index), so results are identical no matter how many
threads build the forest.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import accel, serialize
from .errors import (
    DegenerateLabels,
    EmptyInput,
    EmptyNode,
    InvalidConfig,
    NotFinite,
    ShapeMismatch,
)
from .preprocess import FeatureMatrix


def gini(histogram) -> float:
    """Gini impurity 1 - sum(p_k^2) of a class-count histogram."""
    h = np.asarray(histogram, dtype=np.float64)
    if h.ndim != 1 or (h < 0).any():
        raise InvalidConfig("histogram must be a 1-D array of nonnegative counts")
    n = h.sum()
    if n == 0:
        raise EmptyNode("impurity of an empty histogram is undefined")
    p = h / n
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class SplitDecision:
    feature_index: int
    threshold: float
    decrease: float


def _as_array(m) -> np.ndarray:
    if isinstance(m, FeatureMatrix):
        m.require_complete("tree training")
        return m.data
    return np.ascontiguousarray(np.asarray(m, dtype=np.float64))


def best_split(m, labels, min_samples_leaf: int = 1,
               features=None) -> SplitDecision | None:
    """Exhaustive best Gini split over the given features (default: all).

    Candidate thresholds are midpoints between consecutive distinct sorted
    values of a feature.  Returns None when no candidate yields a strictly
    positive impurity decrease.
    """
    X = _as_array(m)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyNode("cannot split zero rows")
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch("labels must align with rows")
    classes, yi = np.unique(y, return_inverse=True)
    yi = np.ascontiguousarray(yi.astype(np.int64))
    n_classes = len(classes)
    if features is None:
        features = range(X.shape[1])
    best = None
    for f in features:
        v = np.ascontiguousarray(X[:, f])
        order = np.argsort(v, kind="stable")
        bi, thr, delta = accel.split_scan(
            np.ascontiguousarray(v[order]),
            np.ascontiguousarray(yi[order]),
            n_classes, min_samples_leaf,
        )
        if bi >= 0 and (best is None or delta > best.decrease):
            best = SplitDecision(int(f), float(thr), float(delta))
    return best


@dataclass(frozen=True)
class SplitNode:
    """Nested view of one tree node; leaves carry a class and a histogram."""

    feature_index: int | None = None
    threshold: float | None = None
    left: "SplitNode | None" = None
    right: "SplitNode | None" = None
    prediction: int | None = None
    histogram: tuple[int, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None


@dataclass
class _Tree:
    """Flat array form of one grown tree (leaf_class holds class indices)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    leaf_class: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        accel.tree_apply(self.feature, self.threshold, self.left, self.right,
                         X, out)
        return out


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | str = "sqrt"  # "sqrt", "all" or explicit count
    bootstrap: bool = True
    seed: int = 0

    def resolve_m(self, n_features: int) -> int:
        fps = self.features_per_split
        if fps == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        if fps == "all":
            return n_features
        m = int(fps)
        if not 1 <= m <= n_features:
            raise InvalidConfig(
                f"features_per_split must be in [1, {n_features}], got {fps!r}"
            )
        return m

    def validate(self) -> None:
        if self.n_trees < 1:
            raise InvalidConfig("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfig("max_depth must be None or >= 0")
        if self.min_samples_leaf < 1:
            raise InvalidConfig("min_samples_leaf must be >= 1")
        if self.seed < 0:
            raise InvalidConfig("seed must be nonnegative")
        if isinstance(self.features_per_split, str) and \
                self.features_per_split not in ("sqrt", "all"):
            raise InvalidConfig(
                "features_per_split must be 'sqrt', 'all' or an integer"
            )

    def to_json_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ForestConfig":
        return cls(**doc)


def _tree_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _grow_tree(X, yi, n_classes, cfg: ForestConfig, tree_seed: int):
    """Grow one tree; returns (_Tree, oob_indices, unnormalised importance)."""
    n, d = X.shape
    rng = np.random.default_rng(tree_seed)
    if cfg.bootstrap:
        sample = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), sample)
    else:
        sample = np.arange(n)
        oob = np.empty(0, dtype=np.int64)
    m_try = cfg.resolve_m(d)
    min_leaf = cfg.min_samples_leaf

    feature = [0]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    node_rows = {0: sample}
    counts_list = [None]
    stack = [(0, 0)]  # (node id, depth)
    importance = np.zeros(d)
    n_sample = float(len(sample))

    while stack:
        node, depth = stack.pop()
        rows = node_rows.pop(node)
        y_node = yi[rows]
        counts = np.bincount(y_node, minlength=n_classes)
        counts_list[node] = counts

        splittable = (
            len(rows) >= 2 * min_leaf
            and (cfg.max_depth is None or depth < cfg.max_depth)
            and int((counts > 0).sum()) > 1
        )
        decision = None
        if splittable:
            if m_try < d:
                feats = np.sort(rng.permutation(d)[:m_try])
            else:
                feats = np.arange(d)
            y_c = np.ascontiguousarray(y_node)
            for f in feats:
                v = X[rows, f]
                order = np.argsort(v, kind="stable")
                bi, thr, delta = accel.split_scan(
                    np.ascontiguousarray(v[order]),
                    np.ascontiguousarray(y_c[order]),
                    n_classes, min_leaf,
                )
                if bi >= 0 and (decision is None or delta > decision[2]):
                    decision = (int(f), thr, delta)
        if decision is None:
            feature[node] = -1
            continue

        f, thr, delta = decision
        importance[f] += (len(rows) / n_sample) * delta
        go_left = X[rows, f] <= thr
        left_id = len(feature)
        right_id = left_id + 1
        feature[node] = f
        threshold[node] = thr
        left[node] = left_id
        right[node] = right_id
        for _ in range(2):
            feature.append(0)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts_list.append(None)
        node_rows[left_id] = rows[go_left]
        node_rows[right_id] = rows[~go_left]
        stack.append((right_id, depth + 1))
        stack.append((left_id, depth + 1))

    counts_arr = np.array(counts_list, dtype=np.int64)
    tree = _Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        counts_arr,
        np.argmax(counts_arr, axis=1).astype(np.int64),
    )
    return tree, oob, importance


@dataclass
class TrainedForest:
    """A bagged ensemble plus everything needed to reproduce it."""

    trees: list[_Tree]
    classes: np.ndarray
    n_features: int
    config: ForestConfig
    tree_seeds: list[int]
    gini_importance: np.ndarray
    oob_indices: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = _as_array(X)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeMismatch(
                f"forest expects {self.n_features} feature columns, "
                f"got {X.shape[1] if X.ndim == 2 else X.ndim}"
            )
        return X

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        n = X.shape[0]
        votes = np.zeros((n, self.n_classes), dtype=np.int64)
        rows = np.arange(n)
        for tree in self.trees:
            votes[rows, tree.leaf_class[tree.apply(X)]] += 1
        return votes

    def predict(self, X) -> np.ndarray:
        """Majority vote; ties go to the lowest class label."""
        return self.classes[np.argmax(self.votes(X), axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X) / float(len(self.trees))

    # -- serialization --------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "kind": "forest",
            "schema_version": 1,
            "config": self.config.to_json_dict(),
            "classes": self.classes,
            "n_features": self.n_features,
            "tree_seeds": self.tree_seeds,
            "gini_importance": self.gini_importance,
            "trees": [_tree_to_nested(t, self.classes) for t in self.trees],
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainedForest":
        serialize.require_kind(doc, "forest", 1)
        classes = np.array(doc["classes"], dtype=np.int64)
        trees = [_tree_from_nested(nd, classes) for nd in doc["trees"]]
        return cls(
            trees=trees,
            classes=classes,
            n_features=int(doc["n_features"]),
            config=ForestConfig.from_json_dict(doc["config"]),
            tree_seeds=[int(s) for s in doc["tree_seeds"]],
            gini_importance=np.array(doc["gini_importance"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedForest":
        return cls.from_json_dict(serialize.loads(text))


def _tree_to_nested(tree: _Tree, classes: np.ndarray, node: int = 0) -> dict:
    if tree.feature[node] < 0:
        return {
            "class": int(classes[tree.leaf_class[node]]),
            "histogram": tree.counts[node],
        }
    return {
        "feature": int(tree.feature[node]),
        "threshold": float(tree.threshold[node]),
        "histogram": tree.counts[node],
        "left": _tree_to_nested(tree, classes, int(tree.left[node])),
        "right": _tree_to_nested(tree, classes, int(tree.right[node])),
    }


def _tree_from_nested(doc: dict, classes: np.ndarray) -> _Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def walk(nd: dict) -> int:
        node = len(feature)
        feature.append(0)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append([int(c) for c in nd["histogram"]])
        if "feature" in nd:
            feature[node] = int(nd["feature"])
            threshold[node] = float(nd["threshold"])
            left[node] = walk(nd["left"])
            right[node] = walk(nd["right"])
        else:
            feature[node] = -1
        return node

    walk(doc)
    counts_arr = np.array(counts, dtype=np.int64)
    return _Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        counts_arr,
        np.argmax(counts_arr, axis=1).astype(np.int64),
    )


def tree_nodes(f: TrainedForest, index: int) -> SplitNode:
    """Nested SplitNode view of one tree (handy for inspection and tests)."""
    tree = f.trees[index]

    def walk(node: int) -> SplitNode:
        hist = tuple(int(c) for c in tree.counts[node])
        if tree.feature[node] < 0:
            return SplitNode(prediction=int(f.classes[tree.leaf_class[node]]),
                             histogram=hist)
        return SplitNode(
            feature_index=int(tree.feature[node]),
            threshold=float(tree.threshold[node]),
            left=walk(int(tree.left[node])),
            right=walk(int(tree.right[node])),
            histogram=hist,
        )

    return walk(0)


def train_forest(m, labels, config: ForestConfig | None = None,
                 threads: int = 1) -> TrainedForest:
    """Train a bagged forest.

    Each tree draws a bootstrap sample of n rows (with replacement) from a
    generator seeded by (config.seed, tree index); per-node candidate
    features come from the same generator.  The result is therefore
    identical for any thread count.
    """
    config = config or ForestConfig()
    config.validate()
    X = _as_array(m)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyInput("cannot train on zero rows")
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch("labels must align with rows")
    if not np.isfinite(X).all():
        raise NotFinite("training matrix contains non-finite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabels(
            f"training labels collapse to the single class {classes[0]}"
        )
    yi = np.ascontiguousarray(np.searchsorted(classes, y).astype(np.int64))
    n_classes = len(classes)
    seeds = [_tree_seed(config.seed, t) for t in range(config.n_trees)]

    def build(t: int):
        return _grow_tree(X, yi, n_classes, config, seeds[t])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(build, range(config.n_trees)))
    else:
        results = [build(t) for t in range(config.n_trees)]

    importance = np.zeros(X.shape[1])
    trees = []
    oob = []
    for tree, oob_t, imp_t in results:
        trees.append(tree)
        oob.append(oob_t)
        importance += imp_t
    total = importance.sum()
    if total > 0:
        importance = importance / total
    return TrainedForest(trees, classes, X.shape[1], config, seeds,
                         importance, oob)


def permutation_importance(f: TrainedForest, m, labels, repeats: int = 5,
                           seed: int = 0) -> np.ndarray:
    """Mean accuracy drop when one column is shuffled, per column.

    Evaluate on rows the forest did not memorise (a held-out split or the
    out-of-bag rows) for an honest ranking.
    """
    if repeats < 1:
        raise InvalidConfig("repeats must be >= 1")
    X = f._check(m)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch("labels must align with rows")
    if X.shape[0] == 0:
        raise EmptyInput("no rows to evaluate importance on")
    rng = np.random.default_rng(seed)
    baseline = float(np.mean(f.predict(X) == y))
    out = np.zeros(X.shape[1])
    work = np.array(X)
    for j in range(X.shape[1]):
        accs = []
        for _ in range(repeats):
            perm = rng.permutation(X.shape[0])
            work[:, j] = X[perm, j]
            accs.append(float(np.mean(f.predict(work) == y)))
        work[:, j] = X[:, j]
        out[j] = baseline - float(np.mean(accs))
    return out
