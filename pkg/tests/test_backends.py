"""The numpy and numba kernel backends must agree bit for bit."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from otids import accel
from otids.accel import _numpy


def test_backend_name_reports_selected_impl():
    assert accel.backend_name() in ("numpy", "numba")


def _random_sorted_column(rng):
    n = int(rng.integers(2, 40))
    n_classes = int(rng.integers(2, 5))
    vals = rng.normal(size=n)
    if rng.random() < 0.5:
        # quantize to force duplicate values at candidate boundaries
        vals = np.round(vals * 2.0) / 2.0
    order = np.argsort(vals, kind="stable")
    values = np.ascontiguousarray(vals[order])
    labels = rng.integers(0, n_classes, size=n).astype(np.int64)
    min_leaf = int(rng.integers(1, 4))
    return values, labels, n_classes, min_leaf


def test_split_scan_backends_bitwise_equal():
    _numba = pytest.importorskip("otids.accel._numba")
    rng = np.random.default_rng(90)
    for _ in range(50):
        values, labels, n_classes, min_leaf = _random_sorted_column(rng)
        a = _numpy.split_scan(values, labels, n_classes, min_leaf)
        b = _numba.split_scan(values, labels, n_classes, min_leaf)
        assert int(a[0]) == int(b[0])
        assert float(a[1]) == float(b[1])
        assert float(a[2]) == float(b[2])


def test_tree_apply_backends_agree_on_trained_trees():
    _numba = pytest.importorskip("otids.accel._numba")
    from otids.forest import ForestConfig, train_forest

    rng = np.random.default_rng(91)
    X = rng.normal(size=(120, 4))
    y = (X[:, 1] + 0.3 * X[:, 3] > 0).astype(np.int64)
    forest = train_forest(X, y, ForestConfig(n_trees=5, seed=2))
    Xq = rng.normal(size=(200, 4))
    for tree in forest.trees:
        out_np = np.empty(200, dtype=np.int64)
        out_nb = np.empty(200, dtype=np.int64)
        _numpy.tree_apply(tree.feature, tree.threshold, tree.left,
                          tree.right, Xq, out_np)
        _numba.tree_apply(tree.feature, tree.threshold, tree.left,
                          tree.right, Xq, out_nb)
        assert np.array_equal(out_np, out_nb)


def _smo_instance(rng):
    n = int(rng.integers(6, 25))
    X = rng.normal(size=(n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    K = X @ X.T
    p = -np.ones(n)
    box = np.full(n, float(rng.uniform(0.5, 5.0)))
    return K, y, p, box


def test_smo_solve_backends_bitwise_equal():
    _numba = pytest.importorskip("otids.accel._numba")
    rng = np.random.default_rng(92)
    for _ in range(30):
        K, y, p, box = _smo_instance(rng)
        n = y.shape[0]
        results = []
        for impl in (_numpy, _numba):
            alpha = np.zeros(n)
            grad = p.copy()
            deltas = np.zeros(500)
            passes, converged = impl.smo_solve(
                K, y, p, box, alpha, grad, 1e-4, 500, deltas)
            results.append((alpha, grad, deltas, passes, converged))
        a, b = results
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[2], b[2])
        assert a[3] == b[3] and a[4] == b[4]


def _run_with_backend(backend, code):
    env = dict(os.environ, OTIDS_BACKEND=backend)
    proc = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_env_flag_selects_backend():
    code = "from otids import accel; print(accel.backend_name())"
    assert _run_with_backend("numpy", code).strip() == "numpy"
    pytest.importorskip("numba")
    assert _run_with_backend("numba", code).strip() == "numba"


def test_env_flag_rejects_unknown_backend():
    env = dict(os.environ, OTIDS_BACKEND="gpu")
    proc = subprocess.run(
        [sys.executable, "-c", "import otids.accel"],
        env=env, capture_output=True, text=True, timeout=120)
    assert proc.returncode != 0
    assert "OTIDS_BACKEND" in proc.stderr


_TRAIN_CODE = """
import numpy as np
from otids import serialize
from otids.forest import ForestConfig, train_forest
from otids.svm import KernelSpec, SvmConfig, train_svm
rng = np.random.default_rng(5)
X = rng.normal(size=(80, 3))
y = (X[:, 0] - X[:, 2] > 0).astype(np.int64)
forest = train_forest(X, y, ForestConfig(n_trees=8, seed=4))
svm = train_svm(X, y, SvmConfig(kernel=KernelSpec("rbf"), C=2.0, seed=4))
print(serialize.dumps({"forest": forest.to_json_dict(),
                       "svm": svm.to_json_dict()}))
"""


def test_backends_train_identical_models():
    pytest.importorskip("numba")
    out_np = _run_with_backend("numpy", _TRAIN_CODE)
    out_nb = _run_with_backend("numba", _TRAIN_CODE)
    assert out_np == out_nb
    doc = json.loads(out_np)
    assert doc["forest"]["kind"] == "forest"
