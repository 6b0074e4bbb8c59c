"""Kernel machine: analytic oracles, dual constraints, grid search."""

import dataclasses
import math

import numpy as np
import pytest

from otids.errors import (
    DegenerateLabels,
    EmptyInput,
    InvalidConfig,
    NotFinite,
    ShapeMismatch,
)
from otids.svm import (
    KernelSpec,
    OneClassConfig,
    SvmConfig,
    TrainedOneClass,
    TrainedSvm,
    balanced_weights,
    grid_search,
    kernel_eval,
    kkt_residuals,
    resolve_gamma,
    train_one_class,
    train_svm,
)

EQUAL = {0: 1.0, 1: 1.0}


# -- kernels --------------------------------------------------------------------


def test_rbf_kernel_at_zero_distance():
    spec = KernelSpec(kind="rbf", gamma=0.7)
    assert kernel_eval(spec, [1.5, -2.0], [1.5, -2.0]) == 1.0


def test_linear_kernel_dot_product():
    assert kernel_eval(KernelSpec(kind="linear"), [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_rbf_kernel_hand_value():
    # squared distance 4, gamma 0.5 -> exp(-2)
    spec = KernelSpec(kind="rbf", gamma=0.5)
    got = kernel_eval(spec, [0.0, 0.0], [2.0, 0.0])
    assert got == pytest.approx(math.exp(-2), abs=1e-15)
    assert got == pytest.approx(0.1353352832366127, abs=1e-15)


def test_polynomial_kernel_hand_value():
    # (0.5 * 11 + 1)^2 = 6.5^2
    spec = KernelSpec(kind="poly", gamma=0.5, degree=2, coef0=1.0)
    assert kernel_eval(spec, [1.0, 2.0], [3.0, 4.0]) == 42.25


def test_kernel_dimension_mismatch():
    with pytest.raises(ShapeMismatch):
        kernel_eval(KernelSpec(kind="linear"), [1.0], [1.0, 2.0])


def test_default_gamma_from_feature_variance():
    # unit-variance columns: gamma = 1 / (2 features * 1.0)
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    spec = resolve_gamma(KernelSpec(kind="rbf"), X)
    assert spec.gamma == 0.5
    fixed = KernelSpec(kind="rbf", gamma=3.0)
    assert resolve_gamma(fixed, X).gamma == 3.0


def test_balanced_weights_inverse_frequency():
    y = np.r_[np.zeros(80), np.ones(20)]
    assert balanced_weights(y) == {0: 0.625, 1: 2.5}


def test_config_domain_checks():
    with pytest.raises(InvalidConfig):
        SvmConfig(C=0.0)
    with pytest.raises(InvalidConfig):
        SvmConfig(tol=-1.0)
    with pytest.raises(InvalidConfig):
        SvmConfig(class_weights={0: -1.0})
    with pytest.raises(InvalidConfig):
        SvmConfig(class_weights="sometimes")
    with pytest.raises(InvalidConfig):
        OneClassConfig(nu=0.0)
    with pytest.raises(InvalidConfig):
        OneClassConfig(nu=1.5)


# -- two-point analytic solution ---------------------------------------------------


def _two_point_model():
    X = np.array([[1.0], [-1.0]])
    y = np.array([1, 0])
    cfg = SvmConfig(kernel=KernelSpec(kind="linear"), C=10.0,
                    class_weights=EQUAL)
    return train_svm(X, y, cfg)


def test_two_point_multipliers_and_bias():
    # symmetric dual: maximize a1 + a2 - 0.5(a1 + a2)^2 under a1 = a2,
    # giving a1 = a2 = 1/2 and b = 0
    model = _two_point_model()
    assert len(model.alpha) == 2
    assert model.alpha == pytest.approx([0.5, 0.5], abs=1e-6)
    assert model.b == pytest.approx(0.0, abs=1e-6)


def test_two_point_margins_and_boundary():
    model = _two_point_model()
    assert model.margin([[1.0]])[0] == pytest.approx(1.0, abs=1e-6)
    assert model.margin([[-1.0]])[0] == pytest.approx(-1.0, abs=1e-6)
    assert model.decide([[0.5]])[0] == 1
    assert model.decide([[-0.5]])[0] == -1


def test_zero_margin_decides_positive():
    # single support vector placed so the margin is exactly zero
    model = TrainedSvm(
        kernel=KernelSpec(kind="linear"),
        support_vectors=np.array([[1.0]]),
        alpha=np.array([1.0]),
        sv_labels=np.array([1.0]),
        sv_indices=np.array([0]),
        b=1.0,
        config=SvmConfig(kernel=KernelSpec(kind="linear")),
        class_weights={-1: 1.0, 1: 1.0},
        converged=True,
        n_passes=1,
        final_gap=0.0,
    )
    assert model.margin([[1.0]])[0] == 0.0
    assert model.decide([[1.0]])[0] == 1


# -- separability facts --------------------------------------------------------------


XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([0, 0, 1, 1])


def test_xor_linear_kernel_caps_at_three_quarters():
    cfg = SvmConfig(kernel=KernelSpec(kind="linear"), C=10.0,
                    class_weights=EQUAL)
    model = train_svm(XOR_X, XOR_Y, cfg)
    pred = model.decide(XOR_X)
    truth = np.where(XOR_Y == 1, 1, -1)
    assert np.mean(pred == truth) <= 0.75


def test_xor_rbf_kernel_separates():
    cfg = SvmConfig(kernel=KernelSpec(kind="rbf"), C=10.0,
                    class_weights=EQUAL)
    model = train_svm(XOR_X, XOR_Y, cfg)
    pred = model.decide(XOR_X)
    truth = np.where(XOR_Y == 1, 1, -1)
    assert np.mean(pred == truth) == 1.0


def _blobs(rng, n_pos=20, n_neg=20, gap=4.0, d=2):
    X = np.r_[rng.normal(size=(n_pos, d)) + gap / 2,
              rng.normal(size=(n_neg, d)) - gap / 2]
    y = np.r_[np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)]
    return X, y


def test_support_vectors_classified_correctly_when_separable():
    rng = np.random.default_rng(71)
    X, y = _blobs(rng)
    cfg = SvmConfig(kernel=KernelSpec(kind="linear"), C=50.0,
                    class_weights=EQUAL)
    model = train_svm(X, y, cfg)
    pred = model.decide(model.support_vectors)
    assert np.array_equal(pred, model.sv_labels.astype(np.int64))


# -- dual constraints over random instances --------------------------------------------


def _random_training_instance(rng):
    d = int(rng.integers(1, 5))
    n_pos = int(rng.integers(4, 20))
    n_neg = int(rng.integers(4, 20))
    gap = float(rng.uniform(0.5, 4.0))
    X, y = _blobs(rng, n_pos, n_neg, gap, d)
    kind = ("linear", "rbf", "poly")[int(rng.integers(3))]
    kernel = KernelSpec(kind=kind, degree=2, coef0=1.0) if kind == "poly" \
        else KernelSpec(kind=kind)
    weights = "balanced" if rng.random() < 0.5 else \
        {0: float(rng.uniform(0.5, 2.0)), 1: float(rng.uniform(0.5, 4.0))}
    cfg = SvmConfig(kernel=kernel, C=float(rng.uniform(0.1, 10.0)),
                    class_weights=weights, seed=int(rng.integers(1 << 30)))
    return X, y, cfg


def test_dual_feasibility_and_kkt_property():
    rng = np.random.default_rng(72)
    n_converged = 0
    for _ in range(110):
        X, y, cfg = _random_training_instance(rng)
        model = train_svm(X, y, cfg)
        # multipliers inside their per-class boxes, and only stored when positive
        assert np.all(model.alpha > 0)
        box = cfg.C * np.array(
            [model.class_weights[int(l)] for l in model.sv_labels])
        assert np.all(model.alpha <= box + 1e-9)
        assert abs(float(np.dot(model.alpha, model.sv_labels))) <= 1e-6
        if model.converged:
            n_converged += 1
            res = kkt_residuals(model, X, y)
            assert res.max() <= cfg.tol + 1e-9
    assert n_converged >= 100  # these instances are tiny; all should converge


def test_objective_never_worsens_in_debug_mode():
    # the tracked deltas are changes of the minimised form 1/2 a'Qa - sum(a),
    # so a working descent never records a positive one
    rng = np.random.default_rng(73)
    for _ in range(12):
        X, y, cfg = _random_training_instance(rng)
        model = train_svm(X, y, cfg, debug=True)
        assert model.objective_deltas is not None
        assert len(model.objective_deltas) == model.n_passes
        assert np.all(model.objective_deltas <= 1e-9)


def test_free_support_vectors_sit_on_their_margin():
    rng = np.random.default_rng(74)
    X, y = _blobs(rng, 25, 25, gap=1.5)
    cfg = SvmConfig(kernel=KernelSpec(kind="rbf"), C=2.0, class_weights=EQUAL)
    model = train_svm(X, y, cfg)
    assert model.converged
    f = model.margin(model.support_vectors)
    box = cfg.C * np.array([model.class_weights[int(l)] for l in model.sv_labels])
    free = (model.alpha > 1e-8) & (model.alpha < box - 1e-8)
    assert free.any()
    assert np.max(np.abs(model.sv_labels[free] * f[free] - 1.0)) <= cfg.tol + 1e-9


def test_raising_positive_weight_never_lowers_recall():
    rng = np.random.default_rng(75)
    X = np.r_[rng.normal(size=(160, 2)),
              rng.normal(size=(40, 2)) + 1.2]
    y = np.r_[np.zeros(160, dtype=np.int64), np.ones(40, dtype=np.int64)]
    recalls = []
    for w in (1.0, 3.0, 9.0):
        cfg = SvmConfig(kernel=KernelSpec(kind="rbf"), C=1.0,
                        class_weights={0: 1.0, 1: w})
        model = train_svm(X, y, cfg)
        pred = model.decide(X)
        recalls.append(float(np.mean(pred[y == 1] == 1)))
    assert recalls[0] <= recalls[1] + 1e-12
    assert recalls[1] <= recalls[2] + 1e-12
    assert recalls[0] < 1.0  # the ladder is only informative if w=1 misses some


def test_decision_invariant_under_sv_permutation():
    rng = np.random.default_rng(76)
    X, y = _blobs(rng, 30, 30, gap=1.0)
    model = train_svm(X, y, SvmConfig(kernel=KernelSpec(kind="rbf"), C=3.0))
    perm = rng.permutation(len(model.alpha))
    shuffled = dataclasses.replace(
        model,
        support_vectors=model.support_vectors[perm],
        alpha=model.alpha[perm],
        sv_labels=model.sv_labels[perm],
        sv_indices=model.sv_indices[perm],
    )
    grid = rng.normal(size=(50, 2)) * 2
    assert np.array_equal(model.decide(grid), shuffled.decide(grid))
    assert np.allclose(model.margin(grid), shuffled.margin(grid), atol=1e-12)


def test_degenerate_and_nonfinite_inputs():
    X = np.zeros((4, 2))
    with pytest.raises(DegenerateLabels):
        train_svm(X, np.ones(4, dtype=np.int64), SvmConfig())
    bad = np.array([[np.nan, 0.0], [1.0, 2.0]])
    with pytest.raises(NotFinite):
        train_svm(bad, np.array([0, 1]), SvmConfig())
    with pytest.raises(EmptyInput):
        train_svm(np.zeros((0, 2)), np.zeros(0), SvmConfig())


def test_margin_rejects_wrong_width():
    model = _two_point_model()
    with pytest.raises(ShapeMismatch):
        model.margin(np.zeros((2, 3)))


def test_svm_serialization_round_trip():
    rng = np.random.default_rng(77)
    X, y = _blobs(rng, 15, 15, gap=1.0)
    model = train_svm(X, y, SvmConfig(kernel=KernelSpec(kind="rbf"), C=2.0))
    back = TrainedSvm.from_json(model.to_json())
    grid = rng.normal(size=(20, 2))
    assert np.array_equal(back.margin(grid), model.margin(grid))
    assert back.to_json() == model.to_json()


# -- grid search -------------------------------------------------------------------


def test_grid_of_one_returns_that_config():
    rng = np.random.default_rng(81)
    X, y = _blobs(rng, 12, 12)
    cfg = SvmConfig(kernel=KernelSpec(kind="rbf"), C=2.0, class_weights=EQUAL)
    result = grid_search(X, y, [cfg], folds=2, seed=1)
    assert result.best == cfg
    assert result.best_index == 0
    assert len(result.entries) == 1


def test_separating_config_beats_nonseparating():
    # labels follow the XOR pattern of the first two columns, so the
    # linear candidate cannot win against the rbf one
    rng = np.random.default_rng(82)
    corners = XOR_X[rng.integers(0, 4, size=80)]
    X = corners + rng.normal(scale=0.05, size=(80, 2))
    y = (np.round(corners[:, 0]) != np.round(corners[:, 1])).astype(np.int64)
    linear = SvmConfig(kernel=KernelSpec(kind="linear"), C=5.0,
                       class_weights=EQUAL)
    rbf = SvmConfig(kernel=KernelSpec(kind="rbf", gamma=2.0), C=5.0,
                    class_weights=EQUAL)
    result = grid_search(X, y, [linear, rbf], folds=3, seed=2)
    assert result.best_index == 1
    assert result.entries[1].mean_f1 > result.entries[0].mean_f1


def test_two_fold_scores_match_hand_computation():
    # 6 positives at x = 10..15, 4 negatives at x = -13..-10.  Stratified
    # halves put 3 positives and 2 negatives in each training fold.
    #
    # Candidate 0, rbf gamma=100: every cross-point kernel value is at most
    # exp(-100), so each training point is a free support vector with
    # alpha_i = 1 + y_i*b, and dual feasibility forces
    # b = -(n_pos - n_neg)/n = -1/5.  Every held-out point then scores
    # margin = -b > 0: all-positive predictions, giving tp=3 fp=2 fn=0,
    # precision 3/5, recall 1, f1 = 0.75 in both folds.
    #
    # Candidate 1, linear: the clusters are separated by a margin several
    # times wider than any fold-to-fold boundary shift, so both folds
    # classify perfectly: f1 = 1.0.
    X = np.array([[10.0], [11.0], [12.0], [13.0], [14.0], [15.0],
                  [-10.0], [-11.0], [-12.0], [-13.0]])
    y = np.array([1, 1, 1, 1, 1, 1, 0, 0, 0, 0])
    sharp = SvmConfig(kernel=KernelSpec(kind="rbf", gamma=100.0), C=10.0,
                      class_weights=EQUAL)
    linear = SvmConfig(kernel=KernelSpec(kind="linear"), C=10.0,
                       class_weights=EQUAL)
    result = grid_search(X, y, [sharp, linear], folds=2, seed=5)
    assert result.entries[0].fold_f1 == pytest.approx((0.75, 0.75), abs=1e-9)
    assert result.entries[0].mean_f1 == pytest.approx(0.75, abs=1e-9)
    assert result.entries[1].fold_f1 == (1.0, 1.0)
    assert result.entries[1].mean_f1 == 1.0
    assert result.best_index == 1


def test_grid_tie_breaks_on_lower_cost_then_order():
    rng = np.random.default_rng(83)
    X, y = _blobs(rng, 10, 10, gap=6.0)  # separable: every candidate scores 1.0
    high = SvmConfig(kernel=KernelSpec(kind="linear"), C=2.0,
                     class_weights=EQUAL)
    low = SvmConfig(kernel=KernelSpec(kind="linear"), C=0.5,
                    class_weights=EQUAL)
    result = grid_search(X, y, [high, low], folds=2, seed=3)
    assert result.entries[0].mean_f1 == result.entries[1].mean_f1 == 1.0
    assert result.best == low
    result = grid_search(X, y, [low, high, low], folds=2, seed=3)
    assert result.best_index == 0  # earlier grid position wins among equals


def test_grid_search_deterministic():
    rng = np.random.default_rng(84)
    X, y = _blobs(rng, 15, 15, gap=1.0)
    grid = [SvmConfig(kernel=KernelSpec(kind="rbf"), C=c) for c in (0.5, 2.0)]
    a = grid_search(X, y, grid, folds=3, seed=9)
    b = grid_search(X, y, grid, folds=3, seed=9)
    assert a.best_index == b.best_index
    assert all(x.fold_f1 == y_.fold_f1 for x, y_ in zip(a.entries, b.entries))


def test_grid_search_threads_do_not_change_result():
    rng = np.random.default_rng(85)
    X, y = _blobs(rng, 15, 15, gap=1.0)
    grid = [SvmConfig(kernel=KernelSpec(kind="rbf"), C=c) for c in (0.5, 1.0, 2.0)]
    a = grid_search(X, y, grid, folds=2, seed=4, threads=1)
    b = grid_search(X, y, grid, folds=2, seed=4, threads=3)
    assert a.best_index == b.best_index
    assert all(x.fold_f1 == y_.fold_f1 for x, y_ in zip(a.entries, b.entries))


# -- one-class variant ----------------------------------------------------------------


def test_one_class_nu_bound_on_gaussian_cluster():
    rng = np.random.default_rng(91)
    X = rng.normal(size=(500, 2))
    model = train_one_class(X, OneClassConfig(nu=0.05))
    frac = float(np.mean(model.decide(X) == -1))
    assert 0.0 <= frac <= 0.10


def test_one_class_flags_far_point():
    rng = np.random.default_rng(92)
    X = rng.normal(size=(300, 2))
    model = train_one_class(X, OneClassConfig(nu=0.05))
    assert model.decide([[10.0, 10.0]])[0] == -1
    assert model.decide([[0.0, 0.0]])[0] == 1


def test_one_class_dual_constraints_property():
    # sum(alpha) = 1 with alpha <= 1/(nu*n) forces at least ceil(nu*n)
    # support vectors; any point more than the tolerance outside the
    # envelope must sit at the cap, and at most floor(nu*n) rows can
    rng = np.random.default_rng(93)
    for _ in range(100):
        n = int(rng.integers(60, 160))
        nu = float(rng.choice([0.05, 0.1, 0.2, 0.5]))
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        cfg = OneClassConfig(nu=nu, seed=int(rng.integers(1 << 30)))
        model = train_one_class(X, cfg)
        assert model.converged
        cap = 1.0 / (nu * n)
        assert np.all(model.alpha > 0)
        assert np.all(model.alpha <= cap + 1e-12)
        assert abs(float(model.alpha.sum()) - 1.0) <= 1e-9
        assert len(model.alpha) >= math.ceil(nu * n - 1e-9)
        outside = int(np.sum(model.margin(X) < -1.01 * cfg.tol))
        assert outside <= math.floor(nu * n)


def test_one_class_empty_input():
    with pytest.raises(EmptyInput):
        train_one_class(np.zeros((0, 2)), OneClassConfig(nu=0.1))


def test_one_class_serialization_round_trip():
    rng = np.random.default_rng(94)
    X = rng.normal(size=(120, 2))
    model = train_one_class(X, OneClassConfig(nu=0.1))
    back = TrainedOneClass.from_json(model.to_json())
    grid = rng.normal(size=(30, 2)) * 3
    assert np.array_equal(back.margin(grid), model.margin(grid))
    assert back.to_json() == model.to_json()
