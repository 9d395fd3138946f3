import itertools

import numpy as np
import pytest

from quantseed.learners import (
    CvReport,
    ModelKind,
    SelectionRule,
    TrainedModel,
    cross_validate,
    fit_forest,
    fit_logit,
    fit_model,
    fit_tree,
    select_stocks,
)
from quantseed.mathkit import CumulativePercentileState


def _names(p):
    return [f"f{i}" for i in range(p)]


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def test_logit_separable_saturates_and_flags():
    X = np.array([[-1.0], [1.0]] * 500)
    y = np.array([0, 1] * 500)
    model = fit_logit(X, y, _names(1))
    probs = model.predict_proba(X)
    assert model.separated
    assert (probs[y == 1] >= 0.99).all()
    assert (probs[y == 0] <= 0.01).all()


def test_logit_all_labels_zero_predicts_near_zero():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = np.zeros(200, dtype=int)
    model = fit_logit(X, y, _names(3))
    assert (model.predict_proba(X) < 0.01).all()


def test_logit_balanced_zero_variance_features_half():
    X = np.zeros((100, 2))
    y = np.array([0, 1] * 50)
    model = fit_logit(X, y, _names(2))
    assert model.predict_proba(X) == pytest.approx(np.full(100, 0.5), abs=1e-9)


def test_logit_recovers_known_coefficients():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5000, 2))
    eta = 0.5 + 1.2 * X[:, 0] - 0.8 * X[:, 1]
    y = (rng.random(5000) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    model = fit_logit(X, y, _names(2))
    coef = np.asarray(model.params["coef"])
    assert coef == pytest.approx([0.5, 1.2, -0.8], abs=0.15)
    assert not model.separated


def test_logit_monotone_in_coefficient_direction():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(500, 2))
    eta = 1.0 * X[:, 0] - 1.0 * X[:, 1]
    y = (rng.random(500) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    model = fit_logit(X, y, _names(2))
    coef = np.asarray(model.params["coef"])
    base = model.predict_proba(np.array([[0.0, 0.0]]))[0]
    up0 = model.predict_proba(np.array([[1.0, 0.0]]))[0]
    up1 = model.predict_proba(np.array([[0.0, 1.0]]))[0]
    assert (up0 > base) == (coef[1] > 0)
    assert (up1 > base) == (coef[2] > 0)


# ---------------------------------------------------------------------------
# classification tree
# ---------------------------------------------------------------------------

def oracle_best_split(X, y):
    """Exhaustive split search over all features and adjacent midpoints."""
    def gini(labels):
        if len(labels) == 0:
            return 0.0
        p = labels.mean()
        return 1.0 - p * p - (1.0 - p) * (1.0 - p)

    best = None
    n = len(y)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2.0
            left = y[X[:, f] <= thr]
            right = y[X[:, f] > thr]
            decrease = gini(y) - (len(left) * gini(left) + len(right) * gini(right)) / n
            if best is None or decrease > best[0] + 1e-15:
                best = (decrease, f, thr)
    return best


def test_tree_pure_labels_single_leaf():
    X = np.arange(40, dtype=float)[:, None]
    y = np.ones(40, dtype=int)
    model = fit_tree(X, y, _names(1))
    assert model.params["root"]["leaf"]
    assert model.predict_proba(X) == pytest.approx(np.ones(40))


def test_tree_recovers_single_split():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.uniform(0, 4, 60), rng.normal(size=60)])
    y = (X[:, 0] > 2.0).astype(int)
    model = fit_tree(X, y, _names(2))
    root = model.params["root"]
    assert not root["leaf"]
    _, f_oracle, thr_oracle = oracle_best_split(X, y)
    assert root["feature"] == f_oracle
    assert root["threshold"] == pytest.approx(thr_oracle)
    assert root["left"]["leaf"] and root["right"]["leaf"]
    assert model.predict_proba(X) == pytest.approx(y.astype(float))


def test_tree_conflicting_duplicates_leaf_fraction():
    X = np.zeros((30, 1))
    y = np.array([1] * 10 + [0] * 20)
    model = fit_tree(X, y, _names(1))
    assert model.params["root"]["leaf"]
    assert model.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(1 / 3)


def test_tree_piecewise_constant_within_leaf():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 4, size=(80, 1))
    y = (X[:, 0] > 2.0).astype(int)
    model = fit_tree(X, y, _names(1))
    thr = model.params["root"]["threshold"]
    # perturb inside the left cell: prediction unchanged
    lo = model.predict_proba(np.array([[thr - 1.0]]))[0]
    lo2 = model.predict_proba(np.array([[thr - 0.3]]))[0]
    assert lo == lo2


def test_tree_respects_min_node_size():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(19, 2))
    y = rng.integers(0, 2, size=19)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    model = fit_tree(X, y, _names(2))
    assert model.params["root"]["leaf"]  # 19 < min node size 20


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

def _noisy_task(rng, n=300):
    X = rng.normal(size=(n, 6))
    signal = X[:, 0] + 0.8 * X[:, 1] * (X[:, 2] > 0) - 0.6 * X[:, 3]
    y = ((signal + rng.normal(scale=1.2, size=n)) > 0).astype(int)
    return X, y


def test_forest_deterministic_given_seed():
    rng = np.random.default_rng(6)
    X, y = _noisy_task(rng)
    a = fit_forest(X, y, _names(6), seed=42)
    b = fit_forest(X, y, _names(6), seed=42)
    assert a.to_json() == b.to_json()
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


def test_forest_pure_labels_extreme_probability():
    X = np.arange(50, dtype=float)[:, None]
    assert fit_forest(X, np.ones(50, dtype=int), _names(1), seed=0).predict_proba(X) == pytest.approx(
        np.ones(50)
    )
    assert fit_forest(X, np.zeros(50, dtype=int), _names(1), seed=0).predict_proba(X) == pytest.approx(
        np.zeros(50)
    )


def test_forest_probability_is_mean_of_trees():
    rng = np.random.default_rng(7)
    X, y = _noisy_task(rng)
    model = fit_forest(X, y, _names(6), seed=1)
    per_tree = model.tree_probabilities(X[:20])
    assert per_tree.shape[0] == 21
    np.testing.assert_allclose(per_tree.mean(axis=0), model.predict_proba(X[:20]), atol=1e-12)


def test_forest_beats_single_tree_on_average():
    # empirical oracle: average held-out accuracy over 20 seeds
    forest_acc = []
    tree_acc = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        X, y = _noisy_task(rng, n=400)
        Xtr, ytr, Xte, yte = X[:250], y[:250], X[250:], y[250:]
        forest = fit_forest(Xtr, ytr, _names(6), seed=seed)
        tree = fit_tree(Xtr, ytr, _names(6))
        forest_acc.append((((forest.predict_proba(Xte) > 0.5).astype(int)) == yte).mean())
        tree_acc.append((((tree.predict_proba(Xte) > 0.5).astype(int)) == yte).mean())
    assert np.mean(forest_acc) >= np.mean(tree_acc)


def test_learners_row_order_invariant():
    rng = np.random.default_rng(8)
    X, y = _noisy_task(rng, n=200)
    perm = rng.permutation(200)
    for kind in (ModelKind.LOGIT, ModelKind.TREE, ModelKind.FOREST):
        a = fit_model(kind, X, y, _names(6), seed=3)
        b = fit_model(kind, X[perm], y[perm], _names(6), seed=3)
        np.testing.assert_array_equal(a.predict_proba(X[:25]), b.predict_proba(X[:25]))


# ---------------------------------------------------------------------------
# serialization / schema hash
# ---------------------------------------------------------------------------

def test_model_roundtrip_json():
    rng = np.random.default_rng(9)
    X, y = _noisy_task(rng, n=120)
    model = fit_forest(X, y, _names(6), seed=5)
    clone = TrainedModel.from_json(model.to_json())
    np.testing.assert_array_equal(clone.predict_proba(X[:10]), model.predict_proba(X[:10]))


def test_predict_rejects_schema_mismatch():
    rng = np.random.default_rng(10)
    X, y = _noisy_task(rng, n=100)
    model = fit_tree(X, y, _names(6))
    with pytest.raises(ValueError, match="schema"):
        model.predict_proba(X[:5], feature_names=["wrong"] * 6)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def test_cv_equal_folds_of_ten():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(100, 3))
    y = rng.integers(0, 2, size=100)
    report = cross_validate(X, y, _names(3), ModelKind.LOGIT, seed=1)
    counts = np.bincount(report.fold_of_example, minlength=10)
    assert (counts == 10).all()


def test_cv_same_seed_same_assignment():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(97, 3))
    y = rng.integers(0, 2, size=97)
    a = cross_validate(X, y, _names(3), ModelKind.TREE, seed=9)
    b = cross_validate(X, y, _names(3), ModelKind.TREE, seed=9)
    np.testing.assert_array_equal(a.fold_of_example, b.fold_of_example)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_cv_pooled_predictions_cover_everything():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(105, 3))
    y = rng.integers(0, 2, size=105)
    report = cross_validate(X, y, _names(3), ModelKind.LOGIT, seed=2)
    assert report.scores.shape == (105,)
    assert np.isfinite(report.scores).all()
    assert set(report.fold_of_example) == set(range(10))


# ---------------------------------------------------------------------------
# stock selection
# ---------------------------------------------------------------------------

def test_select_prob_gt_50():
    mask = select_stocks([0.4, 0.6], SelectionRule.PROB_GT_50)
    assert mask.tolist() == [False, True]


def test_select_exactly_half_excluded():
    mask = select_stocks([0.5, 0.500000001], SelectionRule.PROB_GT_50)
    assert mask.tolist() == [False, True]


def test_select_top_decile_matches_counting_oracle():
    rng = np.random.default_rng(14)
    state = CumulativePercentileState()
    seen = []
    for _ in range(5):
        probs = rng.random(30)
        mask = select_stocks(probs, SelectionRule.TOP_DECILE, decile_state=state)
        seen.extend(probs.tolist())
        for p, selected in zip(probs, mask):
            frac = sum(1 for s in seen if s <= p) / len(seen)
            assert selected == (frac >= 0.9)


def test_select_top_decile_requires_state():
    with pytest.raises(ValueError):
        select_stocks([0.9], SelectionRule.TOP_DECILE)
