"""From-scratch binary classifiers and the cross-validation harness.

Three learners are implemented directly rather than wrapped from a library
because the selection thresholds, tie-breaking and random streams must be
fully reproducible: maximum-likelihood logistic regression (IRLS), a
CART-style classification tree on Gini impurity, and a random forest of 21
such trees with bootstrap rows and per-split feature subsampling.

All learners canonicalize example order internally, so fits are invariant
to the order rows arrive in.  Forest trees draw from independent random
streams keyed by (seed, tree index), making results independent of any
parallel schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

N_TREES = 21
LOGIT_TOL = 1e-8
LOGIT_MAX_ITER = 100
SEPARATION_COEF_LIMIT = 40.0
TREE_MIN_NODE = 20
TREE_MIN_IMPROVEMENT = 0.01   # fraction of root impurity
TREE_MAX_DEPTH = 30
MODEL_FORMAT_VERSION = 1


class ModelKind(str, Enum):
    LOGIT = "logit"
    TREE = "tree"
    FOREST = "forest"


class SelectionRule(str, Enum):
    PROB_GT_50 = "prob_gt_50"
    TOP_DECILE = "top_decile"


def feature_schema_hash(feature_names) -> str:
    joined = "\x1f".join(feature_names)
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Deterministic row order: lexicographic by features, then label."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(tuple(keys))


def _validate(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y row counts differ")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    return X, y


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fit_logit_params(X: np.ndarray, y: np.ndarray) -> dict:
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    beta = np.zeros(p + 1)
    separated = False
    converged = False
    for _ in range(LOGIT_MAX_ITER):
        eta = design @ beta
        mu = np.clip(_sigmoid(eta), 1e-10, 1.0 - 1e-10)
        w = mu * (1.0 - mu)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        # lstsq keeps degenerate designs (zero-variance columns) well defined
        beta_new, *_ = np.linalg.lstsq(design * sw[:, None], z * sw, rcond=None)
        delta = np.max(np.abs(beta_new - beta))
        beta = beta_new
        if np.max(np.abs(beta)) > SEPARATION_COEF_LIMIT:
            separated = True
            break
        if delta < LOGIT_TOL:
            converged = True
            break
    if not converged and not separated:
        separated = True
    return {"coef": beta.tolist(), "separated": separated}


def _predict_logit(params: dict, X: np.ndarray) -> np.ndarray:
    beta = np.asarray(params["coef"])
    design = np.column_stack([np.ones(X.shape[0]), X])
    return _sigmoid(design @ beta)


# ---------------------------------------------------------------------------
# classification tree
# ---------------------------------------------------------------------------

def _gini(n1: float, n: float) -> float:
    if n == 0:
        return 0.0
    p1 = n1 / n
    return 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)


def _best_split_for_feature(col: np.ndarray, y: np.ndarray):
    """Best (decrease_in_weighted_gini, threshold) for one feature, or None."""
    order = np.argsort(col, kind="mergesort")
    xs = col[order]
    ys = y[order]
    n = len(ys)
    cum1 = np.cumsum(ys)
    total1 = cum1[-1]
    k = np.arange(1, n)                       # left sizes
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    n1l = cum1[:-1]
    n1r = total1 - n1l
    with np.errstate(invalid="ignore", divide="ignore"):
        gini_l = 1.0 - (n1l / k) ** 2 - ((k - n1l) / k) ** 2
        kr = n - k
        gini_r = 1.0 - (n1r / kr) ** 2 - ((kr - n1r) / kr) ** 2
    weighted = (k * gini_l + kr * gini_r) / n
    parent = _gini(total1, n)
    decrease = parent - weighted
    decrease[~valid] = -np.inf
    best = int(np.argmax(decrease))           # argmax takes the first (lowest threshold) tie
    if not math.isfinite(decrease[best]):
        return None
    threshold = 0.5 * (xs[best] + xs[best + 1])
    return float(decrease[best]), threshold


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    depth: int,
    root_gini: float,
    root_n: int,
    rng: np.random.Generator | None,
    n_candidates: int | None,
) -> dict:
    sub_y = y[idx]
    n = len(idx)
    n1 = int(sub_y.sum())
    leaf = {"leaf": True, "p1": n1 / n, "n": n}
    if depth >= TREE_MAX_DEPTH or n < TREE_MIN_NODE or n1 == 0 or n1 == n:
        return leaf

    p = X.shape[1]
    if n_candidates is not None and n_candidates < p:
        features = np.sort(rng.choice(p, size=n_candidates, replace=False))
    else:
        features = np.arange(p)

    best = None  # (decrease, feature, threshold)
    for f in features:
        found = _best_split_for_feature(X[idx, f], sub_y)
        if found is None:
            continue
        decrease, threshold = found
        if best is None or decrease > best[0] + 1e-15:
            best = (decrease, int(f), threshold)
    if best is None:
        return leaf
    decrease, feature, threshold = best
    # split must improve total tree cost by a fraction of the root impurity
    if root_gini > 0 and (n / root_n) * decrease < TREE_MIN_IMPROVEMENT * root_gini:
        return leaf

    mask = X[idx, feature] <= threshold
    left_idx = idx[mask]
    right_idx = idx[~mask]
    if len(left_idx) == 0 or len(right_idx) == 0:
        return leaf
    return {
        "leaf": False,
        "feature": feature,
        "threshold": threshold,
        "left": _grow_tree(X, y, left_idx, depth + 1, root_gini, root_n, rng, n_candidates),
        "right": _grow_tree(X, y, right_idx, depth + 1, root_gini, root_n, rng, n_candidates),
    }


def _fit_tree_params(X, y, rng=None, n_candidates=None) -> dict:
    n = X.shape[0]
    root_gini = _gini(float(y.sum()), n)
    root = _grow_tree(X, y, np.arange(n), 0, root_gini, n, rng, n_candidates)
    return {"root": root}


def _predict_tree_one(node: dict, x: np.ndarray) -> float:
    while not node["leaf"]:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["p1"]


def _predict_tree(params: dict, X: np.ndarray) -> np.ndarray:
    root = params["root"]
    return np.array([_predict_tree_one(root, row) for row in X])


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

def _fit_forest_params(X, y, seed: int) -> dict:
    n, p = X.shape
    n_candidates = int(math.ceil(math.sqrt(p)))
    trees = []
    for tree_idx in range(N_TREES):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_idx,)))
        rows = np.sort(rng.integers(0, n, size=n))
        tree = _fit_tree_params(X[rows], y[rows], rng=rng, n_candidates=n_candidates)
        trees.append(tree["root"])
    return {"trees": trees}


def _predict_forest(params: dict, X: np.ndarray) -> np.ndarray:
    per_tree = np.array([[_predict_tree_one(t, row) for row in X] for t in params["trees"]])
    return per_tree.mean(axis=0)


# ---------------------------------------------------------------------------
# trained model wrapper
# ---------------------------------------------------------------------------

@dataclass
class TrainedModel:
    kind: ModelKind
    params: dict
    feature_names: list
    schema_hash: str
    selection_rule: SelectionRule
    seed: int
    training_date: str | None = None
    separated: bool = False

    def predict_proba(self, X, feature_names=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if feature_names is not None and feature_schema_hash(feature_names) != self.schema_hash:
            raise ValueError("feature schema hash mismatch")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("feature vector width mismatch")
        if self.kind == ModelKind.LOGIT:
            return _predict_logit(self.params, X)
        if self.kind == ModelKind.TREE:
            return _predict_tree(self.params, X)
        return _predict_forest(self.params, X)

    def tree_probabilities(self, X) -> np.ndarray:
        """Per-tree probabilities (forest only), shape (n_trees, n_rows)."""
        if self.kind != ModelKind.FOREST:
            raise ValueError("only forests have per-tree probabilities")
        X = np.asarray(X, dtype=float)
        return np.array([[_predict_tree_one(t, row) for row in X] for t in self.params["trees"]])

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind.value,
            "params": self.params,
            "feature_names": self.feature_names,
            "schema_hash": self.schema_hash,
            "selection_rule": self.selection_rule.value,
            "seed": self.seed,
            "training_date": self.training_date,
            "separated": self.separated,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        payload = json.loads(text)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported model format version")
        return cls(
            kind=ModelKind(payload["kind"]),
            params=payload["params"],
            feature_names=payload["feature_names"],
            schema_hash=payload["schema_hash"],
            selection_rule=SelectionRule(payload["selection_rule"]),
            seed=payload["seed"],
            training_date=payload.get("training_date"),
            separated=payload.get("separated", False),
        )


def fit_model(
    kind: ModelKind,
    X,
    y,
    feature_names,
    seed: int = 0,
    selection_rule: SelectionRule = SelectionRule.PROB_GT_50,
    training_date: str | None = None,
) -> TrainedModel:
    """Fit one learner on a labeled design matrix.

    Rows are canonicalized (sorted lexicographically) before any seeded
    draw, so the result does not depend on input row order.
    """
    X, y = _validate(X, y)
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length mismatch")
    order = _canonical_order(X, y)
    Xc, yc = X[order], y[order]

    separated = False
    if kind == ModelKind.LOGIT:
        params = _fit_logit_params(Xc, yc)
        separated = params["separated"]
    elif kind == ModelKind.TREE:
        if Xc.shape[0] < 2:
            raise ValueError("tree fitting needs at least 2 examples")
        params = _fit_tree_params(Xc, yc)
    elif kind == ModelKind.FOREST:
        if Xc.shape[0] < 2:
            raise ValueError("forest fitting needs at least 2 examples")
        params = _fit_forest_params(Xc, yc, seed)
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    return TrainedModel(
        kind=kind,
        params=params,
        feature_names=list(feature_names),
        schema_hash=feature_schema_hash(feature_names),
        selection_rule=selection_rule,
        seed=seed,
        training_date=training_date,
        separated=separated,
    )


def fit_logit(X, y, feature_names, **kw) -> TrainedModel:
    return fit_model(ModelKind.LOGIT, X, y, feature_names, **kw)


def fit_tree(X, y, feature_names, **kw) -> TrainedModel:
    return fit_model(ModelKind.TREE, X, y, feature_names, **kw)


def fit_forest(X, y, feature_names, seed: int = 0, **kw) -> TrainedModel:
    return fit_model(ModelKind.FOREST, X, y, feature_names, seed=seed, **kw)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass
class CvReport:
    kind: ModelKind
    n_folds: int
    fold_of_example: np.ndarray       # input order
    scores: np.ndarray                # pooled out-of-fold, input order
    labels: np.ndarray
    seed: int
    run_date: str | None = None


def cross_validate(X, y, feature_names, kind: ModelKind, seed: int = 0, n_folds: int = 10) -> CvReport:
    """Seeded uniform k-fold assignment; every example scored once out-of-fold."""
    X, y = _validate(X, y)
    n = X.shape[0]
    if n < n_folds:
        raise ValueError("fewer examples than folds")
    order = _canonical_order(X, y)
    Xc, yc = X[order], y[order]

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xCF,)))
    perm = rng.permutation(n)
    fold_canon = np.empty(n, dtype=int)
    sizes = [n // n_folds + (1 if i < n % n_folds else 0) for i in range(n_folds)]
    start = 0
    for fold, size in enumerate(sizes):
        fold_canon[perm[start : start + size]] = fold
        start += size

    scores_canon = np.empty(n)
    for fold in range(n_folds):
        test_mask = fold_canon == fold
        model = fit_model(kind, Xc[~test_mask], yc[~test_mask], feature_names, seed=seed)
        scores_canon[test_mask] = model.predict_proba(Xc[test_mask])

    # map back to the caller's row order
    scores = np.empty(n)
    folds = np.empty(n, dtype=int)
    scores[order] = scores_canon
    folds[order] = fold_canon
    return CvReport(
        kind=kind, n_folds=n_folds, fold_of_example=folds, scores=scores, labels=y, seed=seed
    )


# ---------------------------------------------------------------------------
# stock selection
# ---------------------------------------------------------------------------

def select_stocks(probabilities, rule: SelectionRule, decile_state=None) -> np.ndarray:
    """Boolean buy mask over candidate probabilities.

    PROB_GT_50 keeps strict > 0.5.  TOP_DECILE inserts today's
    probabilities into the caller's cumulative rolling state and keeps
    those whose percentile rank is at or above 0.9; the state therefore
    spans all formation dates seen so far.
    """
    probs = np.asarray(probabilities, dtype=float)
    if rule == SelectionRule.PROB_GT_50:
        return probs > 0.5
    if rule == SelectionRule.TOP_DECILE:
        if decile_state is None:
            raise ValueError("TOP_DECILE needs the cumulative probability state")
        for p in probs:
            decile_state.add(p)
        return np.array([decile_state.percentile(p) >= 0.9 for p in probs])
    raise ValueError(f"unknown selection rule {rule!r}")
