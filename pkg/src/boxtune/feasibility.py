"""Hidden-constraint learning: a random-forest feasibility classifier.

The forest is trained on every evaluated configuration, feasible or not (the
value surrogate sees only the feasible ones).  Configurations are encoded as
numeric feature rows: normalized coordinates for numeric parameters, one-hot
columns for categoricals, and the position of every element for permutations
(so a transposition moves exactly two columns).

Trees are grown on bootstrap samples to ``max_depth`` with Gini impurity and
``sqrt(F)`` features considered per split; each leaf stores its feasible
fraction and a prediction is the mean leaf fraction across trees.  The fitted
forest is stored in flat arrays so batch prediction is a handful of numpy
gathers per tree level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import SearchSpace, transform_value
from .surrogate import _numeric_coords

N_TREES = 100
MAX_DEPTH = 10


class FeasibilityError(RuntimeError):
    pass


def encode_configs(space: SearchSpace, configs, use_transforms: bool = True) -> np.ndarray:
    """Feature matrix (len(configs) x F) for the feasibility classifier."""
    cols = []
    for i, p in enumerate(space.parameters):
        values = [cfg[i] for cfg in configs]
        if p.is_numeric:
            cols.append(_numeric_coords(p, values, use_transforms))
        elif p.kind == "categorical":
            codes = {v: k for k, v in enumerate(p.values)}
            idx = np.array([codes[v] for v in values])
            onehot = np.zeros((len(values), len(p.values)))
            onehot[np.arange(len(values)), idx] = 1.0
            cols.append(onehot)
        else:
            # position of each element e in the permutation, e = 1..m
            perms = np.asarray(values, int)
            pos = np.argsort(perms, axis=1).astype(float)
            cols.append(pos)
    return np.column_stack([c if c.ndim == 2 else c[:, None] for c in cols])


@dataclass
class FeasibilityModel:
    """Fitted random forest; immutable after :func:`rf_fit`."""

    space: SearchSpace
    n_trees: int
    max_depth: int
    bootstrap_seeds: np.ndarray
    use_transforms: bool
    # flat node arrays over all trees; feature == -1 marks a leaf
    feature: np.ndarray = None
    threshold: np.ndarray = None
    left: np.ndarray = None
    right: np.ndarray = None
    value: np.ndarray = None
    roots: np.ndarray = None
    constant: float | None = None   # single-class training data shortcut

    def predict_proba_batch(self, configs) -> np.ndarray:
        if self.constant is not None:
            return np.full(len(configs), self.constant)
        if self.roots is None or len(self.roots) == 0:
            raise FeasibilityError("feasibility model has no trees")
        X = encode_configs(self.space, configs, self.use_transforms)
        q = X.shape[0]
        cur = np.broadcast_to(self.roots[:, None], (self.n_trees, q)).copy()
        for _ in range(self.max_depth + 1):
            feat = self.feature[cur]
            internal = feat >= 0
            if not internal.any():
                break
            xv = X[np.arange(q)[None, :], np.where(internal, feat, 0)]
            go_left = xv <= self.threshold[cur]
            nxt = np.where(go_left, self.left[cur], self.right[cur])
            cur = np.where(internal, nxt, cur)
        return self.value[cur].mean(axis=0)

    def predict_proba(self, cfg) -> float:
        return float(self.predict_proba_batch([cfg])[0])


class _TreeBuilder:
    def __init__(self, X, y, max_depth, n_features_per_split, rng,
                 feature, threshold, left, right, value):
        self.X, self.y = X, y
        self.max_depth = max_depth
        self.k = n_features_per_split
        self.rng = rng
        self.feature, self.threshold = feature, threshold
        self.left, self.right, self.value = left, right, value

    def new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, rows, depth):
        node = self.new_node()
        y = self.y[rows]
        mean = float(y.mean())
        self.value[node] = mean
        if depth >= self.max_depth or len(rows) < 2 or mean in (0.0, 1.0):
            return node
        feats = self.rng.choice(self.X.shape[1], size=self.k, replace=False)
        sub = self.X[np.ix_(rows, feats)]
        best = None  # (weighted_gini, feature, threshold, left_mask)
        n = len(rows)
        for j, f in enumerate(feats):
            xs = sub[:, j]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            ys_sorted = y[order]
            pos = np.cumsum(ys_sorted)
            total_pos = pos[-1]
            nl = np.arange(1, n)
            cut = xs_sorted[:-1] != xs_sorted[1:]          # only between distinct values
            if not cut.any():
                continue
            pl = pos[:-1]
            nr = n - nl
            pr = total_pos - pl
            gini_l = 1.0 - (pl / nl) ** 2 - ((nl - pl) / nl) ** 2
            gini_r = 1.0 - (pr / nr) ** 2 - ((nr - pr) / nr) ** 2
            score = (nl * gini_l + nr * gini_r) / n
            score = np.where(cut, score, np.inf)
            i = int(np.argmin(score))
            if best is None or score[i] < best[0]:
                thr = 0.5 * (xs_sorted[i] + xs_sorted[i + 1])
                best = (float(score[i]), int(f), thr, xs <= thr)
        if best is None:
            return node
        _, f, thr, left_mask = best
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(rows[left_mask], depth + 1)
        self.right[node] = self.build(rows[~left_mask], depth + 1)
        return node


def rf_fit(space: SearchSpace, configs, labels, rng: np.random.Generator,
           n_trees: int = N_TREES, max_depth: int = MAX_DEPTH,
           use_transforms: bool = True) -> FeasibilityModel:
    """Fit the feasibility forest on all evaluated configurations.

    ``labels`` are truthy for feasible evaluations.  Training rows are
    canonicalized by sort so the fit does not depend on record order; each
    tree gets its own bootstrap seed drawn up front from ``rng``.
    Single-class data short-circuits to a constant prediction.
    """
    if len(configs) < 1:
        raise FeasibilityError("need at least one record to fit the feasibility model")
    if len(configs) != len(labels):
        raise FeasibilityError("configs and labels differ in length")
    X = encode_configs(space, configs, use_transforms)
    y = np.asarray([1.0 if b else 0.0 for b in labels])
    order = np.lexsort(np.vstack([X.T, y]))   # record-order invariance
    X, y = X[order], y[order]

    seeds = rng.integers(0, 2 ** 32, size=n_trees, dtype=np.uint64)
    model = FeasibilityModel(space=space, n_trees=n_trees, max_depth=max_depth,
                             bootstrap_seeds=seeds, use_transforms=use_transforms)
    if y.min() == y.max():
        model.constant = float(y[0])
        return model

    n, F = X.shape
    k = max(1, round(math.sqrt(F)))
    feature, threshold, left, right, value, roots = [], [], [], [], [], []
    for seed in seeds:
        tree_rng = np.random.default_rng(int(seed))
        rows = tree_rng.integers(0, n, size=n)
        builder = _TreeBuilder(X, y, max_depth, k, tree_rng,
                               feature, threshold, left, right, value)
        roots.append(builder.build(rows, 0))
    model.feature = np.asarray(feature, np.int32)
    model.threshold = np.asarray(threshold)
    model.left = np.asarray(left, np.int32)
    model.right = np.asarray(right, np.int32)
    model.value = np.asarray(value)
    model.roots = np.asarray(roots, np.int32)
    return model


def rf_predict_proba(model: FeasibilityModel, cfg) -> float:
    """Probability of feasibility: mean leaf feasible-fraction across trees."""
    return model.predict_proba(cfg)


@dataclass(frozen=True)
class ThresholdSpec:
    """Distribution of the per-iteration minimum feasibility limit.

    With probability ``p0`` the limit is 0 (nothing is filtered); otherwise it
    is uniform on ``(0, eps_max)``.  ``p0 > 0`` guarantees that asymptotically
    no configuration is permanently cut away.
    """

    p0: float = 0.5
    eps_max: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p0 <= 1.0:
            raise ValueError("p0 must lie in (0, 1]")
        if not 0.0 <= self.eps_max < 1.0:
            raise ValueError("eps_max must lie in [0, 1)")


def sample_feasibility_threshold(spec: ThresholdSpec, rng: np.random.Generator) -> float:
    if rng.uniform() < spec.p0:
        return 0.0
    return float(rng.uniform(0.0, spec.eps_max))
