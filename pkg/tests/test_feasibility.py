import numpy as np
import pytest

from boxtune.feasibility import (
    FeasibilityError,
    FeasibilityModel,
    ThresholdSpec,
    encode_configs,
    rf_fit,
    rf_predict_proba,
    sample_feasibility_threshold,
)
from boxtune.space import Parameter, SearchSpace, sample_uniform


def small_space():
    return SearchSpace([
        Parameter.integer("n", 0, 9),
        Parameter.categorical("mode", ["a", "b", "c"]),
        Parameter.permutation("order", 4),
    ])


def test_encoding_shapes_and_values():
    sp = small_space()
    X = encode_configs(sp, [(0, "b", (2, 1, 4, 3)), (9, "a", (1, 2, 3, 4))])
    # 1 numeric + 3 one-hot + 4 positions
    assert X.shape == (2, 8)
    assert X[0, 0] == 0.0 and X[1, 0] == 1.0
    assert list(X[0, 1:4]) == [0.0, 1.0, 0.0]
    # positions of elements 1..4 inside (2,1,4,3)
    assert list(X[0, 4:]) == [1.0, 0.0, 3.0, 2.0]


def test_permutation_encoding_locality():
    sp = SearchSpace([Parameter.permutation("q", 5)])
    a = encode_configs(sp, [((1, 2, 3, 4, 5),)])[0]
    b = encode_configs(sp, [((1, 2, 4, 3, 5),)])[0]  # one transposition
    assert int((a != b).sum()) == 2


def test_single_class_shortcut():
    sp = small_space()
    rng = np.random.default_rng(0)
    configs = sample_uniform(sp, 8, rng)
    model = rf_fit(sp, configs, [True] * 8, rng)
    assert model.constant == 1.0
    assert rf_predict_proba(model, configs[0]) == 1.0
    model0 = rf_fit(sp, configs, [False] * 8, rng)
    assert rf_predict_proba(model0, configs[0]) == 0.0


def test_empty_model_guard():
    sp = small_space()
    rng = np.random.default_rng(1)
    with pytest.raises(FeasibilityError):
        rf_fit(sp, [], [], rng)
    empty = FeasibilityModel(space=sp, n_trees=0, max_depth=1,
                             bootstrap_seeds=np.array([]), use_transforms=True)
    with pytest.raises(FeasibilityError):
        empty.predict_proba((0, "a", (1, 2, 3, 4)))


def test_probabilities_in_unit_interval():
    sp = small_space()
    rng = np.random.default_rng(2)
    configs = sample_uniform(sp, 40, rng)
    labels = [cfg[0] <= 5 for cfg in configs]
    model = rf_fit(sp, configs, labels, rng)
    probs = model.predict_proba_batch(sample_uniform(sp, 100, rng))
    assert np.all(probs >= 0.0) and np.all(probs <= 1.0)


def test_learns_linear_threshold_rule():
    # feasible iff n <= 5, 50 training samples, held-out accuracy >= 0.9
    sp = small_space()
    rng = np.random.default_rng(3)
    train = sample_uniform(sp, 50, rng)
    model = rf_fit(sp, train, [c[0] <= 5 for c in train], np.random.default_rng(7))
    test = sample_uniform(sp, 300, rng)
    pred = model.predict_proba_batch(test) >= 0.5
    truth = np.array([c[0] <= 5 for c in test])
    assert (pred == truth).mean() >= 0.9


def test_dense_grid_misclassification_small():
    # >= 30 examples of a deterministic single-threshold rule: <= 10% error on
    # the dense grid
    sp = SearchSpace([Parameter.integer("a", 0, 9), Parameter.integer("b", 0, 9)])
    rng = np.random.default_rng(4)
    train = sample_uniform(sp, 60, rng)
    model = rf_fit(sp, train, [c[0] <= 4 for c in train], np.random.default_rng(0))
    grid = [(a, b) for a in range(10) for b in range(10)]
    pred = model.predict_proba_batch(grid) >= 0.5
    truth = np.array([a <= 4 for a, _ in grid])
    assert (pred != truth).mean() <= 0.10


def test_prediction_invariant_to_record_order():
    sp = small_space()
    rng = np.random.default_rng(5)
    configs = sample_uniform(sp, 30, rng)
    labels = [c[0] % 2 == 0 for c in configs]
    m1 = rf_fit(sp, configs, labels, np.random.default_rng(11))
    shuffled = list(zip(configs, labels))
    np.random.default_rng(99).shuffle(shuffled)
    m2 = rf_fit(sp, [c for c, _ in shuffled], [l for _, l in shuffled],
                np.random.default_rng(11))
    probe = sample_uniform(sp, 50, rng)
    assert np.allclose(m1.predict_proba_batch(probe), m2.predict_proba_batch(probe))


def test_prediction_matches_traversal_oracle():
    # independent re-implementation of per-tree traversal over the flat arrays
    sp = small_space()
    rng = np.random.default_rng(6)
    configs = sample_uniform(sp, 60, rng)
    labels = [(c[0] <= 6) and (c[1] != "c") for c in configs]
    model = rf_fit(sp, configs, labels, np.random.default_rng(3))
    probe = sample_uniform(sp, 100, rng)
    X = encode_configs(sp, probe)

    def walk(tree_root, x):
        node = tree_root
        while model.feature[node] >= 0:
            if x[model.feature[node]] <= model.threshold[node]:
                node = model.left[node]
            else:
                node = model.right[node]
        return model.value[node]

    expected = np.array([
        np.mean([walk(r, x) for r in model.roots]) for x in X
    ])
    got = model.predict_proba_batch(probe)
    assert np.allclose(got, expected, atol=1e-12)


def test_leaf_values_are_feasible_fractions():
    sp = small_space()
    rng = np.random.default_rng(8)
    configs = sample_uniform(sp, 40, rng)
    labels = [c[0] <= 3 for c in configs]
    model = rf_fit(sp, configs, labels, rng)
    leaves = model.value[model.feature < 0]
    assert np.all(leaves >= 0.0) and np.all(leaves <= 1.0)


def test_forest_shape_settings():
    sp = small_space()
    rng = np.random.default_rng(9)
    configs = sample_uniform(sp, 20, rng)
    labels = [c[0] <= 5 for c in configs]
    model = rf_fit(sp, configs, labels, rng, n_trees=17, max_depth=4)
    assert model.n_trees == 17
    assert len(model.roots) == 17
    assert len(model.bootstrap_seeds) == 17

    def depth(node):
        if model.feature[node] < 0:
            return 0
        return 1 + max(depth(model.left[node]), depth(model.right[node]))

    assert max(depth(r) for r in model.roots) <= 4


# --------------------------------------------------------------------------
# minimum feasibility limit
# --------------------------------------------------------------------------

def test_threshold_p0_one_always_zero():
    spec = ThresholdSpec(p0=1.0)
    rng = np.random.default_rng(0)
    assert all(sample_feasibility_threshold(spec, rng) == 0.0 for _ in range(100))


def test_threshold_zero_fraction_default():
    spec = ThresholdSpec()
    rng = np.random.default_rng(1)
    draws = [sample_feasibility_threshold(spec, rng) for _ in range(100_000)]
    zero_frac = sum(1 for d in draws if d == 0.0) / len(draws)
    assert abs(zero_frac - 0.5) < 0.01
    assert all(d < spec.eps_max for d in draws)


def test_threshold_spec_validation():
    with pytest.raises(ValueError):
        ThresholdSpec(p0=0.0)
    with pytest.raises(ValueError):
        ThresholdSpec(eps_max=1.0)
