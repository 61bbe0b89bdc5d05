import itertools

import numpy as np
import pytest
from scipy.stats import chi2

from boxtune.constraints import (
    NOT_YET_DECIDABLE,
    ConstraintError,
    build_cot,
    cot_contains,
    cot_count,
    cot_sample_leaf_uniform,
    cot_sample_path_biased,
    eval_constraint,
    parse_constraint,
)
from boxtune.space import Parameter, SearchSpace, SpaceError


def example_space():
    """Five ordinals with two independent constraint groups (3 x 7 = 21 feasible)."""
    return SearchSpace(
        [
            Parameter.ordinal("p1", [2, 4]),
            Parameter.ordinal("p2", [2, 4]),
            Parameter.ordinal("p3", [1, 4]),
            Parameter.ordinal("p4", [1, 2, 4]),
            Parameter.ordinal("p5", [2, 4, 8]),
        ],
        ["p1 >= p2", "p4 >= p3", "p5 >= 2*p4"],
    )


def brute_force_feasible(space):
    """Oracle: filter the dense cross product by direct constraint evaluation."""
    domains = [p.domain_values() for p in space.parameters]
    out = set()
    for cfg in itertools.product(*domains):
        if all(eval_constraint(c, space.as_dict(cfg)) is True for c in space.constraints):
            out.add(cfg)
    return out


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def test_parse_simple_comparison():
    sp = example_space()
    expr = parse_constraint("p1 >= p2", sp)
    assert expr.variables == ("p1", "p2")


def test_parse_arithmetic():
    sp = example_space()
    expr = parse_constraint("p5 >= 2*p4", sp)
    assert eval_constraint(expr, {"p4": 4, "p5": 8}) is True
    assert eval_constraint(expr, {"p4": 4, "p5": 4}) is False


def test_parse_error_position():
    sp = example_space()
    with pytest.raises(ConstraintError) as err:
        parse_constraint("p1 >= ", sp)
    assert err.value.position == 7


def test_parse_unknown_identifier():
    sp = example_space()
    with pytest.raises(ConstraintError, match="unknown identifier"):
        parse_constraint("p1 >= zz", sp)


def test_parse_type_errors():
    sp = SearchSpace([
        Parameter.integer("n", 0, 9),
        Parameter.categorical("c", ["a", "b"]),
        Parameter.permutation("q", 3),
    ])
    with pytest.raises(ConstraintError):
        parse_constraint("n >= c", sp)  # numeric vs categorical
    with pytest.raises(ConstraintError):
        parse_constraint("c < 'a'", sp)  # ordering on categorical
    with pytest.raises(ConstraintError):
        parse_constraint("n + (n > 1)", sp)  # arithmetic on boolean
    with pytest.raises(ConstraintError):
        parse_constraint("q == 1", sp)  # permutations cannot be constrained
    # well-typed forms parse fine
    parse_constraint("c == 'a' || (n % 2 == 0 && !(n > 5))", sp)


def test_parse_precedence_and_parens():
    sp = SearchSpace([Parameter.integer("n", 0, 9)])
    expr = parse_constraint("n + 2 * 3 == 7", sp)
    assert eval_constraint(expr, {"n": 1}) is True
    expr = parse_constraint("(n + 2) * 3 == 9", sp)
    assert eval_constraint(expr, {"n": 1}) is True
    expr = parse_constraint("-n + 1 <= 0", sp)
    assert eval_constraint(expr, {"n": 2}) is True


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def test_eval_full_and_partial():
    sp = example_space()
    ge = parse_constraint("p1 >= p2", sp)
    assert eval_constraint(ge, {"p1": 4, "p2": 2}) is True
    scaled = parse_constraint("p5 >= 2*p4", sp)
    assert eval_constraint(scaled, {"p4": 4, "p5": 8}) is True
    assert eval_constraint(scaled, {"p4": 4}) == NOT_YET_DECIDABLE


def test_eval_division_by_zero_is_false():
    sp = SearchSpace([Parameter.integer("a", 0, 9), Parameter.integer("b", 0, 9)])
    expr = parse_constraint("a / b >= 1", sp)
    assert eval_constraint(expr, {"a": 4, "b": 2}) is True
    assert eval_constraint(expr, {"a": 4, "b": 0}) is False
    expr = parse_constraint("a % b == 0", sp)
    assert eval_constraint(expr, {"a": 4, "b": 0}) is False


def test_eval_categorical_equality():
    sp = SearchSpace([Parameter.categorical("c", ["fast", "slow"])])
    expr = parse_constraint("c != 'slow'", sp)
    assert eval_constraint(expr, {"c": "fast"}) is True
    assert eval_constraint(expr, {"c": "slow"}) is False


# --------------------------------------------------------------------------
# chain of trees
# --------------------------------------------------------------------------

def test_build_cot_example_space_shape():
    sp = example_space()
    cot = build_cot(sp)
    assert [g.indices for g in cot.groups] == [(0, 1), (2, 3, 4)]
    assert cot.groups[0].root.leaf_count == 3
    assert cot.groups[1].root.leaf_count == 7
    assert cot_count(cot) == 21


def test_cot_enumeration_equals_brute_force():
    sp = example_space()
    cot = build_cot(sp)
    assert set(cot.enumerate()) == brute_force_feasible(sp)


def test_cot_leaf_count_consistency():
    sp = example_space()
    cot = build_cot(sp)

    def check(node):
        if not node.children:
            assert node.leaf_count == 1
            return
        assert node.leaf_count == sum(c.leaf_count for c in node.children)
        for c in node.children:
            check(c)

    for g in cot.groups:
        check(g.root)


def test_cot_contains_matches_constraint_eval():
    sp = example_space()
    cot = build_cot(sp)
    assert cot_contains(cot, (2, 2, 4, 4, 8)) is True
    assert cot_contains(cot, (2, 4, 1, 1, 2)) is False
    rng = np.random.default_rng(3)
    domains = [p.domain_values() for p in sp.parameters]
    for _ in range(1000):
        cfg = tuple(d[int(rng.integers(len(d)))] for d in domains)
        direct = all(eval_constraint(c, sp.as_dict(cfg)) is True for c in sp.constraints)
        assert cot_contains(cot, cfg) == direct


def test_cot_unconstrained_singleton():
    sp = SearchSpace([Parameter.categorical("c", ["a", "b"])])
    cot = build_cot(sp)
    assert len(cot.groups) == 1
    assert cot.groups[0].root.leaf_count == 2
    assert cot_count(cot) == 2


def test_cot_count_unconstrained_product():
    sp = SearchSpace([
        Parameter.categorical("c", ["a", "b"]),
        Parameter.ordinal("o", [1, 2, 4]),
    ])
    assert cot_count(build_cot(sp)) == 6


def test_cot_empty_feasible_set():
    sp = SearchSpace([Parameter.ordinal("a", [1, 2]), Parameter.ordinal("b", [3, 4])],
                     ["a > b"])
    with pytest.warns(UserWarning, match="empty"):
        cot = build_cot(sp)
    assert cot_count(cot) == 0
    with pytest.raises(SpaceError):
        cot.sample_leaf_uniform(1, np.random.default_rng(0))


def test_cot_real_constrained_rejected():
    sp = SearchSpace([Parameter.real("x", 0.0, 1.0), Parameter.integer("n", 0, 3)])
    sp2 = SearchSpace(sp.parameters, ["x <= n"])
    with pytest.raises(SpaceError, match="real parameter"):
        build_cot(sp2)


def test_cot_node_cap():
    sp = SearchSpace([Parameter.integer("a", 0, 99), Parameter.integer("b", 0, 99)],
                     ["a >= b"])
    with pytest.raises(SpaceError, match="node cap"):
        build_cot(sp, node_cap=50)


def test_cot_real_singleton_passthrough():
    sp = SearchSpace([
        Parameter.real("x", 0.0, 1.0),
        Parameter.ordinal("a", [1, 2]),
        Parameter.ordinal("b", [1, 2]),
    ], ["a >= b"])
    cot = build_cot(sp)
    assert cot_count(cot) == 3  # discrete combinations only
    rng = np.random.default_rng(0)
    for cfg in cot.sample_leaf_uniform(50, rng):
        assert 0.0 <= cfg[0] <= 1.0
        assert cot_contains(cot, cfg)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def test_leaf_uniform_sampling_is_uniform():
    sp = example_space()
    cot = build_cot(sp)
    rng = np.random.default_rng(11)
    n = 21_000
    draws = cot_sample_leaf_uniform(cot, n, rng)
    counts = {}
    for d in draws:
        counts[d] = counts.get(d, 0) + 1
    assert len(counts) == 21
    assert all(abs(c - 1000) <= 150 for c in counts.values())  # 1000 +- 15%
    stat = sum((c - 1000.0) ** 2 / 1000.0 for c in counts.values())
    assert stat < chi2.ppf(0.999, df=20)
    assert all(cot_contains(cot, d) for d in draws)


def test_leaf_uniform_order_independence():
    # leaf-uniform sampling is insensitive to the level order inside a group:
    # declaring p5 before p4 yields the same distribution over full configs
    sp_a = SearchSpace(
        [Parameter.ordinal("p4", [1, 2, 4]), Parameter.ordinal("p5", [2, 4, 8])],
        ["p5 >= 2*p4"],
    )
    sp_b = SearchSpace(
        [Parameter.ordinal("p5", [2, 4, 8]), Parameter.ordinal("p4", [1, 2, 4])],
        ["p5 >= 2*p4"],
    )
    n = 30_000
    counts_a, counts_b = {}, {}
    for d in build_cot(sp_a).sample_leaf_uniform(n, np.random.default_rng(5)):
        counts_a[d] = counts_a.get(d, 0) + 1
    for d in build_cot(sp_b).sample_leaf_uniform(n, np.random.default_rng(6)):
        key = (d[1], d[0])  # reorder to (p4, p5)
        counts_b[key] = counts_b.get(key, 0) + 1
    assert set(counts_a) == set(counts_b)
    for key in counts_a:
        assert abs(counts_a[key] - counts_b[key]) < 0.15 * n / len(counts_a) + 50


def test_path_biased_sampling_overweights_sparse_branch():
    # in the 7-leaf tree the path 4-4-8 has probability 1/2 under per-level
    # uniform child choice but only 1/7 under leaf-uniform sampling
    sp = SearchSpace(
        [
            Parameter.ordinal("p3", [1, 4]),
            Parameter.ordinal("p4", [1, 2, 4]),
            Parameter.ordinal("p5", [2, 4, 8]),
        ],
        ["p4 >= p3", "p5 >= 2*p4"],
    )
    cot = build_cot(sp)
    n = 20_000
    rng = np.random.default_rng(8)
    draws = cot_sample_path_biased(cot, n, rng)
    freq = sum(1 for d in draws if d == (4, 4, 8)) / n
    assert freq > 3 / 7  # far above its 1/7 uniform share
    assert freq == pytest.approx(0.5, abs=0.02)


def test_path_biased_equals_uniform_on_depth_one_tree():
    sp = SearchSpace([Parameter.categorical("c", list("abcd"))])
    cot = build_cot(sp)
    n = 40_000
    draws = cot_sample_path_biased(cot, n, np.random.default_rng(9))
    for label in "abcd":
        frac = sum(1 for d in draws if d[0] == label) / n
        assert abs(frac - 0.25) < 0.02


def test_path_biased_equals_uniform_on_balanced_tree():
    # balanced binary tree of depth 3: both samplers give 1/8 per leaf
    sp = SearchSpace(
        [Parameter.ordinal(k, [0, 1]) for k in ("a", "b", "c")],
        ["a + b + c >= 0"],  # ties the three into one group, prunes nothing
    )
    cot = build_cot(sp)
    assert cot_count(cot) == 8
    n = 40_000
    draws = cot_sample_path_biased(cot, n, np.random.default_rng(10))
    counts = {}
    for d in draws:
        counts[d] = counts.get(d, 0) + 1
    for c in counts.values():
        assert abs(c - n / 8) < 0.15 * n / 8


def test_single_leaf_tree_always_that_configuration():
    sp = SearchSpace([Parameter.ordinal("a", [1, 2]), Parameter.ordinal("b", [1, 2])],
                     ["a == 2", "b == 1"])
    cot = build_cot(sp)
    assert cot_count(cot) == 1
    draws = cot.sample_leaf_uniform(10, np.random.default_rng(0))
    assert all(d == (2, 1) for d in draws)


def test_enumeration_equivalence_randomized_spaces():
    # property: for random small spaces the tree enumerates exactly the
    # brute-force filtered set
    rng = np.random.default_rng(42)
    templates = [
        (["a >= b"], 2),
        (["a >= b", "c >= 2*b"], 3),
        (["a + b <= c + 3", "a != c"], 3),
        (["a * b >= c", "b <= 2"], 3),
    ]
    for texts, nparams in templates:
        for _ in range(3):
            params = []
            for name in "abc"[:nparams]:
                k = int(rng.integers(2, 5))
                vals = sorted(rng.choice(np.arange(1, 9), size=k, replace=False))
                params.append(Parameter.ordinal(name, [int(v) for v in vals]))
            sp = SearchSpace(params, texts)
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cot = build_cot(sp)
            assert set(cot.enumerate()) == brute_force_feasible(sp)
            assert cot_count(cot) == len(brute_force_feasible(sp))
