"""Built-in synthetic benchmarks with known optima and a brute-force oracle.

These stand in for real compiler targets at desk scale: deterministic pure
objectives over small mixed spaces, one with a known constraint, one
rewarding structured permutation metrics, and one with a hidden feasibility
rule discovered only through failed evaluations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .constraints import build_cot
from .space import Config, Parameter, SearchSpace, lexicographic_min


@dataclass(frozen=True)
class Benchmark:
    name: str
    space: SearchSpace
    objective: Callable[[Config], float]
    hidden_rule: Optional[Callable[[Config], bool]] = None
    optimum: tuple = None   # (configuration, value), cached at registration
    default_budget: int = 40

    def evaluate(self, cfg: Config):
        """Black-box protocol: (objective or None, feasible flag)."""
        if self.hidden_rule is not None and not self.hidden_rule(cfg):
            return None, False
        return float(self.objective(cfg)), True

    def __call__(self, cfg: Config):
        return self.evaluate(cfg)


def brute_force_optimum(bench: Benchmark, max_configs: int = 100_000):
    """Exhaustive minimum over the feasible set (known and hidden constraints).

    Ties are broken toward the lexicographically smallest configuration.
    """
    cot = build_cot(bench.space)
    if cot.count() > max_configs:
        raise ValueError(f"feasible set too large to enumerate ({cot.count()})")
    best_value = math.inf
    best_configs = []
    for cfg in cot.enumerate():
        if bench.hidden_rule is not None and not bench.hidden_rule(cfg):
            continue
        v = bench.objective(cfg)
        if v < best_value:
            best_value, best_configs = v, [cfg]
        elif v == best_value:
            best_configs.append(cfg)
    if not best_configs:
        raise ValueError("feasible set is empty")
    return lexicographic_min(best_configs), float(best_value)


# --------------------------------------------------------------------------
# the builtins
# --------------------------------------------------------------------------

def _quadratic_mixed() -> Benchmark:
    """Separable quadratic in log coordinates plus categorical offsets.

    Two power-of-two ordinals under the known constraint o1 >= o2 and a
    3-way categorical; 108 feasible configurations, optimum 1.0 at
    (16, 4, "dynamic").  The 5% band around the optimum also contains the
    one-step ordinal moves and the second-best category.
    """
    space = SearchSpace(
        [
            Parameter.ordinal("o1", [2 ** k for k in range(8)], transform="log"),
            Parameter.ordinal("o2", [2 ** k for k in range(8)], transform="log"),
            Parameter.categorical("sched", ["static", "dynamic", "guided"]),
        ],
        ["o1 >= o2"],
    )
    offsets = {"static": 0.02, "dynamic": 0.0, "guided": 0.06}

    def objective(cfg):
        o1, o2, sched = cfg
        return (1.0
                + 0.04 * (math.log2(o1) - 4.0) ** 2
                + 0.04 * (math.log2(o2) - 2.0) ** 2
                + offsets[sched])

    return Benchmark("quadratic-mixed", space, objective,
                     optimum=((16, 4, "dynamic"), 1.0), default_budget=40)


PERM_TARGET = (2, 4, 1, 5, 3)


def _perm_assignment() -> Benchmark:
    """Squared-displacement cost to a hidden target permutation.

    The objective is exactly the (unnormalized) sum of squared element
    movements from the target, plus a small smooth term in one ordinal, so a
    displacement-aware permutation similarity lines up with the landscape.
    """
    space = SearchSpace([
        Parameter.permutation("order", 5),
        Parameter.ordinal("tile", [1, 2, 4, 8], transform="log"),
    ])

    def objective(cfg):
        order, tile = cfg
        cost = sum((a - b) ** 2 for a, b in zip(order, PERM_TARGET))
        return float(cost) + 0.1 * (math.log2(tile) - 1.0) ** 2

    return Benchmark("perm-assignment", space, objective,
                     optimum=((PERM_TARGET, 2), 0.0), default_budget=40)


def _hidden_ridge() -> Benchmark:
    """Three integers with half the dense space hidden-infeasible.

    The hidden rule (a resource-style budget on the coordinate sum) cuts off
    exactly 50% of the 1000 dense configurations, and the unconstrained
    quadratic optimum sits inside the infeasible region, so the search is
    constantly pulled toward the boundary.
    """
    space = SearchSpace([
        Parameter.integer("i1", 0, 9),
        Parameter.integer("i2", 0, 9),
        Parameter.integer("i3", 0, 9),
    ])

    def hidden(cfg):
        return sum(cfg) <= 13

    def objective(cfg):
        i1, i2, i3 = cfg
        return float((i1 - 7) ** 2 + (i2 - 7) ** 2 + (i3 - 4) ** 2)

    return Benchmark("hidden-ridge", space, objective, hidden_rule=hidden,
                     optimum=((5, 5, 3), 9.0), default_budget=24)


def _identity_line() -> Benchmark:
    """Trivial single-integer benchmark; objective equals the parameter."""
    space = SearchSpace([Parameter.integer("p1", 0, 100)])
    return Benchmark("identity", space, lambda cfg: float(cfg[0]),
                     optimum=((0,), 0.0), default_budget=10)


_REGISTRY = {
    b.name: b
    for b in (_quadratic_mixed(), _perm_assignment(), _hidden_ridge(), _identity_line())
}

BUILTIN_NAMES = tuple(_REGISTRY)


def builtin(name: str) -> Benchmark:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown builtin benchmark {name!r}; "
                         f"available: {', '.join(BUILTIN_NAMES)}") from None
