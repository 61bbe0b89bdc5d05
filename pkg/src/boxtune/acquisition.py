"""Noise-free expected improvement and its multi-start local-search maximizer.

EI is computed from the latent (noise-excluded) posterior variance, which
keeps already-evaluated configurations unattractive and so discourages
re-sampling.  With a feasibility model present the EI is multiplied by the
predicted probability of feasibility, and candidates below the per-iteration
minimum feasibility limit are excluded outright (a ``-inf`` sentinel).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .constraints import ChainOfTrees, eval_constraint
from .feasibility import FeasibilityModel
from .space import Config, SearchSpace, neighbors, sample_uniform
from .surrogate import GPModel

N_CANDIDATES = 5000
N_STARTS = 10
MAX_CLIMB_STEPS = 50

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class SpaceExhausted(Exception):
    """Every feasible configuration has already been evaluated."""


def expected_improvement(mean: float, variance: float, f_best: float) -> float:
    """Closed-form EI for minimization; ``variance`` must exclude noise."""
    return float(expected_improvement_vec(np.array([mean]), np.array([variance]),
                                          f_best)[0])


def expected_improvement_vec(means, variances, f_best: float) -> np.ndarray:
    means = np.asarray(means, float)
    sigma = np.sqrt(np.maximum(np.asarray(variances, float), 0.0))
    delta = f_best - means
    out = np.maximum(delta, 0.0)          # deterministic case, sigma == 0
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos]
        z = delta[pos] / s
        phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        out[pos] = delta[pos] * ndtr(z) + s * phi
    return np.maximum(out, 0.0)


@dataclass
class AcquisitionContext:
    """Everything the acquisition needs for one proposal round."""

    gp: GPModel
    feas: FeasibilityModel | None
    best_feasible_value: float
    eps_f: float = 0.0
    rng: np.random.Generator = None
    evaluated: set = field(default_factory=set)

    def __post_init__(self):
        if not 0.0 <= self.eps_f < 1.0:
            raise ValueError("eps_f must lie in [0, 1)")


def _scores(ctx: AcquisitionContext, configs):
    """(acquisition values, feasibility probabilities) for a batch."""
    means, variances = ctx.gp.predict_batch(configs, include_noise=False)
    f_model = ctx.gp.objective_to_model(ctx.best_feasible_value)
    ei = expected_improvement_vec(means, variances, f_model)
    if ctx.feas is None:
        return ei, np.ones(len(configs))
    p = ctx.feas.predict_proba_batch(configs)
    values = np.where(p < ctx.eps_f, -np.inf, ei * p)
    return values, p


def acquisition_value(ctx: AcquisitionContext, cfg: Config) -> float:
    """EI times probability of feasibility; ``-inf`` below the feasibility limit."""
    return float(_scores(ctx, [cfg])[0][0])


def _argbest(configs, values):
    """Index of the maximum value; ties go to the lexicographically smallest config."""
    best = None
    for i, v in enumerate(values):
        if best is None or v > values[best] or (v == values[best]
                                                and configs[i] < configs[best]):
            best = i
    return best


class _Tracker:
    """Best-scored configuration not yet evaluated, across all scored batches."""

    def __init__(self, evaluated):
        self.evaluated = evaluated
        self.config = None
        self.value = -math.inf

    def update(self, configs, values):
        for cfg, v in zip(configs, values):
            if v == -math.inf or cfg in self.evaluated:
                continue
            if v > self.value or (v == self.value and (self.config is None
                                                       or cfg < self.config)):
                self.config, self.value = cfg, v


def _default_sampler(space: SearchSpace, cot: ChainOfTrees | None):
    if cot is not None:
        return lambda n, rng: cot.sample_leaf_uniform(n, rng)
    if not space.constraints:
        return lambda n, rng: sample_uniform(space, n, rng)

    def rejection(n, rng):
        out = []
        attempts = 0
        while len(out) < n and attempts < 50 * n:
            batch = sample_uniform(space, n, rng)
            attempts += n
            for cfg in batch:
                if all(eval_constraint(c, space.as_dict(cfg)) is True
                       for c in space.constraints):
                    out.append(cfg)
                    if len(out) == n:
                        break
        return out

    return rejection


def _enumerate_feasible(space: SearchSpace, cot: ChainOfTrees | None):
    if cot is not None:
        yield from cot.enumerate()
        return
    if any(p.kind == "real" for p in space.parameters):
        raise SpaceExhausted("cannot enumerate a space with real parameters")
    domains = [p.domain_values() if p.kind != "permutation"
               else [tuple(q) for q in itertools.permutations(range(1, p.size + 1))]
               for p in space.parameters]
    for cfg in itertools.product(*domains):
        if all(eval_constraint(c, space.as_dict(cfg)) is True
               for c in space.constraints):
            yield cfg


def optimize_acquisition(ctx: AcquisitionContext, space: SearchSpace,
                         cot: ChainOfTrees | None = None, sample_fn=None,
                         local_search: bool = True,
                         n_candidates: int = N_CANDIDATES,
                         n_starts: int = N_STARTS) -> Config:
    """Propose the next configuration to evaluate.

    Samples ``n_candidates`` feasible candidates (leaf-uniform from the
    chain-of-trees when available, rejection sampling otherwise), scores them,
    then runs steepest-ascent hill climbing over single-parameter neighbors
    from the ``n_starts`` best.  Returns the best configuration seen that has
    not been evaluated yet; raises :class:`SpaceExhausted` when none remains.

    If every candidate falls below the feasibility limit, the candidate with
    the highest predicted probability of feasibility is chosen instead, so
    the search keeps moving when the learned feasible region is tiny.
    """
    if sample_fn is None:
        sample_fn = _default_sampler(space, cot)
    raw = sample_fn(n_candidates, ctx.rng)
    candidates = list(dict.fromkeys(raw))  # dedupe, keep first-draw order
    if not candidates:
        raise SpaceExhausted("candidate sampler produced nothing")

    values, probs = _scores(ctx, candidates)
    tracker = _Tracker(ctx.evaluated)

    if np.all(values == -np.inf):
        # feasibility limit cut everything: fall back to max probability
        tracker.update(candidates, probs)
        if tracker.config is None:
            return _exhaustion_fallback(ctx, space, cot)
        return tracker.config

    tracker.update(candidates, values)
    if local_search:
        order = np.argsort(-values, kind="stable")[:n_starts]
        for idx in order:
            if values[idx] == -np.inf:
                continue
            cur, cur_v = candidates[idx], values[idx]
            for _ in range(MAX_CLIMB_STEPS):
                nbrs = neighbors(space, cur, cot)
                if not nbrs:
                    break
                nvals, _ = _scores(ctx, nbrs)
                tracker.update(nbrs, nvals)
                i = _argbest(nbrs, nvals)
                if nvals[i] <= cur_v:
                    break
                cur, cur_v = nbrs[i], nvals[i]

    if tracker.config is None:
        return _exhaustion_fallback(ctx, space, cot)
    return tracker.config


def _exhaustion_fallback(ctx: AcquisitionContext, space, cot) -> Config:
    """Scan the whole feasible set for unevaluated configurations."""
    remaining = []
    for cfg in _enumerate_feasible(space, cot):
        if cfg not in ctx.evaluated:
            remaining.append(cfg)
            if len(remaining) >= 20_000:
                break
    if not remaining:
        raise SpaceExhausted("every feasible configuration has been evaluated")
    values, probs = _scores(ctx, remaining)
    if np.all(values == -np.inf):
        return remaining[_argbest(remaining, probs)]
    return remaining[_argbest(remaining, values)]
