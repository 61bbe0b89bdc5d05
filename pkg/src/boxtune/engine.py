"""The tuning loop: initial random phase, model refits, proposals, budgets.

Each run owns a single seeded random generator; every stochastic step draws
from it in a fixed order, so one scenario + seed + method always reproduces
the same history.  Record timestamps come from a virtual clock (one tick per
evaluation) by default, keeping run artifacts byte-reproducible; pass a real
clock (e.g. ``time.monotonic``) to record wall-clock seconds instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .acquisition import AcquisitionContext, SpaceExhausted, optimize_acquisition
from .constraints import build_cot
from .feasibility import ThresholdSpec, rf_fit, sample_feasibility_threshold
from .space import Config, SearchSpace, lexicographic_min, sample_uniform
from .surrogate import LengthscalePrior, gp_fit

METHODS = ("bo", "random-uniform", "random-cot")


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvaluationRecord:
    iteration: int
    configuration: Config
    objective: Optional[float]      # present iff feasible
    feasible: bool
    phase: str                      # "doe" (random sampling) or "bo" (model-driven)
    timestamp: float


@dataclass(frozen=True)
class BudgetSpec:
    """Evaluation budget; tiny and small levels are 1/3 and 2/3 of full."""

    full: int

    @property
    def tiny(self) -> int:
        return math.ceil(self.full / 3)

    @property
    def small(self) -> int:
        return math.ceil(2 * self.full / 3)

    def resolve(self, level: str) -> int:
        if level not in ("tiny", "small", "full"):
            raise EngineError(f"unknown budget level {level!r}")
        return getattr(self, level) if level != "full" else self.full


@dataclass
class EngineOptions:
    """Ablation switches; the defaults are the full method."""

    permutation_metric: Optional[str] = None   # override every permutation parameter
    disable_log_transforms: bool = False       # drop log transforms of inputs and output
    disable_priors: bool = False               # pure MLE hyperparameter fit
    disable_local_search: bool = False         # best random candidate only
    disable_feasibility_model: bool = False
    disable_epsilon_filter: bool = False
    disable_advanced_hyperfit: bool = False    # best sampled candidate, no refinement
    cot_sampling: str = "leaf"                 # "leaf" (unbiased) or "path" (biased)
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    evaluation_timeout: float = 600.0          # used by external evaluators


@dataclass
class TuningRun:
    scenario_name: str
    seed: Optional[int]
    method: str
    space: SearchSpace
    history: list = field(default_factory=list)

    def best_feasible(self):
        return best_feasible(self.history)


def best_feasible(history):
    """Minimum-objective feasible record as (configuration, objective), or None."""
    best_value = math.inf
    best_configs = []
    for rec in history:
        if not rec.feasible:
            continue
        if rec.objective < best_value:
            best_value, best_configs = rec.objective, [rec.configuration]
        elif rec.objective == best_value:
            best_configs.append(rec.configuration)
    if not best_configs:
        return None
    return lexicographic_min(best_configs), best_value


def _effective_space(space: SearchSpace, options: EngineOptions) -> SearchSpace:
    if options.permutation_metric is None:
        return space
    params = [replace(p, permutation_metric=options.permutation_metric)
              if p.kind == "permutation" else p for p in space.parameters]
    return SearchSpace(params, space.constraint_texts)


class _Run:
    def __init__(self, scenario, evaluator, rng, on_record=None, clock=None):
        self.space = _effective_space(scenario.space, scenario.options)
        self.scenario = scenario
        self.options = scenario.options
        self.evaluator = evaluator
        self.rng = rng
        self.on_record = on_record
        self.clock = clock
        self._t0 = clock() if clock is not None else None
        self.history = []
        self.evaluated = set()
        self.cot = build_cot(self.space) if self.space.constraints else None
        self.budget = scenario.budget
        self.exhausted = False

    # -- bookkeeping --------------------------------------------------------
    def _timestamp(self):
        if self.clock is not None:
            return self.clock() - self._t0
        return float(len(self.history))

    def evaluate(self, cfg: Config, phase: str):
        objective, feasible = self.evaluator(cfg)
        record = EvaluationRecord(
            iteration=len(self.history),
            configuration=cfg,
            objective=float(objective) if feasible and objective is not None else None,
            feasible=bool(feasible),
            phase=phase,
            timestamp=self._timestamp(),
        )
        self.history.append(record)
        self.evaluated.add(cfg)
        if self.on_record is not None:
            self.on_record(record)

    @property
    def feasible_records(self):
        return [r for r in self.history if r.feasible]

    # -- random proposals ---------------------------------------------------
    def _draw_random(self) -> Config:
        method = self.scenario.method
        if self.cot is not None and method != "random-uniform":
            if self.options.cot_sampling == "path":
                return self.cot.sample_path_biased(1, self.rng)[0]
            return self.cot.sample_leaf_uniform(1, self.rng)[0]
        cfg = sample_uniform(self.space, 1, self.rng)[0]
        return cfg

    def propose_random(self) -> Optional[Config]:
        """A not-yet-evaluated configuration satisfying all known constraints."""
        for _ in range(200):
            cfg = self._draw_random()
            if self.cot is not None and not self.cot.contains(cfg):
                continue  # rejection front-end for dense draws
            if cfg not in self.evaluated:
                return cfg
        # sampling keeps colliding: enumerate what is left
        if any(p.kind == "real" for p in self.space.parameters):
            for _ in range(100_000):
                cfg = self._draw_random()
                if cfg not in self.evaluated and (self.cot is None
                                                  or self.cot.contains(cfg)):
                    return cfg
            raise EngineError("random sampling failed to find a fresh configuration")
        remaining = [c for c in self._enumerate_feasible() if c not in self.evaluated]
        if not remaining:
            return None
        return remaining[int(self.rng.integers(len(remaining)))]

    def _enumerate_feasible(self):
        if self.cot is not None:
            return self.cot.enumerate()
        import itertools

        domains = []
        for p in self.space.parameters:
            if p.kind == "permutation":
                domains.append([tuple(q) for q in
                                itertools.permutations(range(1, p.size + 1))])
            else:
                domains.append(p.domain_values())
        return itertools.product(*domains)

    # -- phases ---------------------------------------------------------------
    def random_phase(self, count: int):
        while len(self.history) < count:
            cfg = self.propose_random()
            if cfg is None:
                self.exhausted = True
                return
            self.evaluate(cfg, "doe")

    def _candidate_sampler(self):
        """Candidate source for the acquisition optimizer.

        Small finite feasible sets are enumerated outright (full coverage at
        lower cost than 5000 random draws); the biased path sampler is kept
        as-is since its bias is the point of that ablation.
        """
        from .acquisition import N_CANDIDATES

        opts = self.options
        if self.cot is not None and opts.cot_sampling == "path":
            return lambda n, rng: self.cot.sample_path_biased(n, rng)
        if self.cot is not None:
            if self.cot.count() <= N_CANDIDATES:
                cache = list(self.cot.enumerate())
                return lambda n, rng: cache
            return None
        if all(p.kind != "real" for p in self.space.parameters) \
                and self.space.dense_size() <= N_CANDIDATES:
            cache = list(self._enumerate_feasible())
            return lambda n, rng: cache
        return None

    def bo_phase(self):
        opts = self.options
        prior = None if opts.disable_priors else LengthscalePrior()
        use_transforms = not opts.disable_log_transforms
        log_objective = False if opts.disable_log_transforms else "auto"
        sampler = self._candidate_sampler()

        while len(self.history) < self.budget:
            feasible = self.feasible_records
            gp = gp_fit(
                self.space,
                [r.configuration for r in feasible],
                [r.objective for r in feasible],
                self.rng,
                prior=prior,
                log_objective=log_objective,
                use_transforms=use_transforms,
                advanced=not opts.disable_advanced_hyperfit,
            )
            feas_model = None
            if not opts.disable_feasibility_model and len(feasible) < len(self.history):
                feas_model = rf_fit(
                    self.space,
                    [r.configuration for r in self.history],
                    [r.feasible for r in self.history],
                    self.rng,
                    use_transforms=use_transforms,
                )
            eps = 0.0
            if feas_model is not None and not opts.disable_epsilon_filter:
                eps = sample_feasibility_threshold(opts.threshold, self.rng)
            _, f_best = best_feasible(self.history)
            ctx = AcquisitionContext(
                gp=gp,
                feas=feas_model,
                best_feasible_value=f_best,
                eps_f=eps,
                rng=self.rng,
                evaluated=self.evaluated,
            )
            try:
                cfg = optimize_acquisition(
                    ctx, self.space, self.cot, sample_fn=sampler,
                    local_search=not opts.disable_local_search,
                )
            except SpaceExhausted:
                self.exhausted = True
                return
            self.evaluate(cfg, "bo")


def doe_size(scenario) -> int:
    if getattr(scenario, "doe_size", None):
        return scenario.doe_size
    return max(10, scenario.space.dimension + 1)


def run_doe(scenario, evaluator, rng, on_record=None, clock=None) -> list:
    """Just the initial uniform-sampling phase; returns its history."""
    run = _Run(scenario, evaluator, rng, on_record, clock)
    run.random_phase(min(doe_size(scenario), run.budget))
    return run.history


def run_bo_loop(scenario, evaluator, rng, on_record=None, clock=None) -> TuningRun:
    """Full tuning run for any method; exactly ``budget`` evaluations unless
    the feasible set is exhausted first.

    ``scenario`` provides: ``space``, ``budget``, ``method``, ``options``
    (:class:`EngineOptions`), optional ``doe_size``, ``name`` and ``seed``.
    ``evaluator`` maps a configuration tuple to ``(objective, feasible)``.
    """
    method = scenario.method
    if method not in METHODS:
        raise EngineError(f"unknown method {method!r}")
    if method == "random-cot" and not scenario.space.constraints:
        # no constraints means the chain of trees is the dense space anyway
        pass
    run = _Run(scenario, evaluator, rng, on_record, clock)

    if method in ("random-uniform", "random-cot"):
        run.random_phase(run.budget)
    else:
        run.random_phase(min(doe_size(scenario), run.budget))
        # cold start: the surrogate needs at least two feasible points
        while (not run.exhausted and len(run.history) < run.budget
               and len(run.feasible_records) < 2):
            cfg = run.propose_random()
            if cfg is None:
                run.exhausted = True
                break
            run.evaluate(cfg, "doe")
        if not run.exhausted and len(run.feasible_records) >= 2:
            run.bo_phase()

    return TuningRun(
        scenario_name=getattr(scenario, "name", "run"),
        seed=getattr(scenario, "seed", None),
        method=method,
        space=scenario.space,
        history=run.history,
    )
