"""Search-space definition: typed parameters, configurations, neighborhoods.

A search space is an ordered list of typed parameters plus optional
constraint expressions (surface syntax, parsed by :mod:`boxtune.constraints`).
Configurations are plain tuples with one value per parameter, in declaration
order.  Permutation values are tuples of the integers ``1..m``, each exactly
once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

KINDS = ("real", "integer", "ordinal", "categorical", "permutation")
TRANSFORMS = ("none", "log")
PERMUTATION_METRICS = ("kendall", "spearman", "hamming", "naive")

# Real intervals are discretized on a fixed uniform grid for neighbor
# generation only; sampling and the surrogate treat them continuously.
REAL_NEIGHBOR_GRID = 64

Config = tuple


class SpaceError(ValueError):
    """Invalid parameter, configuration, or space definition."""


@dataclass(frozen=True)
class Parameter:
    """One tunable parameter of the search space.

    Use the classmethod constructors (:meth:`real`, :meth:`integer`,
    :meth:`ordinal`, :meth:`categorical`, :meth:`permutation`) rather than
    filling the fields by hand.
    """

    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    values: tuple = ()
    size: int = 0
    transform: str = "none"
    permutation_metric: str = "spearman"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"unknown parameter kind {self.kind!r}")
        if self.transform not in TRANSFORMS:
            raise SpaceError(f"unknown transform {self.transform!r}")
        if self.kind in ("real", "integer"):
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise SpaceError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "ordinal":
            if len(self.values) < 1:
                raise SpaceError(f"{self.name}: ordinal needs at least one value")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise SpaceError(f"{self.name}: ordinal values must be strictly increasing")
        elif self.kind == "categorical":
            if len(self.values) < 1:
                raise SpaceError(f"{self.name}: categorical needs at least one label")
            if len(set(self.values)) != len(self.values):
                raise SpaceError(f"{self.name}: categorical labels must be distinct")
        elif self.kind == "permutation":
            if self.size < 2:
                raise SpaceError(f"{self.name}: permutation needs size >= 2")
            if self.permutation_metric not in PERMUTATION_METRICS:
                raise SpaceError(f"{self.name}: unknown permutation metric "
                                 f"{self.permutation_metric!r}")
        if self.transform == "log":
            if self.kind not in ("real", "integer", "ordinal"):
                raise SpaceError(f"{self.name}: log transform needs a numeric kind")
            lo = self.lo if self.kind != "ordinal" else self.values[0]
            if lo <= 0:
                raise SpaceError(f"{self.name}: log transform requires a strictly "
                                 f"positive domain")

    # --- constructors -----------------------------------------------------
    @classmethod
    def real(cls, name, lo, hi, transform="none"):
        return cls(name, "real", lo=float(lo), hi=float(hi), transform=transform)

    @classmethod
    def integer(cls, name, lo, hi, transform="none"):
        return cls(name, "integer", lo=int(lo), hi=int(hi), transform=transform)

    @classmethod
    def ordinal(cls, name, values, transform="none"):
        return cls(name, "ordinal", values=tuple(values), transform=transform)

    @classmethod
    def categorical(cls, name, labels):
        return cls(name, "categorical", values=tuple(labels))

    @classmethod
    def permutation(cls, name, size, metric="spearman"):
        return cls(name, "permutation", size=int(size), permutation_metric=metric)

    # --- domain helpers ---------------------------------------------------
    @property
    def is_numeric(self) -> bool:
        return self.kind in ("real", "integer", "ordinal")

    def contains(self, value) -> bool:
        if self.kind == "real":
            return isinstance(value, (int, float)) and self.lo <= value <= self.hi
        if self.kind == "integer":
            return isinstance(value, (int, np.integer)) and self.lo <= value <= self.hi
        if self.kind in ("ordinal", "categorical"):
            return value in self.values
        # permutation: bijection over 1..m
        return (isinstance(value, tuple) and len(value) == self.size
                and sorted(value) == list(range(1, self.size + 1)))

    def domain_size(self) -> float:
        """Number of distinct values; ``inf`` for real parameters."""
        if self.kind == "real":
            return math.inf
        if self.kind == "integer":
            return int(self.hi) - int(self.lo) + 1
        if self.kind == "permutation":
            return math.factorial(self.size)
        return len(self.values)

    def domain_values(self) -> list:
        """All values of a finite domain, in canonical order."""
        if self.kind == "integer":
            return list(range(int(self.lo), int(self.hi) + 1))
        if self.kind in ("ordinal", "categorical"):
            return list(self.values)
        raise SpaceError(f"{self.name}: domain of kind {self.kind} is not enumerable")

    def numeric_bounds(self):
        if self.kind == "ordinal":
            return float(self.values[0]), float(self.values[-1])
        return float(self.lo), float(self.hi)

    def sample(self, rng: np.random.Generator):
        if self.kind == "real":
            return float(rng.uniform(self.lo, self.hi))
        if self.kind == "integer":
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        if self.kind in ("ordinal", "categorical"):
            return self.values[int(rng.integers(len(self.values)))]
        return tuple(int(v) for v in rng.permutation(self.size) + 1)


def transform_value(param: Parameter, raw) -> float:
    """Normalized coordinate of ``raw`` used in distance computations.

    Numeric kinds are optionally log-transformed, then min-max scaled so the
    parameter's domain maps onto [0, 1].  Categorical and permutation values
    pass through untouched.
    """
    if not param.is_numeric:
        return raw
    if not param.contains(raw):
        raise SpaceError(f"{param.name}: value {raw!r} outside domain")
    lo, hi = param.numeric_bounds()
    v = float(raw)
    if param.transform == "log":
        if v <= 0:
            raise SpaceError(f"{param.name}: log transform of non-positive value {raw!r}")
        v, lo, hi = math.log(v), math.log(lo), math.log(hi)
    if hi == lo:
        return 0.0
    return (v - lo) / (hi - lo)


class SearchSpace:
    """Ordered collection of parameters plus known-constraint expressions.

    Constraints are given in surface syntax (e.g. ``"p1 >= 2*p2"``) and are
    parsed eagerly against the parameter list; see
    :func:`boxtune.constraints.parse_constraint` for the grammar.
    Immutable after construction.
    """

    def __init__(self, parameters: Sequence[Parameter], constraints: Iterable[str] = ()):
        params = tuple(parameters)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise SpaceError("parameter names must be unique")
        self.parameters = params
        self._index = {p.name: i for i, p in enumerate(params)}
        self.constraint_texts = tuple(constraints)
        if self.constraint_texts:
            from .constraints import parse_constraint  # deferred: avoids import cycle
            self.constraints = tuple(parse_constraint(text, self)
                                     for text in self.constraint_texts)
        else:
            self.constraints = ()

    @property
    def dimension(self) -> int:
        return len(self.parameters)

    @property
    def names(self) -> tuple:
        return tuple(p.name for p in self.parameters)

    def parameter(self, name: str) -> Parameter:
        try:
            return self.parameters[self._index[name]]
        except KeyError:
            raise SpaceError(f"unknown parameter {name!r}") from None

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SpaceError(f"unknown parameter {name!r}") from None

    def validate(self, cfg: Config) -> None:
        if len(cfg) != len(self.parameters):
            raise SpaceError(f"configuration has {len(cfg)} values, "
                             f"space has {len(self.parameters)} parameters")
        for p, v in zip(self.parameters, cfg):
            if not p.contains(v):
                raise SpaceError(f"{p.name}: value {v!r} outside domain")

    def as_dict(self, cfg: Config) -> dict:
        return dict(zip(self.names, cfg))

    def from_dict(self, mapping: dict) -> Config:
        cfg = []
        for p in self.parameters:
            if p.name not in mapping:
                raise SpaceError(f"missing value for parameter {p.name!r}")
            v = mapping[p.name]
            if p.kind == "permutation" and isinstance(v, (list, np.ndarray)):
                v = tuple(int(x) for x in v)
            if p.kind == "integer" and isinstance(v, float) and v.is_integer():
                v = int(v)
            cfg.append(v)
        cfg = tuple(cfg)
        self.validate(cfg)
        return cfg

    def dense_size(self) -> float:
        """Size of the unconstrained cross-product space (``inf`` if any real)."""
        total = 1
        for p in self.parameters:
            s = p.domain_size()
            if math.isinf(s):
                return math.inf
            total *= s
        return total

    def __repr__(self):
        return f"SearchSpace({', '.join(f'{p.name}:{p.kind}' for p in self.parameters)})"


def _param_neighbors(param: Parameter, value) -> list:
    """Values reachable by a single step in one parameter (excluding ``value``)."""
    if param.kind == "integer":
        out = [value + s for s in (-1, 1) if param.lo <= value + s <= param.hi]
        return out
    if param.kind == "ordinal":
        i = param.values.index(value)
        return [param.values[j] for j in (i - 1, i + 1) if 0 <= j < len(param.values)]
    if param.kind == "categorical":
        return [v for v in param.values if v != value]
    if param.kind == "real":
        step = (param.hi - param.lo) / (REAL_NEIGHBOR_GRID - 1)
        i = round((value - param.lo) / step)
        out = []
        for j in (i - 1, i + 1):
            if 0 <= j < REAL_NEIGHBOR_GRID:
                v = param.lo + j * step
                if v != value:
                    out.append(v)
        return out
    # permutation: all transpositions (m*(m-1)/2 of them)
    out = []
    m = param.size
    for a in range(m):
        for b in range(a + 1, m):
            w = list(value)
            w[a], w[b] = w[b], w[a]
            out.append(tuple(w))
    return out


def neighbors(space: SearchSpace, cfg: Config, cot=None) -> list[Config]:
    """All configurations differing from ``cfg`` in exactly one parameter.

    Ordinal/integer parameters step to adjacent values, categoricals to every
    other label, reals move one step on a fixed 64-point grid, permutations
    swap any two positions.  When a chain-of-trees is supplied only members
    of it (i.e. configurations satisfying all known constraints) are kept.
    Never contains ``cfg`` itself or duplicates.
    """
    out = []
    seen = set()
    for i, param in enumerate(space.parameters):
        for v in _param_neighbors(param, cfg[i]):
            cand = cfg[:i] + (v,) + cfg[i + 1:]
            if cand in seen:
                continue
            seen.add(cand)
            if cot is not None and not cot.contains(cand):
                continue
            out.append(cand)
    return out


def sample_uniform(space: SearchSpace, n: int, rng: np.random.Generator) -> list[Config]:
    """``n`` independent uniform draws from the dense cross-product space.

    Known constraints are ignored here; this is the "uniform" baseline and
    the rejection front-end used when no chain-of-trees is available.
    """
    if n < 1:
        raise SpaceError("n must be >= 1")
    cols = []
    for p in space.parameters:
        if p.kind == "real":
            cols.append([float(v) for v in rng.uniform(p.lo, p.hi, size=n)])
        elif p.kind == "integer":
            cols.append([int(v) for v in rng.integers(int(p.lo), int(p.hi) + 1, size=n)])
        elif p.kind in ("ordinal", "categorical"):
            idx = rng.integers(len(p.values), size=n)
            cols.append([p.values[int(i)] for i in idx])
        else:
            cols.append([tuple(int(v) for v in rng.permutation(p.size) + 1)
                         for _ in range(n)])
    return [tuple(col[i] for col in cols) for i in range(n)]


def lexicographic_min(configs: Iterable[Config]) -> Config:
    """Deterministic tie-breaker: lexicographically smallest value tuple."""
    return min(configs)
