"""Known-constraint expressions and the chain-of-trees feasible-set index.

Constraint grammar (surface syntax, one expression per constraint)::

    expr    -> or
    or      -> and ( "||" and )*
    and     -> unary ( "&&" unary )*
    unary   -> "!" unary | comparison
    compare -> sum ( ("<" | "<=" | ">" | ">=" | "==" | "!=") sum )?
    sum     -> term ( ("+" | "-") term )*
    term    -> factor ( ("*" | "/" | "%") factor )*
    factor  -> "-" factor | NUMBER | STRING | IDENT | "(" expr ")"

Identifiers name parameters of the space; categorical parameters may only be
compared for (in)equality against string literals; permutation parameters may
not appear in constraints at all.

The chain-of-trees stores every feasible combination of the co-dependent
discrete parameters as one tree per dependency group; leaf counts at every
node make exact uniform sampling over the feasible set a single weighted
descent per tree.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .space import Config, Parameter, SearchSpace, SpaceError

DEFAULT_NODE_CAP = 10_000_000


class ConstraintError(ValueError):
    """Syntax, name-resolution, or type error in a constraint expression."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (column {position})"
        super().__init__(message)
        self.position = position


# --------------------------------------------------------------------------
# Expression AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str
    index: int
    is_categorical: bool


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


class ConstraintExpr:
    """A parsed, type-checked boolean constraint over space parameters."""

    def __init__(self, root, text: str, variables: tuple[str, ...]):
        self.root = root
        self.text = text
        self.variables = variables  # referenced parameter names, declaration order

    def __repr__(self):
        return f"ConstraintExpr({self.text!r})"


_COMPARISONS = {"<", "<=", ">", ">=", "==", "!="}
_TWO_CHAR = {"<=", ">=", "==", "!=", "&&", "||"}
_SINGLE = {"<", ">", "+", "-", "*", "/", "%", "(", ")", "!"}


def _tokenize(text: str):
    """Yield (kind, value, column) triples; column is 1-based."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        col = i + 1
        two = text[i:i + 2]
        if two in _TWO_CHAR:
            tokens.append(("op", two, col))
            i += 2
        elif c in _SINGLE:
            tokens.append(("op", c, col))
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            # exponent part
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ConstraintError(f"bad number literal {lit!r}", col)
            tokens.append(("num", value, col))
            i = j
        elif c in "\"'":
            j = text.find(c, i + 1)
            if j < 0:
                raise ConstraintError("unterminated string literal", col)
            tokens.append(("str", text[i + 1:j], col))
            i = j + 1
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], col))
            i = j
        else:
            raise ConstraintError(f"unexpected character {c!r}", col)
    tokens.append(("eof", None, n + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, space: SearchSpace):
        self.text = text
        self.space = space
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables: list[str] = []

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, value, col = self.peek()
        if kind == "op" and value == op:
            return self.advance()
        raise ConstraintError(f"expected {op!r}", col)

    def fail(self, message):
        _, _, col = self.peek()
        raise ConstraintError(message, col)

    # each parse method returns (node, type) with type in {"num", "str", "bool"}
    def parse(self):
        node, typ = self.parse_or()
        kind, value, col = self.peek()
        if kind != "eof":
            raise ConstraintError(f"unexpected trailing input {value!r}", col)
        if typ != "bool":
            raise ConstraintError("constraint must be a boolean expression", 1)
        seen = sorted(set(self.variables), key=self.space.index_of)
        return ConstraintExpr(node, self.text, tuple(seen))

    def parse_or(self):
        node, typ = self.parse_and()
        while self._at_op("||"):
            self.advance()
            self._require(typ, "bool", "'||' needs boolean operands")
            right, rtyp = self.parse_and()
            self._require(rtyp, "bool", "'||' needs boolean operands")
            node, typ = BinOp("||", node, right), "bool"
        return node, typ

    def parse_and(self):
        node, typ = self.parse_unary()
        while self._at_op("&&"):
            self.advance()
            self._require(typ, "bool", "'&&' needs boolean operands")
            right, rtyp = self.parse_unary()
            self._require(rtyp, "bool", "'&&' needs boolean operands")
            node, typ = BinOp("&&", node, right), "bool"
        return node, typ

    def parse_unary(self):
        if self._at_op("!"):
            self.advance()
            node, typ = self.parse_unary()
            self._require(typ, "bool", "'!' needs a boolean operand")
            return Unary("!", node), "bool"
        return self.parse_comparison()

    def parse_comparison(self):
        node, typ = self.parse_sum()
        kind, value, col = self.peek()
        if kind == "op" and value in _COMPARISONS:
            self.advance()
            right, rtyp = self.parse_sum()
            if typ == "bool" or rtyp == "bool":
                raise ConstraintError(f"cannot compare boolean with {value!r}", col)
            if typ != rtyp:
                raise ConstraintError(
                    "comparison mixes numeric and categorical operands", col)
            if typ == "str" and value not in ("==", "!="):
                raise ConstraintError(
                    f"categorical values support only == and !=, not {value!r}", col)
            return BinOp(value, node, right), "bool"
        return node, typ

    def parse_sum(self):
        node, typ = self.parse_term()
        while self._at_op("+") or self._at_op("-"):
            op = self.advance()[1]
            self._require(typ, "num", f"{op!r} needs numeric operands")
            right, rtyp = self.parse_term()
            self._require(rtyp, "num", f"{op!r} needs numeric operands")
            node, typ = BinOp(op, node, right), "num"
        return node, typ

    def parse_term(self):
        node, typ = self.parse_factor()
        while self._at_op("*") or self._at_op("/") or self._at_op("%"):
            op = self.advance()[1]
            self._require(typ, "num", f"{op!r} needs numeric operands")
            right, rtyp = self.parse_factor()
            self._require(rtyp, "num", f"{op!r} needs numeric operands")
            node, typ = BinOp(op, node, right), "num"
        return node, typ

    def parse_factor(self):
        kind, value, col = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            node, typ = self.parse_factor()
            self._require(typ, "num", "unary '-' needs a numeric operand")
            return Unary("-", node), "num"
        if kind == "num":
            self.advance()
            return Num(value), "num"
        if kind == "str":
            self.advance()
            return Str(value), "str"
        if kind == "ident":
            self.advance()
            try:
                index = self.space.index_of(value)
            except SpaceError:
                raise ConstraintError(f"unknown identifier {value!r}", col) from None
            param = self.space.parameters[index]
            if param.kind == "permutation":
                raise ConstraintError(
                    f"permutation parameter {value!r} may not appear in constraints", col)
            self.variables.append(value)
            cat = param.kind == "categorical"
            return Var(value, index, cat), ("str" if cat else "num")
        if kind == "op" and value == "(":
            self.advance()
            node, typ = self.parse_or()
            self.expect_op(")")
            return node, typ
        raise ConstraintError("expected a value, identifier, or '('", col)

    def _at_op(self, op):
        kind, value, _ = self.peek()
        return kind == "op" and value == op

    def _require(self, typ, expected, message):
        if typ != expected:
            self.fail(message)


def parse_constraint(text: str, space: SearchSpace) -> ConstraintExpr:
    """Parse and type-check one constraint against the space's parameters."""
    return _Parser(text, space).parse()


class _NotDecidable(Exception):
    pass


NOT_YET_DECIDABLE = "not-yet-decidable"


def _eval_node(node, bindings):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Var):
        if node.name not in bindings:
            raise _NotDecidable()
        return bindings[node.name]
    if isinstance(node, Unary):
        v = _eval_node(node.operand, bindings)
        return (-v) if node.op == "-" else (not v)
    left = _eval_node(node.left, bindings)
    right = _eval_node(node.right, bindings)
    op = node.op
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        return left / right
    if op == "%":
        return left % right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op == "&&":
        return left and right
    return left or right  # "||"


def eval_constraint(expr: ConstraintExpr, cfg):
    """Evaluate a constraint on a full or partial configuration.

    ``cfg`` is either a mapping of parameter names to values or a full
    configuration tuple.  Returns ``True``/``False`` once every referenced
    parameter is bound, the string ``"not-yet-decidable"`` otherwise.
    Arithmetic faults (division or modulo by zero) make the constraint false:
    a schedule that divides by zero is infeasible, not a crash.
    """
    if not isinstance(cfg, dict):
        raise ConstraintError(
            "eval_constraint needs a name-to-value mapping; use space.as_dict(cfg)")
    try:
        return bool(_eval_node(expr.root, cfg))
    except _NotDecidable:
        return NOT_YET_DECIDABLE
    except (ZeroDivisionError, OverflowError):
        return False


# --------------------------------------------------------------------------
# Chain of trees
# --------------------------------------------------------------------------

class _Node:
    __slots__ = ("value", "children", "leaf_count")

    def __init__(self, value):
        self.value = value
        self.children = []
        self.leaf_count = 0


@dataclass
class _Group:
    """One tree over a set of co-dependent parameters (or one free parameter).

    Real and permutation parameters never appear in constraints, so their
    singleton groups are sampled directly instead of being materialized as
    trees (``kind`` is "real" or "permutation"; everything else is "tree").
    """
    indices: tuple[int, ...]          # parameter positions, declaration order
    root: Optional[_Node]             # None unless kind == "tree"
    kind: str = "tree"
    leaf_values: Optional[list] = None   # vectorized sampling support, lazy


class ChainOfTrees:
    """Forest of feasible partial configurations, one tree per dependency group.

    Cross products of one root-to-leaf path per tree enumerate exactly the
    feasible set.  Unconstrained discrete parameters appear as depth-1 trees;
    unconstrained real parameters are kept aside as continuous singletons
    (they cannot be enumerated and never occur in constraints).
    Immutable after construction.
    """

    def __init__(self, space: SearchSpace, groups: list[_Group]):
        self.space = space
        self.groups = groups

    # -- membership --------------------------------------------------------
    def contains(self, cfg: Config) -> bool:
        for g in self.groups:
            if g.kind != "tree":
                p = self.space.parameters[g.indices[0]]
                if not p.contains(cfg[g.indices[0]]):
                    return False
                continue
            node = g.root
            for i in g.indices:
                nxt = None
                for child in node.children:
                    if child.value == cfg[i]:
                        nxt = child
                        break
                if nxt is None:
                    return False
                node = nxt
        return True

    # -- counting / enumeration --------------------------------------------
    def count(self) -> int:
        """Feasible combinations of the enumerable parameters (real factor 1)."""
        total = 1
        for g in self.groups:
            if g.kind == "tree":
                total *= g.root.leaf_count
            elif g.kind == "permutation":
                total *= math.factorial(self.space.parameters[g.indices[0]].size)
        return total

    def enumerate(self):
        """Yield every feasible configuration (finite spaces only)."""
        import itertools

        values_per_group = []
        for g in self.groups:
            if g.kind == "real":
                raise SpaceError("cannot enumerate a space with real parameters")
            if g.kind == "permutation":
                m = self.space.parameters[g.indices[0]].size
                values_per_group.append(
                    [(q,) for q in itertools.permutations(range(1, m + 1))])
            else:
                values_per_group.append(g_paths(g.root, len(g.indices)))
        order = [i for g in self.groups for i in g.indices]
        slot = [order.index(i) for i in range(self.space.dimension)]

        def rec(gi, acc):
            if gi == len(self.groups):
                flat = [v for path in acc for v in path]
                yield tuple(flat[s] for s in slot)
                return
            for path in values_per_group[gi]:
                yield from rec(gi + 1, acc + [path])

        yield from rec(0, [])

    # -- sampling ------------------------------------------------------------
    def _ensure_leaf_arrays(self, g: _Group, cap: int = 200_000):
        if g.leaf_values is not None or g.kind != "tree":
            return
        if g.root.leaf_count > cap:
            return  # fall back to per-draw descent for very large trees
        g.leaf_values = g_paths(g.root, len(g.indices))

    def _sample_group(self, g: _Group, n: int, rng, biased: bool):
        if g.kind != "tree":
            p = self.space.parameters[g.indices[0]]
            return [(p.sample(rng),) for _ in range(n)]
        if not biased:
            self._ensure_leaf_arrays(g)
            if g.leaf_values is not None:
                idx = rng.integers(g.root.leaf_count, size=n)
                return [g.leaf_values[int(i)] for i in idx]
        out = []
        for _ in range(n):
            node = g.root
            path = []
            while node.children:
                if biased:
                    child = node.children[int(rng.integers(len(node.children)))]
                else:
                    weights = np.array([c.leaf_count for c in node.children], float)
                    child = node.children[int(rng.choice(len(node.children),
                                                         p=weights / weights.sum()))]
                path.append(child.value)
                node = child
            out.append(tuple(path))
        return out

    def _sample(self, n: int, rng, biased: bool) -> list[Config]:
        if n < 1:
            raise SpaceError("n must be >= 1")
        if self.count() == 0:
            raise SpaceError("feasible set is empty")
        dim = self.space.dimension
        per_group = [self._sample_group(g, n, rng, biased) for g in self.groups]
        out = []
        for k in range(n):
            cfg = [None] * dim
            for g, samples in zip(self.groups, per_group):
                for i, v in zip(g.indices, samples[k]):
                    cfg[i] = v
            out.append(tuple(cfg))
        return out

    def sample_leaf_uniform(self, n: int, rng) -> list[Config]:
        return self._sample(n, rng, biased=False)

    def sample_path_biased(self, n: int, rng) -> list[Config]:
        return self._sample(n, rng, biased=True)


def g_paths(root: _Node, depth: int) -> list[tuple]:
    """All full-depth root-to-leaf value paths of a tree."""
    out = []

    def rec(node, acc):
        if not node.children:
            if len(acc) == depth:  # a childless root means zero leaves
                out.append(tuple(acc))
            return
        for child in node.children:
            rec(child, acc + [child.value])

    rec(root, [])
    return out


def _dependency_groups(space: SearchSpace) -> list[tuple[int, ...]]:
    """Connected components of the parameter/constraint co-occurrence graph."""
    parent = list(range(space.dimension))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for expr in space.constraints:
        idx = [space.index_of(v) for v in expr.variables]
        for other in idx[1:]:
            union(idx[0], other)
    comps: dict[int, list[int]] = {}
    for i in range(space.dimension):
        comps.setdefault(find(i), []).append(i)
    return [tuple(sorted(v)) for _, v in sorted(comps.items())]


def build_cot(space: SearchSpace, node_cap: int = DEFAULT_NODE_CAP) -> ChainOfTrees:
    """Materialize the feasible set as a chain of trees.

    Parameters are grouped by constraint co-occurrence; within a group levels
    follow declaration order.  Expansion is depth-first, pruning a node as
    soon as the assigned prefix falsifies any constraint whose variables are
    all bound.  Raises on real-valued constrained parameters and when the
    total node count exceeds ``node_cap``; an empty feasible set is reported
    with a warning (``count() == 0``).
    """
    constrained = set()
    for expr in space.constraints:
        for name in expr.variables:
            constrained.add(space.index_of(name))
    for i in sorted(constrained):
        if space.parameters[i].kind == "real":
            raise SpaceError(
                f"real parameter {space.parameters[i].name!r} may not appear in "
                f"constraints (only finite discrete domains can be enumerated)")

    groups = []
    node_budget = [node_cap]
    for indices in _dependency_groups(space):
        if len(indices) == 1 and space.parameters[indices[0]].kind in ("real",
                                                                       "permutation"):
            groups.append(_Group(indices=indices, root=None,
                                 kind=space.parameters[indices[0]].kind))
            continue
        groups.append(_build_group(space, indices, node_budget))
    cot = ChainOfTrees(space, groups)
    if cot.count() == 0:
        warnings.warn("known constraints leave an empty feasible set", stacklevel=2)
    return cot


def _build_group(space: SearchSpace, indices: tuple[int, ...], node_budget) -> _Group:
    params = [space.parameters[i] for i in indices]
    names = [p.name for p in params]
    name_to_level = {n: lvl for lvl, n in enumerate(names)}
    # constraints become checkable at the deepest level binding their last variable
    checks_at: list[list[ConstraintExpr]] = [[] for _ in indices]
    for expr in space.constraints:
        if expr.variables and all(v in name_to_level for v in expr.variables):
            checks_at[max(name_to_level[v] for v in expr.variables)].append(expr)

    domains = [p.domain_values() for p in params]
    root = _Node(None)
    node_budget[0] -= 1

    def expand(node, level, bindings):
        if level == len(indices):
            node.leaf_count = 1
            return True
        any_child = False
        for value in domains[level]:
            bindings[names[level]] = value
            ok = True
            for expr in checks_at[level]:
                if eval_constraint(expr, bindings) is not True:
                    ok = False
                    break
            if ok:
                child = _Node(value)
                node_budget[0] -= 1
                if node_budget[0] < 0:
                    raise SpaceError(
                        "chain-of-trees node cap exceeded; transform or prune the "
                        "space (e.g. log-domain ordinals) to reduce its sparsity")
                if expand(child, level + 1, bindings):
                    node.children.append(child)
                    node.leaf_count += child.leaf_count
                    any_child = True
            del bindings[names[level]]
        return any_child

    expand(root, 0, {})
    return _Group(indices=indices, root=root)


# spec-parity function wrappers around the ChainOfTrees methods

def cot_contains(cot: ChainOfTrees, cfg: Config) -> bool:
    return cot.contains(cfg)


def cot_count(cot: ChainOfTrees) -> int:
    return cot.count()


def cot_sample_leaf_uniform(cot: ChainOfTrees, n: int, rng) -> list[Config]:
    return cot.sample_leaf_uniform(n, rng)


def cot_sample_path_biased(cot: ChainOfTrees, n: int, rng) -> list[Config]:
    return cot.sample_path_biased(n, rng)
