"""Team-semantics satisfaction with budgets and sound, flag-driven prunings.

The evaluator implements the lax rules: disjunction splits the team into a
cover, an existential quantifier supplements the team by a nonempty-set
valued choice function, a universal quantifier duplicates it, a hook
conditions it, a diamond picks a nonempty subteam, and a dependency atom
projects it onto a term tuple.

Enumeration is exponential in general, so four prunings cut the search when
the relevant closure flags permit.  Every pruning is sound and complete;
correctness never depends on a flag (an ``unknown`` flag just disables the
shortcut):

* downward-closed disjuncts: covers shrink to two-way partitions, and each
  assignment's feasible sides are prefiltered by its singleton verdicts;
* downward-closed existential bodies: choice functions shrink to
  single-value choices, prefiltered per assignment by singleton verdicts,
  with the full supplemented team still checked at each leaf;
* a top-level constancy conjunct over the quantified variable forces the
  choice function to be constant, so only |M| candidates exist;
* subformulas that are downward closed, union closed, and have the empty
  team property are flat, and evaluate per assignment.

Resource caps (team size, enumeration count, recursion depth, wall clock)
raise :class:`BudgetExceededError` instead of ever returning a wrong answer.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import dependencies as deps
from .formulas import (
    And,
    Const,
    DepAtom,
    Diamond,
    EqAtom,
    Exists,
    Forall,
    Formula,
    GenericDep,
    Hook,
    Or,
    RelAtom,
    Truth,
    Var,
    free_vars,
    is_first_order,
)
from .semantics import EvalError, Model, Team, UnboundVariableError


class BudgetExceededError(EvalError):
    """An enumeration or size cap was hit; the result is unknown, not false."""

    def __init__(self, limit: str, value):
        super().__init__(f"evaluation budget exceeded: {limit} (cap {value})")
        self.limit = limit


@dataclass(frozen=True)
class EvalOptions:
    """Pruning switches and resource caps.

    ``flat_rowwise`` and ``locality_restrict`` are theorem-backed
    optimizations; the test suites that verify those very theorems switch
    them off so the raw enumeration rules are what gets exercised.
    """

    flat_rowwise: bool = True
    locality_restrict: bool = True
    downward_pruning: bool = True
    constancy_guard: bool = True
    max_team_rows: int = 200_000
    max_branches: int = 20_000_000
    max_steps: int = 50_000_000
    max_depth: int = 500
    timeout_seconds: Optional[float] = None


DEFAULT_OPTIONS = EvalOptions()

# Options for exercising the plain enumeration semantics (property tests).
RAW_RULES_OPTIONS = EvalOptions(
    flat_rowwise=False,
    locality_restrict=False,
    downward_pruning=False,
    constancy_guard=False,
)


class _Budget:
    __slots__ = ("steps", "branches", "depth", "opts", "deadline", "_tick")

    def __init__(self, opts: EvalOptions):
        self.steps = 0
        self.branches = 0
        self.depth = 0
        self.opts = opts
        self.deadline = (
            time.monotonic() + opts.timeout_seconds if opts.timeout_seconds else None
        )
        self._tick = 0

    def step(self, rows: int):
        self.steps += 1
        if self.steps > self.opts.max_steps:
            raise BudgetExceededError("evaluation steps", self.opts.max_steps)
        if rows > self.opts.max_team_rows:
            raise BudgetExceededError("team size", self.opts.max_team_rows)
        self._maybe_clock()

    def branch(self):
        self.branches += 1
        if self.branches > self.opts.max_branches:
            raise BudgetExceededError("enumeration branches", self.opts.max_branches)
        self._maybe_clock()

    def grow(self, rows: int):
        if rows > self.opts.max_team_rows:
            raise BudgetExceededError("team size", self.opts.max_team_rows)

    def _maybe_clock(self):
        if self.deadline is None:
            return
        self._tick += 1
        if self._tick & 0x1FFF == 0 and time.monotonic() > self.deadline:
            raise BudgetExceededError("timeout", self.opts.timeout_seconds)


class Evaluator:
    """Evaluates formulas on teams over one fixed model.

    The memo table is keyed by subformula identity and a canonical team
    encoding (value rows over the node's sorted variable set, elements
    encoded by their domain index), so it can be shared across many top
    level calls on the same model.
    """

    def __init__(
        self,
        model: Model,
        registry: Optional[deps.Registry] = None,
        options: EvalOptions = DEFAULT_OPTIONS,
    ):
        self.model = model
        self.registry = registry if registry is not None else deps.builtin_registry()
        self.options = options
        self._n = len(model.domain)
        self._int_relations = {
            name: frozenset(tuple(model.element_index(e) for e in t) for t in tuples)
            for name, tuples in model.relations.items()
        }
        self._memo: dict = {}
        self._fv: dict[int, tuple[str, ...]] = {}
        self._flat: dict[int, bool] = {}
        self._dc: dict[int, bool] = {}
        self._conj: dict[int, list[Formula]] = {}
        self._guard: dict[int, bool] = {}
        self._preds: dict = {}
        self._dep_eval: dict[int, Callable] = {}
        self._proj_idx: dict = {}
        self._nodes: list[Formula] = []  # keep prepared nodes alive for id() keys
        self._subset_values: Optional[list[tuple[int, ...]]] = None
        self._budget: Optional[_Budget] = None

    # -- public entry -------------------------------------------------------

    def evaluate(self, team: Team, formula: Formula) -> bool:
        fv = free_vars(formula)
        missing = fv - set(team.variables)
        if missing:
            raise UnboundVariableError(
                f"team does not assign free variables {sorted(missing)}"
            )
        self._prepare(formula)
        if self.options.locality_restrict:
            variables = tuple(sorted(fv))
        else:
            variables = tuple(sorted(team.variables))
        index = self.model.element_index
        rows = frozenset(
            tuple(index(s[v]) for v in variables) for s in team.assignments
        )
        self._budget = _Budget(self.options)
        return self._eval(formula, variables, rows)

    @property
    def last_stats(self) -> dict:
        b = self._budget
        return {} if b is None else {"steps": b.steps, "branches": b.branches}

    # -- preparation --------------------------------------------------------

    def _prepare(self, node: Formula):
        if id(node) in self._fv:
            return
        self._nodes.append(node)
        self._fv[id(node)] = tuple(sorted(free_vars(node)))

        flat = True
        dc = True
        if isinstance(node, (Truth, RelAtom, EqAtom)):
            pass
        elif isinstance(node, DepAtom):
            spec = self.registry.lookup(node.name, len(node.terms))
            if spec is None:
                raise EvalError(
                    f"dependency '{node.name}' not registered at arity {len(node.terms)}"
                )
            flags = spec.flags
            flat = (
                flags.downward == deps.ASSERTED
                and flags.union == deps.ASSERTED
                and flags.empty_team == deps.ASSERTED
            )
            dc = flags.downward == deps.ASSERTED
        elif isinstance(node, GenericDep):
            flat = dc = False
        elif isinstance(node, Diamond):
            self._prepare(node.body)
            flat = dc = False
        elif isinstance(node, Hook):
            if not is_first_order(node.antecedent):
                raise EvalError("hook antecedent must be first order")
            self._prepare(node.consequent)
            flat = self._flat[id(node.consequent)]
            dc = self._dc[id(node.consequent)]
        elif isinstance(node, (And, Or)):
            self._prepare(node.left)
            self._prepare(node.right)
            flat = self._flat[id(node.left)] and self._flat[id(node.right)]
            dc = self._dc[id(node.left)] and self._dc[id(node.right)]
            if isinstance(node, And):
                parts = _flatten_and(node)
                for p in parts:
                    self._prepare(p)
                self._conj[id(node)] = sorted(parts, key=_conjunct_cost)
        elif isinstance(node, (Exists, Forall)):
            self._prepare(node.body)
            flat = self._flat[id(node.body)]
            dc = self._dc[id(node.body)]
            if isinstance(node, Exists):
                self._guard[id(node)] = any(
                    isinstance(p, DepAtom)
                    and p.name == deps.CONSTANCY
                    and any(isinstance(t, Var) and t.name == node.var for t in p.terms)
                    for p in _flatten_and(node.body)
                )
        else:
            raise TypeError(f"not a formula: {node!r}")
        self._flat[id(node)] = flat
        self._dc[id(node)] = dc

    # -- compiled row predicates for first-order content ---------------------

    def _element_int(self, name: str) -> int:
        return self.model.element_index(self.model.resolve_constant(name))

    def _term_getter(self, t, slots):
        if isinstance(t, Var):
            try:
                return True, slots[t.name]
            except KeyError:
                raise UnboundVariableError(f"variable '{t.name}' is not assigned") from None
        return False, self._element_int(t.name)

    def _compile_fo(self, f: Formula, slots: dict[str, int], width: int, relations=None):
        rels = relations if relations is not None else self._int_relations
        n = self._n
        if isinstance(f, Truth):
            pos = f.positive
            return lambda row: pos
        if isinstance(f, RelAtom):
            rel = rels.get(f.name)
            if rel is None:
                raise EvalError(f"unknown relation '{f.name}'")
            getters = [self._term_getter(t, slots) for t in f.terms]
            pos = f.positive
            indirect = isinstance(rel, list)  # one-element cell, see _compile_dep
            if not indirect and len(getters) == 2:
                (ia, a), (ib, b) = getters
                if ia and ib:
                    return lambda row: ((row[a], row[b]) in rel) == pos
                if ia:
                    return lambda row: ((row[a], b) in rel) == pos
                if ib:
                    return lambda row: ((a, row[b]) in rel) == pos
                return lambda row: ((a, b) in rel) == pos
            if not indirect and len(getters) == 1:
                (ia, a) = getters[0]
                if ia:
                    return lambda row: ((row[a],) in rel) == pos
                return lambda row: ((a,) in rel) == pos
            if indirect:
                return (
                    lambda row: (
                        tuple(row[v] if isv else v for isv, v in getters) in rel[0]
                    )
                    == pos
                )
            return (
                lambda row: (tuple(row[v] if isv else v for isv, v in getters) in rel)
                == pos
            )
        if isinstance(f, EqAtom):
            (ia, a) = self._term_getter(f.left, slots)
            (ib, b) = self._term_getter(f.right, slots)
            pos = f.positive
            if ia and ib:
                return lambda row: (row[a] == row[b]) == pos
            if ia:
                return lambda row: (row[a] == b) == pos
            if ib:
                return lambda row: (a == row[b]) == pos
            return lambda row: (a == b) == pos
        if isinstance(f, And):
            l = self._compile_fo(f.left, slots, width, relations)
            r = self._compile_fo(f.right, slots, width, relations)
            return lambda row: l(row) and r(row)
        if isinstance(f, Or):
            l = self._compile_fo(f.left, slots, width, relations)
            r = self._compile_fo(f.right, slots, width, relations)
            return lambda row: l(row) or r(row)
        if isinstance(f, Exists):
            sub = self._compile_fo(
                f.body, {**slots, f.var: width}, width + 1, relations
            )
            rng = range(n)
            return lambda row: any(sub(row + (m,)) for m in rng)
        if isinstance(f, Forall):
            sub = self._compile_fo(
                f.body, {**slots, f.var: width}, width + 1, relations
            )
            rng = range(n)
            return lambda row: all(sub(row + (m,)) for m in rng)
        raise EvalError(f"{type(f).__name__} is not first-order content")

    def _pred_for(self, node: Formula, variables: tuple[str, ...]):
        key = (id(node), variables)
        pred = self._preds.get(key)
        if pred is None:
            slots = {v: i for i, v in enumerate(variables)}
            pred = self._compile_fo(node, slots, len(variables))
            self._preds[key] = pred
        return pred

    def _compile_dep(self, node: Formula, variables: tuple[str, ...]):
        """Projection plus decision procedure for a dependency atom node."""
        key = (id(node), variables)
        fn = self._preds.get(key)
        if fn is not None:
            return fn
        slots = {v: i for i, v in enumerate(variables)}
        if isinstance(node, DepAtom):
            spec = self.registry.lookup(node.name, len(node.terms))
            getters = [self._term_getter(t, slots) for t in node.terms]
            arity = spec.arity
            if spec.name == deps.TOTALITY:
                full = self._n ** arity
                check = lambda tuples: len(tuples) == full
            elif spec.fast_check is not None:
                fast = spec.fast_check
                check = lambda tuples: fast(arity, tuples)
            else:
                cell = [frozenset()]
                sent_pred = self._compile_fo(
                    spec.sentence, {}, 0, relations={deps.DEP_SYMBOL: cell}
                )
                def check(tuples, _cell=cell, _pred=sent_pred):
                    _cell[0] = tuples
                    return _pred(())
        else:  # GenericDep
            getters = [self._term_getter(t, slots) for t in node.terms]
            cell = [frozenset()]
            rels = dict(self._int_relations)
            rels[node.symbol] = cell
            sent_pred = self._compile_fo(node.sentence, {}, 0, relations=rels)
            def check(tuples, _cell=cell, _pred=sent_pred):
                _cell[0] = tuples
                return _pred(())

        def fn(rows, _getters=tuple(getters), _check=check):
            proj = frozenset(
                tuple(row[v] if isv else v for isv, v in _getters) for row in rows
            )
            return _check(proj)

        self._preds[key] = fn
        return fn

    # -- core recursion ------------------------------------------------------

    def _restrict_to(self, node, variables, rows):
        fvs = self._fv[id(node)]
        if variables == fvs:
            return fvs, rows
        key = (id(node), variables)
        idx = self._proj_idx.get(key)
        if idx is None:
            pos = {v: i for i, v in enumerate(variables)}
            idx = tuple(pos[v] for v in fvs)
            self._proj_idx[key] = idx
        rows = frozenset(tuple(r[i] for i in idx) for r in rows)
        return fvs, rows

    def _insert_pos(self, variables: tuple[str, ...], var: str) -> int:
        lo = 0
        for i, v in enumerate(variables):
            if v < var:
                lo = i + 1
        return lo

    def _drop_var(self, variables, rows, var):
        if var not in variables:
            return variables, rows
        i = variables.index(var)
        variables = variables[:i] + variables[i + 1 :]
        rows = frozenset(r[:i] + r[i + 1 :] for r in rows)
        return variables, rows

    def _eval(self, node: Formula, variables: tuple[str, ...], rows: frozenset) -> bool:
        b = self._budget
        b.step(len(rows))
        if self.options.locality_restrict:
            variables, rows = self._restrict_to(node, variables, rows)
        key = (id(node), variables, rows)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        b.depth += 1
        if b.depth > self.options.max_depth:
            raise BudgetExceededError("recursion depth", self.options.max_depth)
        try:
            result = self._dispatch(node, variables, rows)
        finally:
            b.depth -= 1
        self._memo[key] = result
        return result

    def _dispatch(self, node, variables, rows) -> bool:
        if isinstance(node, (Truth, RelAtom, EqAtom)):
            pred = self._pred_for(node, variables)
            return all(map(pred, rows))

        if (
            self.options.flat_rowwise
            and len(rows) > 1
            and self._flat[id(node)]
        ):
            return all(
                self._eval(node, variables, frozenset((r,))) for r in sorted(rows)
            )

        if isinstance(node, And):
            for part in self._conj[id(node)]:
                if not self._eval(part, variables, rows):
                    return False
            return True

        if isinstance(node, Or):
            return self._eval_or(node, variables, rows)

        if isinstance(node, Exists):
            return self._eval_exists(node, variables, rows)

        if isinstance(node, Forall):
            variables, rows = self._drop_var(variables, rows, node.var)
            pos = self._insert_pos(variables, node.var)
            new_vars = variables[:pos] + (node.var,) + variables[pos:]
            self._budget.grow(len(rows) * self._n)
            rows2 = frozenset(
                r[:pos] + (m,) + r[pos:] for r in rows for m in range(self._n)
            )
            return self._eval(node.body, new_vars, rows2)

        if isinstance(node, Hook):
            pred = self._pred_for(node.antecedent, variables)
            kept = frozenset(r for r in rows if pred(r))
            return self._eval(node.consequent, variables, kept)

        if isinstance(node, Diamond):
            ordered = sorted(rows)
            if self.options.downward_pruning and self._dc[id(node.body)]:
                for r in ordered:
                    self._budget.branch()
                    if self._eval(node.body, variables, frozenset((r,))):
                        return True
                return False
            for mask in range(1, 1 << len(ordered)):
                self._budget.branch()
                sub = frozenset(
                    ordered[i] for i in range(len(ordered)) if mask >> i & 1
                )
                if self._eval(node.body, variables, sub):
                    return True
            return False

        if isinstance(node, (DepAtom, GenericDep)):
            fn = self._compile_dep(node, variables)
            return fn(rows)

        raise TypeError(f"not a formula: {node!r}")

    def _eval_or(self, node: Or, variables, rows) -> bool:
        left, right = node.left, node.right
        ordered = sorted(rows)
        if (
            self.options.downward_pruning
            and self._dc[id(left)]
            and self._dc[id(right)]
        ):
            # Both sides downward closed: any cover shrinks to a partition,
            # and a side can host an assignment only if it accepts it alone.
            forced_left, forced_right, both = [], [], []
            for r in ordered:
                single = frozenset((r,))
                okl = self._eval(left, variables, single)
                okr = self._eval(right, variables, single)
                if okl and okr:
                    both.append(r)
                elif okl:
                    forced_left.append(r)
                elif okr:
                    forced_right.append(r)
                else:
                    return False
            for combo in itertools.product((0, 1), repeat=len(both)):
                self._budget.branch()
                y = frozenset(forced_left) | frozenset(
                    r for r, side in zip(both, combo) if side == 0
                )
                z = frozenset(forced_right) | frozenset(
                    r for r, side in zip(both, combo) if side == 1
                )
                if self._eval(left, variables, y) and self._eval(right, variables, z):
                    return True
            return False
        # General lax covers: each assignment goes left, right, or both.
        for combo in itertools.product((0, 1, 2), repeat=len(ordered)):
            self._budget.branch()
            y = frozenset(r for r, c in zip(ordered, combo) if c != 1)
            z = frozenset(r for r, c in zip(ordered, combo) if c != 0)
            if self._eval(left, variables, y) and self._eval(right, variables, z):
                return True
        return False

    def _eval_exists(self, node: Exists, variables, rows) -> bool:
        variables, rows = self._drop_var(variables, rows, node.var)
        pos = self._insert_pos(variables, node.var)
        new_vars = variables[:pos] + (node.var,) + variables[pos:]
        body = node.body
        n = self._n
        ordered = sorted(rows)

        def extend(r, m):
            return r[:pos] + (m,) + r[pos:]

        if self.options.constancy_guard and self._guard.get(id(node), False):
            # A top-level constancy conjunct over the bound variable forces
            # every choice set to be one shared singleton.
            for m in range(n):
                self._budget.branch()
                team = frozenset(extend(r, m) for r in ordered)
                if self._eval(body, new_vars, team):
                    return True
            return False

        if self.options.downward_pruning and self._dc[id(body)]:
            candidates = []
            for r in ordered:
                ok = [
                    m
                    for m in range(n)
                    if self._eval(body, new_vars, frozenset((extend(r, m),)))
                ]
                if not ok:
                    return False
                candidates.append(ok)
            for combo in itertools.product(*candidates):
                self._budget.branch()
                team = frozenset(extend(r, m) for r, m in zip(ordered, combo))
                if self._eval(body, new_vars, team):
                    return True
            return False

        # General lax choice functions: nonempty value sets per assignment,
        # enumerated as bit masks in ascending order.
        if self._subset_values is None:
            self._subset_values = [
                tuple(m for m in range(n) if mask >> m & 1) for mask in range(1 << n)
            ]
        values = self._subset_values
        masks = range(1, 1 << n)
        for combo in itertools.product(masks, repeat=len(ordered)):
            self._budget.branch()
            self._budget.grow(sum(len(values[c]) for c in combo))
            team = frozenset(
                extend(r, m) for r, c in zip(ordered, combo) for m in values[c]
            )
            if self._eval(body, new_vars, team):
                return True
        return False


def _flatten_and(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return _flatten_and(f.left) + _flatten_and(f.right)
    return [f]


def _conjunct_cost(f: Formula) -> int:
    if isinstance(f, (Truth, EqAtom, RelAtom)):
        return 0
    if isinstance(f, (DepAtom, GenericDep)):
        return 1
    if isinstance(f, Hook):
        return 2
    return 3


def evaluate(
    model: Model,
    team: Team,
    formula: Formula,
    registry: Optional[deps.Registry] = None,
    options: EvalOptions = DEFAULT_OPTIONS,
) -> bool:
    """One-shot team-semantics evaluation ``M ⊨_X φ``."""
    return Evaluator(model, registry, options).evaluate(team, formula)
