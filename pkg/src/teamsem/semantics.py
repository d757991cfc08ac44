"""Finite models, assignments, teams, and the Tarskian side of evaluation.

Teams are sets of assignments sharing one variable domain.  The team-level
satisfaction relation lives in :mod:`teamsem.evaluator`; this module holds
the data types, the classical single-assignment evaluator, and the team
algebra (restriction, duplication, supplementation, projection).
"""

from __future__ import annotations

from collections.abc import Mapping as MappingABC
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .formulas import (
    And,
    Const,
    EqAtom,
    Exists,
    Forall,
    Formula,
    NotFirstOrderError,
    Or,
    RelAtom,
    Term,
    Truth,
    Var,
    free_vars,
    Signature,
)


class EvalError(Exception):
    """Problems raised while evaluating against a concrete model."""


class UnboundVariableError(EvalError):
    pass


# ---------------------------------------------------------------------------
# Models


class Model:
    """A finite relational structure.

    ``domain`` is an ordered list of element names (opaque tokens); the
    order fixes canonical encodings used for determinism.  ``constants``
    maps constant symbols to elements; a constant symbol not present there
    still resolves if it literally names a domain element.
    """

    __slots__ = ("domain", "relations", "constants", "declared_arities", "_index")

    def __init__(
        self,
        domain: Sequence[str],
        relations: Mapping[str, Iterable[tuple[str, ...]]] | None = None,
        constants: Mapping[str, str] | None = None,
        declared_arities: Mapping[str, int] | None = None,
    ):
        self.domain: tuple[str, ...] = tuple(domain)
        if len(set(self.domain)) != len(self.domain):
            raise ValueError("duplicate domain elements")
        if not self.domain:
            raise ValueError("empty domain")
        dom = set(self.domain)
        rels: dict[str, frozenset[tuple[str, ...]]] = {}
        for name, tuples in (relations or {}).items():
            tset = frozenset(tuple(t) for t in tuples)
            arities = {len(t) for t in tset}
            if len(arities) > 1:
                raise ValueError(f"relation {name} has tuples of mixed arity")
            for t in tset:
                for e in t:
                    if e not in dom:
                        raise ValueError(f"relation {name} mentions unknown element '{e}'")
            rels[name] = tset
        self.relations = rels
        consts = dict(constants or {})
        for c, e in consts.items():
            if e not in dom:
                raise ValueError(f"constant {c} maps to unknown element '{e}'")
        self.constants = consts
        self.declared_arities = dict(declared_arities or {})
        self._index = {e: i for i, e in enumerate(self.domain)}

    def element_index(self, element: str) -> int:
        return self._index[element]

    def resolve_constant(self, name: str) -> str:
        if name in self.constants:
            return self.constants[name]
        if name in self._index:
            return name
        raise EvalError(f"constant '{name}' does not resolve to a domain element")

    def signature(self, arities: Mapping[str, int] | None = None) -> Signature:
        rels = dict(self.declared_arities)
        for name, t in self.relations.items():
            if t:
                rels[name] = len(next(iter(t)))
        # Empty relations carry no arity evidence unless declared; callers may supply.
        if arities:
            rels.update(arities)
        return Signature(rels, frozenset(self.constants))

    def __eq__(self, other):
        return (
            isinstance(other, Model)
            and self.domain == other.domain
            and self.relations == other.relations
            and self.constants == other.constants
        )

    def __repr__(self):
        return f"Model(domain={list(self.domain)}, relations={ {k: sorted(v) for k, v in self.relations.items()} })"


# ---------------------------------------------------------------------------
# Assignments and teams


class Assignment(MappingABC):
    """An immutable, hashable variable assignment."""

    __slots__ = ("_map", "_key")

    def __init__(self, mapping: Mapping[str, str] | Iterable[tuple[str, str]] = ()):
        m = dict(mapping)
        object.__setattr__(self, "_map", m)
        object.__setattr__(self, "_key", tuple(sorted(m.items())))

    def __getitem__(self, var: str) -> str:
        return self._map[var]

    def __iter__(self) -> Iterator[str]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._map)

    def __hash__(self):
        return hash(self._key)

    def __eq__(self, other):
        if isinstance(other, Assignment):
            return self._key == other._key
        return NotImplemented

    def extended(self, var: str, value: str) -> "Assignment":
        m = dict(self._map)
        m[var] = value
        return Assignment(m)

    def restricted(self, variables: Iterable[str]) -> "Assignment":
        keep = set(variables)
        return Assignment({v: e for v, e in self._map.items() if v in keep})

    def __repr__(self):
        if not self._map:
            return "ε"
        inner = " ".join(f"{v}↦{e}" for v, e in self._key)
        return "{" + inner + "}"


EPSILON = Assignment()


class Team:
    """A set of assignments over one shared variable domain."""

    __slots__ = ("variables", "assignments")

    def __init__(self, variables: Sequence[str], assignments: Iterable[Assignment] = ()):
        self.variables: tuple[str, ...] = tuple(variables)
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate team variables")
        vset = set(self.variables)
        frozen = frozenset(assignments)
        for s in frozen:
            if set(s) != vset:
                raise ValueError(
                    f"assignment domain {sorted(s)} does not match team domain {sorted(vset)}"
                )
        self.assignments: frozenset[Assignment] = frozen

    @classmethod
    def from_rows(cls, variables: Sequence[str], rows: Iterable[Sequence[str]]) -> "Team":
        variables = tuple(variables)
        assignments = []
        for row in rows:
            row = tuple(row)
            if len(row) != len(variables):
                raise ValueError(f"row {row} does not match variables {variables}")
            assignments.append(Assignment(zip(variables, row)))
        return cls(variables, assignments)

    @classmethod
    def empty(cls, variables: Sequence[str] = ()) -> "Team":
        return cls(variables, ())

    @classmethod
    def epsilon(cls) -> "Team":
        """The team {ε} holding just the empty assignment."""
        return cls((), (EPSILON,))

    def restricted(self, variables: Sequence[str]) -> "Team":
        keep = tuple(v for v in self.variables if v in set(variables))
        return Team(keep, (s.restricted(keep) for s in self.assignments))

    def rows(self) -> list[tuple[str, ...]]:
        """Assignments as value rows in variable order, sorted for determinism."""
        return sorted(tuple(s[v] for v in self.variables) for s in self.assignments)

    def __iter__(self) -> Iterator[Assignment]:
        return iter(sorted(self.assignments, key=lambda s: s._key))

    def __len__(self):
        return len(self.assignments)

    def __contains__(self, s):
        return s in self.assignments

    def __eq__(self, other):
        return (
            isinstance(other, Team)
            and set(self.variables) == set(other.variables)
            and self.assignments == other.assignments
        )

    def __hash__(self):
        return hash((frozenset(self.variables), self.assignments))

    def __repr__(self):
        if not self.assignments:
            return f"Team({list(self.variables)}, ∅)"
        if not self.variables and len(self.assignments) == 1:
            return "{ε}"
        return f"Team({list(self.variables)}, {{{', '.join(map(repr, self))}}})"


@dataclass(frozen=True)
class Relation:
    """A set of element tuples of one arity, as produced by projection."""

    arity: int
    tuples: frozenset[tuple[str, ...]]

    def __post_init__(self):
        for t in self.tuples:
            if len(t) != self.arity:
                raise ValueError(f"tuple {t} does not have arity {self.arity}")

    def __len__(self):
        return len(self.tuples)

    def __iter__(self):
        return iter(sorted(self.tuples))


# ---------------------------------------------------------------------------
# Tarskian evaluation


def resolve_term(model: Model, assignment: Mapping[str, str], term: Term) -> str:
    if isinstance(term, Var):
        try:
            return assignment[term.name]
        except KeyError:
            raise UnboundVariableError(f"variable '{term.name}' is not assigned") from None
    return model.resolve_constant(term.name)


def eval_tarski(model: Model, assignment: Mapping[str, str], formula: Formula) -> bool:
    """Classical satisfaction ``M ⊨_s φ`` for first-order formulas."""
    if isinstance(formula, Truth):
        return formula.positive
    if isinstance(formula, RelAtom):
        rel = model.relations.get(formula.name)
        if rel is None:
            raise EvalError(f"unknown relation '{formula.name}'")
        row = tuple(resolve_term(model, assignment, t) for t in formula.terms)
        return (row in rel) == formula.positive
    if isinstance(formula, EqAtom):
        same = resolve_term(model, assignment, formula.left) == resolve_term(
            model, assignment, formula.right
        )
        return same == formula.positive
    if isinstance(formula, And):
        return eval_tarski(model, assignment, formula.left) and eval_tarski(
            model, assignment, formula.right
        )
    if isinstance(formula, Or):
        return eval_tarski(model, assignment, formula.left) or eval_tarski(
            model, assignment, formula.right
        )
    if isinstance(formula, Exists):
        base = dict(assignment)
        for m in model.domain:
            base[formula.var] = m
            if eval_tarski(model, base, formula.body):
                return True
        return False
    if isinstance(formula, Forall):
        base = dict(assignment)
        for m in model.domain:
            base[formula.var] = m
            if not eval_tarski(model, base, formula.body):
                return False
        return True
    raise NotFirstOrderError(
        f"{type(formula).__name__} has no Tarskian semantics; it is team-level"
    )


# ---------------------------------------------------------------------------
# Team algebra


def restrict(model: Model, team: Team, theta: Formula) -> Team:
    """The subteam of assignments classically satisfying ``theta``."""
    if not _is_fo(theta):
        raise NotFirstOrderError("restriction condition must be first order")
    kept = [s for s in team.assignments if eval_tarski(model, s, theta)]
    return Team(team.variables, kept)


def _is_fo(f: Formula) -> bool:
    from .formulas import is_first_order

    return is_first_order(f)


def duplicate(model: Model, team: Team, var: str) -> Team:
    """Extend every assignment by every domain element (``var`` is overwritten
    if already present)."""
    variables = team.variables if var in team.variables else team.variables + (var,)
    new = [s.extended(var, m) for s in team.assignments for m in model.domain]
    return Team(variables, new)


def supplement(
    model: Model,
    team: Team,
    var: str,
    choice: Mapping[Assignment, Iterable[str]],
) -> Team:
    """Extend every assignment by the chosen values; every choice set must be
    a nonempty subset of the domain and ``choice`` must be total on the team."""
    dom = set(model.domain)
    variables = team.variables if var in team.variables else team.variables + (var,)
    new = []
    for s in team.assignments:
        if s not in choice:
            raise EvalError(f"choice function not defined on {s!r}")
        values = set(choice[s])
        if not values:
            raise EvalError(f"empty choice set for {s!r}")
        if not values <= dom:
            raise EvalError(f"choice set for {s!r} leaves the domain")
        for m in sorted(values):
            new.append(s.extended(var, m))
    return Team(variables, new)


def project(team: Team, terms: Sequence[Term], model: Model) -> Relation:
    """The relation ``{s(t⃗) : s ∈ team}`` with constants interpreted."""
    rows = set()
    for s in team.assignments:
        rows.add(tuple(resolve_term(model, s, t) for t in terms))
    return Relation(len(terms), frozenset(rows))
