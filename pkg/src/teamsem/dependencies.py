"""Dependency atoms as first-order sentences over one relation symbol.

A registered dependency is a name, an arity, and a closed first-order
sentence over a fresh symbol ``R`` of that arity (equality is always
available).  An atom ``dep(t⃗)`` holds on a team when the sentence is true
in the model expanded with ``R`` interpreted as the team's projection on
``t⃗``.

Each spec also carries closure-property flags (downward closed, upward
closed, union closed, empty team property).  Flags are cached facts: the
evaluator uses them only for sound prunings, and ``verify_closure_flags``
re-derives them by exhaustive search so the cached values can be
cross-checked.  An ``unknown`` flag simply disables the pruning.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .formulas import (
    DepAtom,
    EqAtom,
    Formula,
    RelAtom,
    Term,
    Var,
    conj,
    disj,
    eq_tuple,
    exists_chain,
    forall_chain,
    free_vars,
    is_first_order,
    neq_tuple,
    subformulas,
)
from .semantics import Model, Relation, Team, eval_tarski, project

ASSERTED = "asserted"
REFUTED = "refuted"
UNKNOWN = "unknown"

DEP_SYMBOL = "R"


@dataclass(frozen=True)
class ClosureFlags:
    downward: str = UNKNOWN
    upward: str = UNKNOWN
    union: str = UNKNOWN
    empty_team: str = UNKNOWN

    def as_dict(self) -> dict[str, str]:
        return {
            "downward": self.downward,
            "upward": self.upward,
            "union": self.union,
            "empty_team": self.empty_team,
        }


@dataclass(frozen=True)
class DependencySpec:
    """A named dependency: arity, defining sentence over ``R``, closure flags.

    ``fast_check`` is an optional direct set-level decision procedure for the
    built-in atoms; the sentence route stays the general mechanism and the
    two are cross-checked exhaustively in the test suite.
    """

    name: str
    arity: int
    sentence: Formula
    flags: ClosureFlags = ClosureFlags()
    group_sizes: Optional[tuple[int, ...]] = None
    fast_check: Optional[Callable[[int, frozenset], bool]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("dependency arity must be >= 1")
        if self.group_sizes is not None and sum(self.group_sizes) != self.arity:
            raise ValueError("group sizes do not sum to the arity")


# ---------------------------------------------------------------------------
# Built-in dependency families


def _vars(prefix: str, k: int) -> list[Var]:
    return [Var(f"{prefix}{i}") for i in range(1, k + 1)]


def _constancy_sentence(k: int) -> Formula:
    xs, ys = _vars("x", k), _vars("y", k)
    body = disj(
        [
            RelAtom(DEP_SYMBOL, tuple(xs), False),
            RelAtom(DEP_SYMBOL, tuple(ys), False),
            eq_tuple(xs, ys),
        ]
    )
    return forall_chain([v.name for v in xs + ys], body)


def _totality_sentence(k: int) -> Formula:
    vs = _vars("v", k)
    return forall_chain([v.name for v in vs], RelAtom(DEP_SYMBOL, tuple(vs), True))


def _nonemptiness_sentence(k: int) -> Formula:
    vs = _vars("v", k)
    return exists_chain([v.name for v in vs], RelAtom(DEP_SYMBOL, tuple(vs), True))


def _nonconstancy_sentence(k: int) -> Formula:
    xs, ys = _vars("x", k), _vars("y", k)
    body = conj(
        [
            RelAtom(DEP_SYMBOL, tuple(xs), True),
            RelAtom(DEP_SYMBOL, tuple(ys), True),
            neq_tuple(xs, ys),
        ]
    )
    return exists_chain([v.name for v in xs + ys], body)


def _inclusion_sentence(k: int) -> Formula:
    us, vs, ws = _vars("u", k), _vars("v", k), _vars("w", k)
    body = disj(
        [
            RelAtom(DEP_SYMBOL, tuple(us + vs), False),
            exists_chain([w.name for w in ws], RelAtom(DEP_SYMBOL, tuple(ws + us), True)),
        ]
    )
    return forall_chain([x.name for x in us + vs], body)


def _exclusion_sentence(k: int) -> Formula:
    us, vs = _vars("u", k), _vars("v", k)
    us2 = [Var(f"u{i}'") for i in range(1, k + 1)]
    vs2 = [Var(f"v{i}'") for i in range(1, k + 1)]
    body = disj(
        [
            RelAtom(DEP_SYMBOL, tuple(us + vs), False),
            RelAtom(DEP_SYMBOL, tuple(us2 + vs2), False),
            conj([neq_tuple(us, vs2), neq_tuple(vs, us2)]),
        ]
    )
    return forall_chain([x.name for x in us + vs + us2 + vs2], body)


def _functional_sentence(k: int) -> Formula:
    # arity k + 1: the last coordinate is determined by the first k
    us = _vars("u", k)
    v1, v2 = Var("v1"), Var("v2")
    body = disj(
        [
            RelAtom(DEP_SYMBOL, tuple(us + [v1]), False),
            RelAtom(DEP_SYMBOL, tuple(us + [v2]), False),
            EqAtom(v1, v2, True),
        ]
    )
    return forall_chain([x.name for x in us] + ["v1", "v2"], body)


def _fast_const(arity: int, tuples: frozenset) -> bool:
    return len(tuples) <= 1


def _fast_ne(arity: int, tuples: frozenset) -> bool:
    return len(tuples) >= 1


def _fast_nc(arity: int, tuples: frozenset) -> bool:
    return len(tuples) >= 2


def _fast_inc(arity: int, tuples: frozenset) -> bool:
    k = arity // 2
    return {t[:k] for t in tuples} <= {t[k:] for t in tuples}


def _fast_exc(arity: int, tuples: frozenset) -> bool:
    k = arity // 2
    return not ({t[:k] for t in tuples} & {t[k:] for t in tuples})


def _fast_fdep(arity: int, tuples: frozenset) -> bool:
    k = arity - 1
    seen: dict = {}
    for t in tuples:
        key, val = t[:k], t[k]
        if seen.setdefault(key, val) != val:
            return False
    return True


_CONST_FLAGS = ClosureFlags(downward=ASSERTED, upward=REFUTED, union=REFUTED, empty_team=ASSERTED)
_ALL_FLAGS = ClosureFlags(downward=REFUTED, upward=ASSERTED, union=ASSERTED, empty_team=REFUTED)
_NE_FLAGS = ClosureFlags(downward=REFUTED, upward=ASSERTED, union=ASSERTED, empty_team=REFUTED)
_NC_FLAGS = ClosureFlags(downward=REFUTED, upward=ASSERTED, union=ASSERTED, empty_team=REFUTED)
_INC_FLAGS = ClosureFlags(downward=REFUTED, upward=REFUTED, union=ASSERTED, empty_team=ASSERTED)
_EXC_FLAGS = ClosureFlags(downward=ASSERTED, upward=REFUTED, union=REFUTED, empty_team=ASSERTED)
_FDEP_FLAGS = ClosureFlags(downward=ASSERTED, upward=REFUTED, union=REFUTED, empty_team=ASSERTED)


CONSTANCY = "const"
TOTALITY = "all"
NONEMPTINESS = "ne"
NONCONSTANCY = "nc"
INCLUSION = "inc"
EXCLUSION = "exc"
FUNCTIONAL = "fdep"

_FAMILIES: dict[str, dict] = {
    CONSTANCY: dict(build=_constancy_sentence, flags=_CONST_FLAGS, fast=_fast_const, valid=lambda a: a >= 1, groups=None),
    TOTALITY: dict(build=_totality_sentence, flags=_ALL_FLAGS, fast=None, valid=lambda a: a >= 1, groups=None),
    NONEMPTINESS: dict(build=_nonemptiness_sentence, flags=_NE_FLAGS, fast=_fast_ne, valid=lambda a: a >= 1, groups=None),
    NONCONSTANCY: dict(build=_nonconstancy_sentence, flags=_NC_FLAGS, fast=_fast_nc, valid=lambda a: a >= 1, groups=None),
    INCLUSION: dict(build=lambda a: _inclusion_sentence(a // 2), flags=_INC_FLAGS, fast=_fast_inc, valid=lambda a: a >= 2 and a % 2 == 0, groups=lambda a: (a // 2, a // 2)),
    EXCLUSION: dict(build=lambda a: _exclusion_sentence(a // 2), flags=_EXC_FLAGS, fast=_fast_exc, valid=lambda a: a >= 2 and a % 2 == 0, groups=lambda a: (a // 2, a // 2)),
    FUNCTIONAL: dict(build=lambda a: _functional_sentence(a - 1), flags=_FDEP_FLAGS, fast=_fast_fdep, valid=lambda a: a >= 2, groups=lambda a: (a - 1, 1)),
}

BUILTIN_NAMES = frozenset(_FAMILIES)


class Registry:
    """Immutable lookup table of dependency specs.

    Built-in family names synthesize specs at any valid arity on demand;
    the family-level closure facts are arity-uniform and are confirmed by
    exhaustive search at small arities in the test suite.
    """

    def __init__(self, specs: Iterable[DependencySpec] = ()):
        self._specs: dict[tuple[str, int], DependencySpec] = {}
        for spec in specs:
            key = (spec.name, spec.arity)
            if key in self._specs:
                raise ValueError(f"duplicate dependency {spec.name}/{spec.arity}")
            self._specs[key] = spec

    def lookup(self, name: str, arity: int) -> Optional[DependencySpec]:
        spec = self._specs.get((name, arity))
        if spec is not None:
            return spec
        fam = _FAMILIES.get(name)
        if fam is not None and fam["valid"](arity):
            return _synthesize(name, arity)
        return None

    def is_dependency_name(self, name: str) -> bool:
        if name in _FAMILIES:
            return True
        return any(key[0] == name for key in self._specs)

    def registered(self) -> Iterator[DependencySpec]:
        return iter(sorted(self._specs.values(), key=lambda s: (s.name, s.arity)))

    def extended(self, spec: DependencySpec) -> "Registry":
        if spec.name in _FAMILIES:
            raise ValueError(f"'{spec.name}' is a reserved built-in dependency name")
        if (spec.name, spec.arity) in self._specs:
            raise ValueError(f"dependency {spec.name}/{spec.arity} already registered")
        return Registry(list(self._specs.values()) + [spec])

    def with_flags(self, name: str, arity: int, flags: ClosureFlags) -> "Registry":
        spec = self.lookup(name, arity)
        if spec is None:
            raise KeyError(f"no dependency {name}/{arity}")
        out = {k: v for k, v in self._specs.items() if k != (name, arity)}
        new = replace(spec, flags=flags)
        return Registry(list(out.values()) + [new])


def _synthesize(name: str, arity: int) -> DependencySpec:
    fam = _FAMILIES[name]
    groups = fam["groups"](arity) if callable(fam["groups"]) else fam["groups"]
    return DependencySpec(
        name=name,
        arity=arity,
        sentence=fam["build"](arity),
        flags=fam["flags"],
        group_sizes=groups,
        fast_check=fam["fast"],
    )


_BUILTIN: Optional[Registry] = None


def builtin_registry() -> Registry:
    """Registry with const, all, ne, nc at arities 1-3, inc/exc at pair
    arities 2/4/6, and fdep at arities 2-4.  Higher arities synthesize on
    demand."""
    global _BUILTIN
    if _BUILTIN is None:
        specs = []
        for name in (CONSTANCY, TOTALITY, NONEMPTINESS, NONCONSTANCY):
            specs.extend(_synthesize(name, a) for a in (1, 2, 3))
        for name in (INCLUSION, EXCLUSION):
            specs.extend(_synthesize(name, a) for a in (2, 4, 6))
        specs.extend(_synthesize(FUNCTIONAL, a) for a in (2, 3, 4))
        _BUILTIN = Registry(specs)
    return _BUILTIN


# ---------------------------------------------------------------------------
# Evaluation of a single atom


def eval_dep_sentence(model: Model, relation: Relation, sentence: Formula) -> bool:
    """Truth of a dependency's defining sentence with ``R`` := ``relation``.

    This is the generic route; it works for any registered spec and is the
    oracle the fast set-level checks are validated against.
    """
    view = Model(model.domain, {DEP_SYMBOL: relation.tuples}, {})
    return eval_tarski(view, {}, sentence)


def eval_dep(model: Model, team: Team, spec: DependencySpec, terms: Sequence[Term]) -> bool:
    """Truth of ``spec`` on ``team`` at the term tuple ``terms``."""
    if len(terms) != spec.arity:
        raise ValueError(
            f"dependency {spec.name} has arity {spec.arity}, got {len(terms)} terms"
        )
    relation = project(team, terms, model)
    if spec.name == TOTALITY:
        return len(relation) == len(model.domain) ** spec.arity
    if spec.fast_check is not None:
        return spec.fast_check(spec.arity, relation.tuples)
    return eval_dep_sentence(model, relation, spec.sentence)


# ---------------------------------------------------------------------------
# Brute-force verification of closure flags


@dataclass(frozen=True)
class FlagFinding:
    status: str  # "confirmed" or "refuted"
    counterexample: Optional[tuple] = None  # (domain_size, teams...) witnessing refutation


@dataclass(frozen=True)
class ClosureReport:
    name: str
    arity: int
    bound: int
    findings: dict

    def status(self, flag: str) -> str:
        return self.findings[flag].status

    def summary(self) -> str:
        parts = [f"{flag}: {finding.status}" for flag, finding in self.findings.items()]
        return f"{self.name}/{self.arity} (bound {self.bound}): " + ", ".join(parts)


def verify_closure_flags(
    spec: DependencySpec, bound: int = 3, min_size: int = 2, max_space: int = 12
) -> ClosureReport:
    """Exhaustively check all four closure properties up to ``bound``.

    Closure properties quantify over teams, not model relations, so the
    equality-only signature suffices and each domain size contributes one
    model.  Sizes below ``min_size`` are skipped (models are assumed to
    have at least two elements throughout).  ``max_space`` caps the number
    of assignment cells (|M| ** arity) so the 2**cells team enumeration
    stays tractable; a larger space raises ``ValueError``.  Union closure
    is checked over pairs of teams.
    """
    variables = [f"v{i}" for i in range(1, spec.arity + 1)]
    terms = tuple(Var(v) for v in variables)
    down: Optional[tuple] = None
    up: Optional[tuple] = None
    union: Optional[tuple] = None
    empty: Optional[tuple] = None

    for size in range(min_size, bound + 1):
        if size ** spec.arity > max_space:
            raise ValueError(
                f"assignment space {size}**{spec.arity} exceeds max_space={max_space}"
            )
        model = Model([str(i) for i in range(size)])
        cells = list(itertools.product(model.domain, repeat=spec.arity))
        n = len(cells)
        sat: list[bool] = []
        for mask in range(1 << n):
            team = Team.from_rows(
                variables, (cells[i] for i in range(n) if mask >> i & 1)
            )
            sat.append(eval_dep(model, team, spec, terms))

        if empty is None and not sat[0]:
            empty = (size,)

        full = (1 << n) - 1
        sat_masks = [m for m in range(1 << n) if sat[m]]
        if down is None:
            for x in sat_masks:
                y = (x - 1) & x
                while True:
                    if not sat[y]:
                        down = (size, x, y)
                        break
                    if y == 0:
                        break
                    y = (y - 1) & x
                if down is not None:
                    break
        if up is None:
            for x in sat_masks:
                rest = full & ~x
                extra = rest
                while extra != 0:
                    if not sat[x | extra]:
                        up = (size, x, x | extra)
                        break
                    extra = (extra - 1) & rest
                if up is not None:
                    break
        if union is None:
            for a in sat_masks:
                for b in sat_masks:
                    if not sat[a | b]:
                        union = (size, a, b)
                        break
                if union is not None:
                    break

    def finding(counter):
        if counter is None:
            return FlagFinding("confirmed")
        return FlagFinding("refuted", counter)

    return ClosureReport(
        spec.name,
        spec.arity,
        bound,
        {
            "downward": finding(down),
            "upward": finding(up),
            "union": finding(union),
            "empty_team": finding(empty),
        },
    )


def flags_from_report(report: ClosureReport) -> ClosureFlags:
    def to_flag(status: str) -> str:
        return ASSERTED if status == "confirmed" else REFUTED

    return ClosureFlags(
        downward=to_flag(report.status("downward")),
        upward=to_flag(report.status("upward")),
        union=to_flag(report.status("union")),
        empty_team=to_flag(report.status("empty_team")),
    )
