"""Formula and term representations shared by every other module.

Formulas are immutable trees in negation normal form: negation exists only
as a polarity flag on literals, never as a node.  Besides the first-order
connectives there are three team-level constructs:

* ``Hook(theta, phi)`` -- the conditional written ``theta => phi`` in the
  concrete syntax.  The antecedent must be plain first order; the hook
  holds on a team exactly when ``phi`` holds on the subteam of assignments
  satisfying ``theta``.
* ``Diamond(phi)`` -- the possibility operator ``<> phi``: some nonempty
  subteam satisfies ``phi``.
* ``DepAtom(name, terms)`` / ``GenericDep(symbol, terms, sentence)`` --
  named and inline dependency atoms.  A dependency atom holds when its
  defining sentence is true in the model expanded with the team's
  projection on the term tuple.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union


class NotFirstOrderError(ValueError):
    """Raised when a plain first-order formula was required."""


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __repr__(self):
        return f"Var({self.name})"


@dataclass(frozen=True, slots=True)
class Const:
    """A constant symbol naming a domain element.

    Resolution happens at evaluation time: the symbol is looked up in the
    model's constant map, falling back to a domain element of the same name.
    """

    name: str

    def __repr__(self):
        return f"Const({self.name})"


Term = Union[Var, Const]


def term_vars(terms: Iterable[Term]) -> frozenset[str]:
    return frozenset(t.name for t in terms if isinstance(t, Var))


# ---------------------------------------------------------------------------
# Formulas


class Formula:
    """Base class for all formula nodes."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Truth(Formula):
    """The designated truth literal ``top`` (or its negation ``!top``).

    A closed constant is needed so that macro expansion and flattening can
    introduce "always true" without smuggling in free variables.
    """

    positive: bool = True


@dataclass(frozen=True, slots=True)
class RelAtom(Formula):
    name: str
    terms: tuple[Term, ...]
    positive: bool = True


@dataclass(frozen=True, slots=True)
class EqAtom(Formula):
    left: Term
    right: Term
    positive: bool = True


@dataclass(frozen=True, slots=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True, slots=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True, slots=True)
class Hook(Formula):
    antecedent: Formula
    consequent: Formula


@dataclass(frozen=True, slots=True)
class Diamond(Formula):
    body: Formula


@dataclass(frozen=True, slots=True)
class DepAtom(Formula):
    name: str
    terms: tuple[Term, ...]


@dataclass(frozen=True, slots=True)
class GenericDep(Formula):
    """Inline dependency ``[symbol : terms] { sentence }``.

    The sentence is first order over the model signature extended by
    ``symbol`` and is evaluated Tarski-style in the expanded model; it is
    opaque to renaming and rewriting.
    """

    symbol: str
    terms: tuple[Term, ...]
    sentence: Formula


LITERAL_TYPES = (Truth, RelAtom, EqAtom)


def is_literal(f: Formula) -> bool:
    return isinstance(f, LITERAL_TYPES)


# ---------------------------------------------------------------------------
# Convenience constructors


def conj(parts: Sequence[Formula]) -> Formula:
    """Right-nested conjunction of ``parts``; ``top`` when empty."""
    if not parts:
        return Truth(True)
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out)
    return out


def disj(parts: Sequence[Formula]) -> Formula:
    if not parts:
        return Truth(False)
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Or(p, out)
    return out


def exists_chain(variables: Sequence[str], body: Formula) -> Formula:
    for v in reversed(variables):
        body = Exists(v, body)
    return body


def forall_chain(variables: Sequence[str], body: Formula) -> Formula:
    for v in reversed(variables):
        body = Forall(v, body)
    return body


def eq_tuple(left: Sequence[Term], right: Sequence[Term]) -> Formula:
    """Componentwise tuple equality as a conjunction; ``top`` for empty tuples."""
    if len(left) != len(right):
        raise ValueError("tuple length mismatch")
    return conj([EqAtom(a, b, True) for a, b in zip(left, right)])


def neq_tuple(left: Sequence[Term], right: Sequence[Term]) -> Formula:
    """Tuple inequality: some component differs.  ``!top`` for empty tuples."""
    if len(left) != len(right):
        raise ValueError("tuple length mismatch")
    return disj([EqAtom(a, b, False) for a, b in zip(left, right)])


# ---------------------------------------------------------------------------
# Structural access (used by the rewrite passes)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (And, Or)):
        return (f.left, f.right)
    if isinstance(f, (Exists, Forall)):
        return (f.body,)
    if isinstance(f, Hook):
        return (f.antecedent, f.consequent)
    if isinstance(f, Diamond):
        return (f.body,)
    if isinstance(f, GenericDep):
        return (f.sentence,)
    return ()


def with_children(f: Formula, new: Sequence[Formula]) -> Formula:
    if isinstance(f, And):
        return And(new[0], new[1])
    if isinstance(f, Or):
        return Or(new[0], new[1])
    if isinstance(f, Exists):
        return Exists(f.var, new[0])
    if isinstance(f, Forall):
        return Forall(f.var, new[0])
    if isinstance(f, Hook):
        return Hook(new[0], new[1])
    if isinstance(f, Diamond):
        return Diamond(new[0])
    if isinstance(f, GenericDep):
        return GenericDep(f.symbol, f.terms, new[0])
    if new:
        raise ValueError(f"{type(f).__name__} has no children")
    return f


def subformula_at(f: Formula, path: Sequence[int]) -> Formula:
    for i in path:
        f = children(f)[i]
    return f


def replace_at(f: Formula, path: Sequence[int], new: Formula) -> Formula:
    if not path:
        return new
    kids = list(children(f))
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return with_children(f, kids)


def subformulas(f: Formula) -> Iterator[Formula]:
    """Preorder traversal, including hook antecedents and inline sentences."""
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(reversed(children(g)))


# ---------------------------------------------------------------------------
# Variables


def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Truth):
        return frozenset()
    if isinstance(f, RelAtom):
        return term_vars(f.terms)
    if isinstance(f, EqAtom):
        return term_vars((f.left, f.right))
    if isinstance(f, (And, Or)):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - {f.var}
    if isinstance(f, Hook):
        return free_vars(f.antecedent) | free_vars(f.consequent)
    if isinstance(f, Diamond):
        return free_vars(f.body)
    if isinstance(f, DepAtom):
        return term_vars(f.terms)
    if isinstance(f, GenericDep):
        # The sentence is closed; only the projected terms contribute.
        return term_vars(f.terms)
    raise TypeError(f"not a formula: {f!r}")


def all_names(f: Formula) -> frozenset[str]:
    """Every variable name occurring anywhere, bound or free.

    Includes names inside hook antecedents and inline dependency sentences,
    so fresh-variable generation can avoid any incidental collision.
    """
    names: set[str] = set()
    for g in subformulas(f):
        if isinstance(g, RelAtom):
            names.update(t.name for t in g.terms if isinstance(t, Var))
        elif isinstance(g, EqAtom):
            names.update(t.name for t in (g.left, g.right) if isinstance(t, Var))
        elif isinstance(g, (Exists, Forall)):
            names.add(g.var)
        elif isinstance(g, DepAtom):
            names.update(t.name for t in g.terms if isinstance(t, Var))
        elif isinstance(g, GenericDep):
            names.update(t.name for t in g.terms if isinstance(t, Var))
    return frozenset(names)


def is_first_order(f: Formula) -> bool:
    """True when ``f`` contains no hooks, diamonds, or dependency atoms."""
    return not any(
        isinstance(g, (Hook, Diamond, DepAtom, GenericDep)) for g in subformulas(f)
    )


def is_quantifier_free(f: Formula) -> bool:
    return not any(isinstance(g, (Exists, Forall)) for g in subformulas(f))


# ---------------------------------------------------------------------------
# Fresh names


def fresh_vars(n: int, avoid: Iterable[str], base: str = "q") -> list[str]:
    """``n`` distinct names ``base1, base2, ...`` skipping everything in ``avoid``."""
    taken = set(avoid)
    out: list[str] = []
    i = 1
    while len(out) < n:
        cand = f"{base}{i}"
        if cand not in taken:
            out.append(cand)
            taken.add(cand)
        i += 1
    return out


def fresh_like(name: str, avoid: Iterable[str]) -> str:
    """``name`` itself when free, else ``name`` with the least numeric suffix."""
    taken = set(avoid)
    if name not in taken:
        return name
    i = 1
    while f"{name}{i}" in taken:
        i += 1
    return f"{name}{i}"


# ---------------------------------------------------------------------------
# Negation and renaming


def nnf_negate(f: Formula) -> Formula:
    """Negation normal form of the classical negation of a first-order formula."""
    if isinstance(f, Truth):
        return Truth(not f.positive)
    if isinstance(f, RelAtom):
        return RelAtom(f.name, f.terms, not f.positive)
    if isinstance(f, EqAtom):
        return EqAtom(f.left, f.right, not f.positive)
    if isinstance(f, And):
        return Or(nnf_negate(f.left), nnf_negate(f.right))
    if isinstance(f, Or):
        return And(nnf_negate(f.left), nnf_negate(f.right))
    if isinstance(f, Exists):
        return Forall(f.var, nnf_negate(f.body))
    if isinstance(f, Forall):
        return Exists(f.var, nnf_negate(f.body))
    raise NotFirstOrderError(f"cannot negate non-first-order construct {type(f).__name__}")


def rename_free(f: Formula, mapping: Mapping[str, str]) -> Formula:
    """Rename free variable occurrences; binders shadow as usual.

    The replacement names must not be capturable (callers pick them outside
    the set of all names in scope).
    """
    if not mapping:
        return f

    def map_term(t: Term) -> Term:
        if isinstance(t, Var) and t.name in mapping:
            return Var(mapping[t.name])
        return t

    if isinstance(f, Truth):
        return f
    if isinstance(f, RelAtom):
        return RelAtom(f.name, tuple(map_term(t) for t in f.terms), f.positive)
    if isinstance(f, EqAtom):
        return EqAtom(map_term(f.left), map_term(f.right), f.positive)
    if isinstance(f, And):
        return And(rename_free(f.left, mapping), rename_free(f.right, mapping))
    if isinstance(f, Or):
        return Or(rename_free(f.left, mapping), rename_free(f.right, mapping))
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        cls = type(f)
        return cls(f.var, rename_free(f.body, inner))
    if isinstance(f, Hook):
        return Hook(rename_free(f.antecedent, mapping), rename_free(f.consequent, mapping))
    if isinstance(f, Diamond):
        return Diamond(rename_free(f.body, mapping))
    if isinstance(f, DepAtom):
        return DepAtom(f.name, tuple(map_term(t) for t in f.terms))
    if isinstance(f, GenericDep):
        return GenericDep(f.symbol, tuple(map_term(t) for t in f.terms), f.sentence)
    raise TypeError(f"not a formula: {f!r}")


def rename_apart(f: Formula) -> Formula:
    """Alpha-rename so no variable is bound twice or both bound and free.

    Applies to team-level binders only.  Quantifiers inside hook antecedents
    and inline dependency sentences are self-contained Tarskian scopes and
    are left alone, but their names are reserved so fresh binders never
    collide with them.
    """
    taken = set(free_vars(f))
    for g in subformulas(f):
        if isinstance(g, Hook):
            taken |= all_names(g.antecedent)
        elif isinstance(g, GenericDep):
            taken |= all_names(g.sentence)

    def go(g: Formula, env: dict[str, str]) -> Formula:
        if isinstance(g, (Truth, RelAtom, EqAtom, DepAtom, GenericDep)):
            return rename_free(g, env)
        if isinstance(g, And):
            return And(go(g.left, env), go(g.right, env))
        if isinstance(g, Or):
            return Or(go(g.left, env), go(g.right, env))
        if isinstance(g, (Exists, Forall)):
            if g.var in taken:
                new = fresh_like(g.var, taken)
            else:
                new = g.var
            taken.add(new)
            env2 = dict(env)
            env2[g.var] = new
            cls = type(g)
            return cls(new, go(g.body, env2))
        if isinstance(g, Hook):
            return Hook(rename_free(g.antecedent, env), go(g.consequent, env))
        if isinstance(g, Diamond):
            return Diamond(go(g.body, env))
        raise TypeError(f"not a formula: {g!r}")

    return go(f, {})


def is_renamed_apart(f: Formula) -> bool:
    seen: set[str] = set()
    free = free_vars(f)

    def walk(g: Formula) -> bool:
        if isinstance(g, (Exists, Forall)):
            if g.var in seen or g.var in free:
                return False
            seen.add(g.var)
            return walk(g.body)
        if isinstance(g, Hook):
            return walk(g.consequent)  # antecedent binders are Tarskian-local
        if isinstance(g, GenericDep):
            return True
        return all(walk(c) for c in children(g))

    return walk(f)


# ---------------------------------------------------------------------------
# Signatures and well-formedness


@dataclass(frozen=True)
class Signature:
    """Relation names with arities, plus the declared constant symbols."""

    relations: Mapping[str, int]
    constants: frozenset[str] = frozenset()

    def __post_init__(self):
        for name, arity in self.relations.items():
            if arity < 1:
                raise ValueError(f"relation {name} has arity {arity}; must be >= 1")


@dataclass(frozen=True)
class Diagnostic:
    message: str
    subject: object = None

    def __str__(self):
        return self.message


@dataclass(frozen=True)
class WellFormedReport:
    problems: tuple[Diagnostic, ...]

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "well-formed"
        return "; ".join(str(p) for p in self.problems)


def well_formed(f: Formula, sig: Signature, registry=None) -> WellFormedReport:
    """Check relation arities, constant resolution, dependency-atom arities,
    and that hook antecedents and inline sentences are plain first order.

    Negation normal form needs no check: negation is a literal flag by
    construction.  ``registry`` is any object with ``lookup(name, arity)``.
    """
    problems: list[Diagnostic] = []

    def check_terms(terms: Iterable[Term], where: Formula):
        for t in terms:
            if isinstance(t, Const) and t.name not in sig.constants:
                problems.append(
                    Diagnostic(f"unknown constant symbol '{t.name}'", where)
                )

    def go(g: Formula):
        if isinstance(g, Truth):
            return
        if isinstance(g, RelAtom):
            arity = sig.relations.get(g.name)
            if arity is None:
                problems.append(Diagnostic(f"unknown relation '{g.name}'", g))
            elif arity != len(g.terms):
                problems.append(
                    Diagnostic(
                        f"relation '{g.name}' used with {len(g.terms)} terms; "
                        f"declared arity is {arity}",
                        g,
                    )
                )
            check_terms(g.terms, g)
            return
        if isinstance(g, EqAtom):
            check_terms((g.left, g.right), g)
            return
        if isinstance(g, DepAtom):
            if registry is None or registry.lookup(g.name, len(g.terms)) is None:
                problems.append(
                    Diagnostic(
                        f"dependency '{g.name}' not registered at arity {len(g.terms)}",
                        g,
                    )
                )
            check_terms(g.terms, g)
            return
        if isinstance(g, GenericDep):
            check_terms(g.terms, g)
            if not is_first_order(g.sentence):
                problems.append(
                    Diagnostic("inline dependency sentence is not first order", g)
                )
                return
            if free_vars(g.sentence):
                problems.append(
                    Diagnostic(
                        "inline dependency sentence has free variables "
                        f"{sorted(free_vars(g.sentence))}",
                        g,
                    )
                )
            ext = dict(sig.relations)
            ext[g.symbol] = len(g.terms)
            for h in subformulas(g.sentence):
                if isinstance(h, RelAtom):
                    arity = ext.get(h.name)
                    if arity is None:
                        problems.append(
                            Diagnostic(f"unknown relation '{h.name}' in inline sentence", g)
                        )
                    elif arity != len(h.terms):
                        problems.append(
                            Diagnostic(
                                f"relation '{h.name}' used with {len(h.terms)} terms "
                                f"in inline sentence; arity is {arity}",
                                g,
                            )
                        )
            return
        if isinstance(g, Hook):
            if not is_first_order(g.antecedent):
                problems.append(Diagnostic("hook antecedent is not first order", g))
            else:
                go(g.antecedent)
            go(g.consequent)
            return
        for c in children(g):
            go(c)

    go(f)
    return WellFormedReport(tuple(problems))
