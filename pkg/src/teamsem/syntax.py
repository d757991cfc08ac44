"""Concrete text syntax: parsing and round-trip printing.

Formula grammar (ASCII, ``#`` starts a comment)::

    formula   := disj ( "=>" formula )?          hook, right associative
    disj      := conj ( "\\/" conj )*            right folded
    conj      := unary ( "/\\" unary )*          right folded
    unary     := "exists" NAME+ "." unary
               | "forall" NAME+ "." unary
               | "<>" unary                      possibility operator
               | "(" formula ")"
               | atom
    atom      := "top" | "!" "top"
               | "!" NAME "(" terms ")"          negated relation literal
               | "[" NAME ":" terms "]" "{" formula "}"   inline dependency
               | NAME "(" terms (";" terms)* ")" relation or dependency atom
               | term ("=" | "!=") term
    term      := NAME                            variable
               | NUMBER | "@" NAME               constant (domain element)

A name applied to terms is a dependency atom exactly when the name is
registered (built-ins: const, all, ne, nc, inc, exc, fdep); semicolons
inside the argument list are cosmetic group separators.  Quantifier and
diamond bodies bind tightly: ``exists x. a /\\ b`` conjoins ``exists x. a``
with ``b``.

Model files: a ``domain:`` line, then ``rel NAME/ARITY:`` lines with
parenthesized tuples, optionally ``const NAME = ELEMENT`` lines.
Team files: a ``vars:`` line then ``row:`` lines.
Dependency definition files: ``dep NAME/ARITY := SENTENCE`` lines, where
the sentence is first order over a fresh ARITY-ary symbol ``R``.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .dependencies import DEP_SYMBOL, ClosureFlags, DependencySpec, Registry, builtin_registry
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
    Term,
    Truth,
    Var,
    free_vars,
    is_first_order,
    subformulas,
)
from .semantics import Model, Team


@dataclass(frozen=True)
class SourceSpan:
    begin: int
    end: int

    def __post_init__(self):
        if self.begin > self.end:
            raise ValueError("span begin after end")


class ParseError(ValueError):
    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        self.span = span
        if span is not None:
            message = f"{message} (at {span.begin}..{span.end})"
        super().__init__(message)


class ModelSizeWarning(UserWarning):
    """Model has fewer than two elements; several equivalences assume two."""


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>\#[^\n]*)
    | (?P<op>/\\|\\/|=>|<>|!=|[()\[\]{}.,;:=!@])
    | (?P<num>[0-9][A-Za-z0-9_']*)
    | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"exists", "forall", "top"}


@dataclass(frozen=True)
class _Token:
    kind: str  # "op", "name", "num", "eof"
    text: str
    begin: int
    end: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.begin, self.end)


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {text[pos]!r}", SourceSpan(pos, pos + 1)
            )
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text), len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: Registry):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.registry = registry

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r} but found {tok.text or 'end of input'!r}", tok.span)
        return tok

    def fail(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.span)

    # precedence levels ----------------------------------------------------

    def formula(self) -> Formula:
        left = self.disj()
        if self.peek().text == "=>":
            self.next()
            return Hook(left, self.formula())
        return left

    def disj(self) -> Formula:
        parts = [self.conj()]
        while self.peek().text == "\\/":
            self.next()
            parts.append(self.conj())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Or(p, out)
        return out

    def conj(self) -> Formula:
        parts = [self.unary()]
        while self.peek().text == "/\\":
            self.next()
            parts.append(self.unary())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = And(p, out)
        return out

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text in ("exists", "forall"):
            self.next()
            names = []
            while self.peek().kind == "name" and self.peek().text not in _KEYWORDS:
                names.append(self.next().text)
            if not names:
                self.fail("expected at least one variable after quantifier")
            self.expect(".")
            body = self.unary()
            cls = Exists if tok.text == "exists" else Forall
            for v in reversed(names):
                body = cls(v, body)
            return body
        if tok.text == "<>":
            self.next()
            return Diamond(self.unary())
        if tok.text == "(":
            self.next()
            inner = self.formula()
            self.expect(")")
            return inner
        return self.atom()

    def atom(self) -> Formula:
        tok = self.peek()
        if tok.text == "top":
            self.next()
            return Truth(True)
        if tok.text == "!":
            self.next()
            nxt = self.next()
            if nxt.text == "top":
                return Truth(False)
            if nxt.kind != "name":
                raise ParseError("expected relation name or 'top' after '!'", nxt.span)
            if self.registry.is_dependency_name(nxt.text):
                raise ParseError(
                    f"dependency atom '{nxt.text}' cannot be negated (negation normal form)",
                    nxt.span,
                )
            terms, _ = self.term_groups_parenthesized()
            return RelAtom(nxt.text, terms, False)
        if tok.text == "[":
            self.next()
            symbol = self.next()
            if symbol.kind != "name":
                raise ParseError("expected relation symbol in inline dependency", symbol.span)
            self.expect(":")
            terms = [self.term()]
            while self.peek().text == ",":
                self.next()
                terms.append(self.term())
            self.expect("]")
            self.expect("{")
            sentence = self.formula()
            self.expect("}")
            return GenericDep(symbol.text, tuple(terms), sentence)
        if tok.kind == "name" and self.tokens[self.pos + 1].text == "(":
            name = self.next().text
            terms, _ = self.term_groups_parenthesized()
            if self.registry.is_dependency_name(name):
                return DepAtom(name, terms)
            return RelAtom(name, terms, True)
        # equality or inequality between two terms
        left = self.term()
        op = self.next()
        if op.text not in ("=", "!="):
            raise ParseError(f"expected '=' or '!=' but found {op.text!r}", op.span)
        right = self.term()
        return EqAtom(left, right, op.text == "=")

    def term(self) -> Term:
        tok = self.next()
        if tok.kind == "num":
            return Const(tok.text)
        if tok.text == "@":
            name = self.next()
            if name.kind not in ("name", "num"):
                raise ParseError("expected element name after '@'", name.span)
            return Const(name.text)
        if tok.kind == "name" and tok.text not in _KEYWORDS:
            return Var(tok.text)
        raise ParseError(f"expected a term but found {tok.text or 'end of input'!r}", tok.span)

    def term_groups_parenthesized(self) -> tuple[tuple[Term, ...], tuple[int, ...]]:
        self.expect("(")
        terms = [self.term()]
        sizes = []
        count = 1
        while self.peek().text in (",", ";"):
            sep = self.next()
            if sep.text == ";":
                sizes.append(count)
                count = 0
            terms.append(self.term())
            count += 1
        sizes.append(count)
        self.expect(")")
        return tuple(terms), tuple(sizes)


def parse_formula(text: str, registry: Optional[Registry] = None) -> Formula:
    """Parse a formula; raises :class:`ParseError` with a source span."""
    registry = registry if registry is not None else builtin_registry()
    p = _Parser(text, registry)
    f = p.formula()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected trailing input {tok.text!r}", tok.span)
    return f


# ---------------------------------------------------------------------------
# Printing


def _print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if t.name[0].isdigit():
        return t.name
    return f"@{t.name}"


def print_formula(f: Formula, registry: Optional[Registry] = None) -> str:
    """Parseable text; ``parse_formula(print_formula(f))`` equals ``f``."""
    registry = registry if registry is not None else builtin_registry()

    def group(terms: Sequence[Term], sizes: Optional[Sequence[int]]) -> str:
        if not sizes:
            sizes = (len(terms),)
        chunks = []
        i = 0
        for size in sizes:
            chunks.append(",".join(_print_term(t) for t in terms[i : i + size]))
            i += size
        return " ; ".join(chunks)

    def wrapped(g: Formula) -> str:
        # And/Or/Hook print with their own parentheses already
        s = go(g)
        if isinstance(g, (And, Or, Hook)):
            return s
        return f"({s})"

    def go(g: Formula) -> str:
        if isinstance(g, Truth):
            return "top" if g.positive else "!top"
        if isinstance(g, RelAtom):
            neg = "" if g.positive else "!"
            return f"{neg}{g.name}({','.join(_print_term(t) for t in g.terms)})"
        if isinstance(g, EqAtom):
            op = "=" if g.positive else "!="
            return f"{_print_term(g.left)} {op} {_print_term(g.right)}"
        if isinstance(g, And):
            return f"({go(g.left)} /\\ {go(g.right)})"
        if isinstance(g, Or):
            return f"({go(g.left)} \\/ {go(g.right)})"
        if isinstance(g, Hook):
            return f"({go(g.antecedent)} => {go(g.consequent)})"
        if isinstance(g, (Exists, Forall)):
            cls = type(g)
            names = []
            body = g
            while isinstance(body, cls):
                names.append(body.var)
                body = body.body
            word = "exists" if cls is Exists else "forall"
            return f"{word} {' '.join(names)}. {wrapped(body)}"
        if isinstance(g, Diamond):
            return f"<> {wrapped(g.body)}"
        if isinstance(g, DepAtom):
            spec = registry.lookup(g.name, len(g.terms))
            sizes = spec.group_sizes if spec is not None else None
            return f"{g.name}({group(g.terms, sizes)})"
        if isinstance(g, GenericDep):
            terms = ",".join(_print_term(t) for t in g.terms)
            return f"[{g.symbol} : {terms}] {{ {go(g.sentence)} }}"
        raise TypeError(f"not a formula: {g!r}")

    return go(f)


# ---------------------------------------------------------------------------
# Model files


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_model(text: str) -> Model:
    domain: Optional[list[str]] = None
    relations: dict[str, set[tuple[str, ...]]] = {}
    arities: dict[str, int] = {}
    constants: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("domain:"):
            if domain is not None:
                raise ParseError(f"line {lineno}: duplicate domain declaration")
            domain = line[len("domain:") :].split()
            continue
        if line.startswith("rel "):
            if domain is None:
                raise ParseError(f"line {lineno}: domain must be declared first")
            m = re.match(r"rel\s+([A-Za-z_][A-Za-z0-9_]*)\s*/\s*(\d+)\s*:(.*)$", line)
            if not m:
                raise ParseError(f"line {lineno}: malformed relation declaration")
            name, arity, rest = m.group(1), int(m.group(2)), m.group(3)
            if name in relations:
                raise ParseError(f"line {lineno}: duplicate relation '{name}'")
            if arity < 1:
                raise ParseError(f"line {lineno}: arity must be >= 1")
            tuples = set()
            for tm in re.finditer(r"\(([^()]*)\)|(\S+)", rest):
                if tm.group(2) is not None:
                    raise ParseError(
                        f"line {lineno}: expected parenthesized tuple, found {tm.group(2)!r}"
                    )
                elems = [e.strip() for e in tm.group(1).split(",") if e.strip()]
                if len(elems) != arity:
                    raise ParseError(
                        f"line {lineno}: tuple {tuple(elems)} does not have arity {arity}"
                    )
                for e in elems:
                    if e not in domain:
                        raise ParseError(f"line {lineno}: unknown element '{e}'")
                tuples.add(tuple(elems))
            relations[name] = tuples
            arities[name] = arity
            continue
        if line.startswith("const "):
            if domain is None:
                raise ParseError(f"line {lineno}: domain must be declared first")
            m = re.match(r"const\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)$", line)
            if not m:
                raise ParseError(f"line {lineno}: malformed constant declaration")
            name, elem = m.group(1), m.group(2)
            if elem not in domain:
                raise ParseError(f"line {lineno}: unknown element '{elem}'")
            if name in constants:
                raise ParseError(f"line {lineno}: duplicate constant '{name}'")
            constants[name] = elem
            continue
        raise ParseError(f"line {lineno}: unrecognized line {line!r}")
    if domain is None:
        raise ParseError("missing 'domain:' line")
    if len(set(domain)) != len(domain):
        raise ParseError("duplicate domain elements")
    if len(domain) < 2:
        warnings.warn(
            "model has fewer than two elements; several equivalences assume at least two",
            ModelSizeWarning,
            stacklevel=2,
        )
    return Model(domain, relations, constants, declared_arities=arities)


def print_model(model: Model) -> str:
    lines = ["domain: " + " ".join(model.domain)]
    declared = model.declared_arities
    names = sorted(set(model.relations) | set(declared))
    for name in names:
        tuples = sorted(model.relations.get(name, ()))
        if tuples:
            arity = len(tuples[0])
        else:
            arity = declared.get(name, 1)
        body = " ".join("(" + ",".join(t) + ")" for t in tuples)
        lines.append(f"rel {name}/{arity}:" + (" " + body if body else ""))
    for cname in sorted(model.constants):
        lines.append(f"const {cname} = {model.constants[cname]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Team files


def parse_team(text: str, model: Model) -> Team:
    variables: Optional[list[str]] = None
    rows: list[tuple[str, ...]] = []
    dom = set(model.domain)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("vars:"):
            if variables is not None:
                raise ParseError(f"line {lineno}: duplicate vars declaration")
            variables = line[len("vars:") :].split()
            continue
        if line.startswith("row:"):
            if variables is None:
                raise ParseError(f"line {lineno}: vars must be declared first")
            values = line[len("row:") :].split()
            if len(values) != len(variables):
                raise ParseError(
                    f"line {lineno}: row has {len(values)} values for {len(variables)} variables"
                )
            for e in values:
                if e not in dom:
                    raise ParseError(f"line {lineno}: unknown element '{e}'")
            rows.append(tuple(values))
            continue
        raise ParseError(f"line {lineno}: unrecognized line {line!r}")
    if variables is None:
        raise ParseError("missing 'vars:' line")
    return Team.from_rows(variables, rows)


def print_team(team: Team) -> str:
    lines = ["vars:" + ("" if not team.variables else " " + " ".join(team.variables))]
    for row in team.rows():
        lines.append("row:" + ("" if not row else " " + " ".join(row)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Dependency definition files


def load_dependency_defs(text: str, registry: Optional[Registry] = None) -> Registry:
    """Parse ``dep NAME/ARITY := SENTENCE`` lines into an extended registry.

    Sentences must be closed, first order, and mention no relation symbol
    other than ``R`` at the declared arity.  New dependencies start with all
    closure flags unknown; run verification to upgrade them.
    """
    registry = registry if registry is not None else builtin_registry()
    empty = Registry()  # dependency names inside definitions are not atoms
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        m = re.match(r"dep\s+([A-Za-z_][A-Za-z0-9_]*)\s*/\s*(\d+)\s*:=\s*(.+)$", line)
        if not m:
            raise ParseError(f"line {lineno}: malformed dependency definition")
        name, arity, body = m.group(1), int(m.group(2)), m.group(3)
        if arity < 1:
            raise ParseError(f"line {lineno}: arity must be >= 1")
        sentence = parse_formula(body, empty)
        if not is_first_order(sentence):
            raise ParseError(f"line {lineno}: dependency sentence must be first order")
        if free_vars(sentence):
            raise ParseError(
                f"line {lineno}: dependency sentence has free variables "
                f"{sorted(free_vars(sentence))}"
            )
        for g in subformulas(sentence):
            if isinstance(g, RelAtom):
                if g.name != DEP_SYMBOL:
                    raise ParseError(
                        f"line {lineno}: sentence mentions symbol '{g.name}'; "
                        f"only '{DEP_SYMBOL}' and equality are allowed"
                    )
                if len(g.terms) != arity:
                    raise ParseError(
                        f"line {lineno}: '{DEP_SYMBOL}' used at arity {len(g.terms)}; "
                        f"declared arity is {arity}"
                    )
                bad_terms = g.terms
            elif isinstance(g, EqAtom):
                bad_terms = (g.left, g.right)
            else:
                continue
            if any(isinstance(t, Const) for t in bad_terms):
                raise ParseError(
                    f"line {lineno}: constants are not allowed in dependency sentences"
                )
        spec = DependencySpec(name=name, arity=arity, sentence=sentence, flags=ClosureFlags())
        try:
            registry = registry.extended(spec)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return registry
