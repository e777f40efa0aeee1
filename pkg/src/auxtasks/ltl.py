"""Co-safe LTL formulas: parsing, rendering, progression and finite-trace checks.

Formulas are immutable, hashable trees.  The canonical form produced by
:func:`canonicalize` is what keys the Q-bank, so progressed formulas that are
logically identical (under the syntactic rules implemented here) share one
value table.

Surface syntax::

    atoms      [A-Za-z_][A-Za-z0-9_]*   (``true`` / ``false`` are constants)
    unary      ! X F G                  (X next, F eventually, G always)
    binary     U (right-assoc) > & > | > -> (right-assoc), loosest last

The keywords ``X``, ``F``, ``G`` and ``U`` double as atom names: a keyword in
operand position is an operator only when followed by something that can start
an operand, so ``F (F & F Y)`` reads as eventually(F and eventually Y).
"""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import networkx as nx

__all__ = [
    "Formula", "TrueConst", "FalseConst", "Atom", "Not", "And", "Or", "Implies",
    "Next", "Until", "Eventually", "Always", "TRUE", "FALSE",
    "LTLSyntaxError", "UnknownOperatorError", "UnsupportedFragmentError",
    "parse", "to_string", "propositions", "progress", "canonicalize",
    "progression_closure", "satisfies", "ast_graph", "substitute_atoms",
    "sequential_task",
]


class Formula:
    """Base class for all formula nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, repr=False)
class TrueConst(Formula):
    def __repr__(self):
        return "TrueConst"


@dataclass(frozen=True, repr=False)
class FalseConst(Formula):
    def __repr__(self):
        return "FalseConst"


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __post_init__(self):
        if not _IDENT.fullmatch(self.name) or self.name in ("true", "false"):
            raise ValueError(f"invalid proposition name {self.name!r}")


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    child: Formula


@dataclass(frozen=True)
class Always(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


TRUE = TrueConst()
FALSE = FalseConst()

Unary = Union[Not, Next, Eventually, Always]
Binary = Union[And, Or, Implies, Until]

_UNARY = (Not, Next, Eventually, Always)
_BINARY = (And, Or, Implies, Until)
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class LTLSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownOperatorError(LTLSyntaxError):
    pass


class UnsupportedFragmentError(ValueError):
    """Raised when prefix satisfaction is not decidable for a formula."""


# ---------------------------------------------------------------------------
# parsing / rendering

_KEYWORD_UNARY = {"X": Next, "F": Eventually, "G": Always}
_TOKEN = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise UnknownOperatorError(f"unknown operator {text[bad]!r}", bad)
        tok = m.group(1) or m.group(2) or m.group(3)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> Optional[str]:
        j = self.i + k
        return self.tokens[j][0] if j < len(self.tokens) else None

    def offset(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise LTLSyntaxError("unexpected end of input", self.offset())
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        if self.peek() != tok:
            found = self.peek()
            what = "end of input" if found is None else repr(found)
            raise LTLSyntaxError(f"expected {tok!r}, found {what}", self.offset())
        self.i += 1

    def parse(self) -> Formula:
        if not self.tokens:
            raise LTLSyntaxError("empty formula", 0)
        f = self.implies()
        if self.peek() is not None:
            raise LTLSyntaxError(f"unexpected token {self.peek()!r}", self.offset())
        return f

    def implies(self) -> Formula:
        left = self.disjunction()
        if self.peek() == "->":
            self.i += 1
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.peek() == "|":
            self.i += 1
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.until()
        while self.peek() == "&":
            self.i += 1
            left = And(left, self.until())
        return left

    def until(self) -> Formula:
        left = self.unary()
        if self.peek() == "U":
            self.i += 1
            return Until(left, self.until())
        return left

    def _starts_operand(self, k: int) -> bool:
        tok = self.peek(k)
        if tok is None or tok in ("&", "|", "->", ")", "U"):
            return False
        return True

    def unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.i += 1
            return Not(self.unary())
        if tok in _KEYWORD_UNARY and self._starts_operand(1):
            self.i += 1
            return _KEYWORD_UNARY[tok](self.unary())
        return self.primary()

    def primary(self) -> Formula:
        start = self.offset()
        tok = self.take()
        if tok == "(":
            f = self.implies()
            self.expect(")")
            return f
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if _IDENT.fullmatch(tok):
            return Atom(tok)
        raise LTLSyntaxError(f"unexpected token {tok!r}", start)


def parse(text: str) -> Formula:
    """Parse ``text`` into a formula tree.

    >>> parse("F (a & F b)")
    Eventually(child=And(left=Atom(name='a'), right=Eventually(child=Atom(name='b'))))
    """
    return _Parser(text).parse()


_BIN_SYMBOL = {And: "&", Or: "|", Implies: "->", Until: "U"}
_UN_SYMBOL = {Next: "X", Eventually: "F", Always: "G"}


@lru_cache(maxsize=None)
def to_string(f: Formula) -> str:
    if isinstance(f, TrueConst):
        return "true"
    if isinstance(f, FalseConst):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _operand(f.child)
    if isinstance(f, _UNARY):
        return f"{_UN_SYMBOL[type(f)]} {_operand(f.child)}"
    return f"({to_string(f.left)} {_BIN_SYMBOL[type(f)]} {to_string(f.right)})"


def _operand(child: Formula) -> str:
    # an atom named U cannot follow a unary keyword without parentheses
    if isinstance(child, Atom) and child.name == "U":
        return "(U)"
    return to_string(child)


# ---------------------------------------------------------------------------
# structure helpers

def _children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, _UNARY):
        return (f.child,)
    if isinstance(f, _BINARY):
        return (f.left, f.right)
    return ()


@lru_cache(maxsize=None)
def propositions(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset([f.name])
    out: frozenset[str] = frozenset()
    for c in _children(f):
        out |= propositions(c)
    return out


def sequential_task(props: Sequence[str]) -> Formula:
    """``F (p1 & F (p2 & ... F pn))`` -- visit ``props`` in order."""
    if not props:
        raise ValueError("a sequential task needs at least one proposition")
    f: Formula = Eventually(Atom(props[-1]))
    for p in reversed(props[:-1]):
        f = Eventually(And(Atom(p), f))
    return f


def substitute_atoms(f: Formula, names: Sequence[str]) -> Formula:
    """Replace atom occurrences, in pre-order, with ``names``."""
    it = iter(names)

    def walk(g: Formula) -> Formula:
        if isinstance(g, Atom):
            return Atom(next(it))
        if isinstance(g, _UNARY):
            return type(g)(walk(g.child))
        if isinstance(g, _BINARY):
            left = walk(g.left)
            return type(g)(left, walk(g.right))
        return g

    out = walk(f)
    if next(it, None) is not None:
        raise ValueError("more names than atom occurrences")
    return out


def ast_graph(f: Formula) -> nx.DiGraph:
    """Syntax graph with one node per AST node (pre-order ids).

    Node attributes: ``kind`` ("operator" | "proposition" | "constant") and
    ``label`` (operator symbol, proposition name, or constant text).
    """
    g = nx.DiGraph()
    counter = itertools.count()

    def visit(node: Formula) -> int:
        nid = next(counter)
        if isinstance(node, Atom):
            g.add_node(nid, kind="proposition", label=node.name)
        elif isinstance(node, (TrueConst, FalseConst)):
            g.add_node(nid, kind="constant", label=to_string(node))
        else:
            sym = "!" if isinstance(node, Not) else (_UN_SYMBOL.get(type(node)) or _BIN_SYMBOL[type(node)])
            g.add_node(nid, kind="operator", label=sym)
        for c in _children(node):
            g.add_edge(nid, visit(c))
        return nid

    visit(f)
    return g


# ---------------------------------------------------------------------------
# canonical form

def _implies(f: Formula, g: Formula) -> bool:
    """Sound, incomplete syntactic entailment check ``f |= g``."""
    if f == g or isinstance(g, TrueConst) or isinstance(f, FalseConst):
        return True
    if isinstance(f, Or):
        return _implies(f.left, g) and _implies(f.right, g)
    if isinstance(g, And):
        return _implies(f, g.left) and _implies(f, g.right)
    if isinstance(g, Or) and (_implies(f, g.left) or _implies(f, g.right)):
        return True
    if isinstance(f, And) and (_implies(f.left, g) or _implies(f.right, g)):
        return True
    if isinstance(g, Eventually):
        if _implies(f, g.child):
            return True
        if isinstance(f, Eventually) and _implies(f.child, g):
            return True
    if isinstance(g, Until) and _implies(f, g.right):
        return True
    if isinstance(f, Next) and isinstance(g, Next):
        return _implies(f.child, g.child)
    if isinstance(f, Always) and isinstance(g, Always):
        return _implies(f.child, g.child)
    return False


def _flatten(kind: type, items: Iterable[Formula]) -> list[Formula]:
    out = []
    for x in items:
        if isinstance(x, kind):
            out.extend(_flatten(kind, (x.left, x.right)))
        else:
            out.append(x)
    return out


def _fold(kind: type, items: list[Formula]) -> Formula:
    f = items[0]
    for x in items[1:]:
        f = kind(f, x)
    return f


def _junction(kind: type, items: list[Formula]) -> Formula:
    unit, zero = (TRUE, FALSE) if kind is And else (FALSE, TRUE)
    ops = []
    seen = set()
    for x in _flatten(kind, items):
        if x == zero:
            return zero
        if x == unit or x in seen:
            continue
        seen.add(x)
        ops.append(x)
    if not ops:
        return unit
    # drop redundant operands: in a conjunction the weaker, in a disjunction the stronger
    keep = []
    for i, x in enumerate(ops):
        redundant = False
        for j, y in enumerate(ops):
            if i == j:
                continue
            stronger, weaker = (y, x) if kind is And else (x, y)
            if _implies(stronger, weaker):
                # mutual entailment: keep the first by rendered order
                if _implies(weaker, stronger) and to_string(x) < to_string(y):
                    continue
                redundant = True
                break
        if not redundant:
            keep.append(x)
    keep.sort(key=_operand_order)
    return _fold(kind, keep)


def _operand_order(f: Formula) -> tuple[int, str]:
    literal = isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.child, Atom))
    return (0 if literal else 1, to_string(f))


@lru_cache(maxsize=None)
def canonicalize(f: Formula) -> Formula:
    """Boolean simplification plus a deterministic operand order; idempotent."""
    if isinstance(f, (TrueConst, FalseConst, Atom)):
        return f
    if isinstance(f, Not):
        c = canonicalize(f.child)
        if isinstance(c, TrueConst):
            return FALSE
        if isinstance(c, FalseConst):
            return TRUE
        if isinstance(c, Not):
            return c.child
        return Not(c)
    if isinstance(f, Implies):
        return canonicalize(Or(Not(f.left), f.right))
    if isinstance(f, (And, Or)):
        return _junction(type(f), [canonicalize(f.left), canonicalize(f.right)])
    if isinstance(f, Next):
        c = canonicalize(f.child)
        return c if isinstance(c, (TrueConst, FalseConst)) else Next(c)
    if isinstance(f, Eventually):
        c = canonicalize(f.child)
        if isinstance(c, (TrueConst, FalseConst, Eventually)):
            return c
        return Eventually(c)
    if isinstance(f, Always):
        c = canonicalize(f.child)
        if isinstance(c, (TrueConst, FalseConst, Always)):
            return c
        return Always(c)
    if isinstance(f, Until):
        left, right = canonicalize(f.left), canonicalize(f.right)
        if isinstance(right, (TrueConst, FalseConst)):
            return right
        if isinstance(left, FalseConst):
            return right
        if isinstance(left, TrueConst):
            return canonicalize(Eventually(right))
        if _implies(left, right):
            return right
        return Until(left, right)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# progression

def _prog(f: Formula, sigma: frozenset[str]) -> Formula:
    if isinstance(f, (TrueConst, FalseConst)):
        return f
    if isinstance(f, Atom):
        return TRUE if f.name in sigma else FALSE
    if isinstance(f, Not):
        return Not(_prog(f.child, sigma))
    if isinstance(f, And):
        return And(_prog(f.left, sigma), _prog(f.right, sigma))
    if isinstance(f, Or):
        return Or(_prog(f.left, sigma), _prog(f.right, sigma))
    if isinstance(f, Implies):
        return Or(Not(_prog(f.left, sigma)), _prog(f.right, sigma))
    if isinstance(f, Next):
        return f.child
    if isinstance(f, Until):
        return Or(_prog(f.right, sigma), And(_prog(f.left, sigma), f))
    if isinstance(f, Eventually):
        return Or(_prog(f.child, sigma), f)
    if isinstance(f, Always):
        return And(_prog(f.child, sigma), f)
    raise TypeError(f"not a formula: {f!r}")


@lru_cache(maxsize=1 << 16)
def _progress_cached(f: Formula, sigma: frozenset[str]) -> Formula:
    return canonicalize(_prog(f, sigma))


def progress(f: Formula, sigma: Iterable[str]) -> Formula:
    """Progress ``f`` through one truth assignment (set of true propositions)."""
    relevant = propositions(f)
    return _progress_cached(f, frozenset(p for p in sigma if p in relevant))


def progression_closure(tasks: Iterable[Formula]) -> set[Formula]:
    """All canonical formulas reachable from ``tasks`` by progression.

    Each formula is progressed over every subset of its own propositions; the
    constants true/false are excluded from the result.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("progression_closure needs at least one task")
    start = [canonicalize(t) for t in tasks]
    seen: set[Formula] = set()
    queue = deque()
    for f in start:
        if not isinstance(f, (TrueConst, FalseConst)) and f not in seen:
            seen.add(f)
            queue.append(f)
    while queue:
        f = queue.popleft()
        props = sorted(propositions(f))
        for r in range(len(props) + 1):
            for sigma in itertools.combinations(props, r):
                g = _progress_cached(f, frozenset(sigma))
                if isinstance(g, (TrueConst, FalseConst)) or g in seen:
                    continue
                seen.add(g)
                queue.append(g)
    return seen


# ---------------------------------------------------------------------------
# direct finite-trace semantics

def _nnf(f: Formula, negate: bool = False) -> Formula:
    if isinstance(f, TrueConst):
        return FALSE if negate else TRUE
    if isinstance(f, FalseConst):
        return TRUE if negate else FALSE
    if isinstance(f, Atom):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return _nnf(f.child, not negate)
    if isinstance(f, Implies):
        return _nnf(Or(Not(f.left), f.right), negate)
    if isinstance(f, And):
        kind = Or if negate else And
        return kind(_nnf(f.left, negate), _nnf(f.right, negate))
    if isinstance(f, Or):
        kind = And if negate else Or
        return kind(_nnf(f.left, negate), _nnf(f.right, negate))
    if isinstance(f, Next):
        return Next(_nnf(f.child, negate))
    if isinstance(f, Eventually):
        if negate:
            raise UnsupportedFragmentError(f"negated eventually in {to_string(f)}")
        return Eventually(_nnf(f.child))
    if isinstance(f, Always):
        if not negate:
            raise UnsupportedFragmentError(f"always operator in {to_string(f)}")
        return Eventually(_nnf(f.child, True))
    if isinstance(f, Until):
        if negate:
            raise UnsupportedFragmentError(f"negated until in {to_string(f)}")
        return Until(_nnf(f.left), _nnf(f.right))
    raise TypeError(f"not a formula: {f!r}")


# Kleene three-valued logic: True, False, None (not yet determined by the prefix)
def _k_and(a, b):
    if a is False or b is False:
        return False
    if a is True and b is True:
        return True
    return None


def _k_or(a, b):
    if a is True or b is True:
        return True
    if a is False and b is False:
        return False
    return None


def _eval(f: Formula, trace: Sequence[frozenset[str]], i: int, memo: dict):
    key = (f, i)
    if key in memo:
        return memo[key]
    n = len(trace)
    if isinstance(f, TrueConst):
        v = True
    elif isinstance(f, FalseConst):
        v = False
    elif isinstance(f, Atom):
        v = (f.name in trace[i]) if i < n else None
    elif isinstance(f, Not):  # NNF: child is an atom
        inner = _eval(f.child, trace, i, memo)
        v = None if inner is None else not inner
    elif isinstance(f, And):
        v = _k_and(_eval(f.left, trace, i, memo), _eval(f.right, trace, i, memo))
    elif isinstance(f, Or):
        v = _k_or(_eval(f.left, trace, i, memo), _eval(f.right, trace, i, memo))
    elif isinstance(f, Next):
        v = _eval(f.child, trace, min(i + 1, n), memo)
    elif isinstance(f, (Until, Eventually)):
        left = TRUE if isinstance(f, Eventually) else f.left
        right = f.child if isinstance(f, Eventually) else f.right
        # past the end the rest of the word is unknown
        rest = None if i >= n else _eval(f, trace, i + 1, memo)
        v = _k_or(_eval(right, trace, i, memo), _k_and(_eval(left, trace, i, memo), rest))
    else:
        raise TypeError(f"unexpected node {f!r}")
    memo[key] = v
    return v


def satisfies(trace: Sequence[Iterable[str]], f: Formula) -> tuple[bool, Optional[int]]:
    """Evaluate ``f`` on a finite trace of truth assignments.

    A prefix satisfies ``f`` when every infinite continuation of it does.
    Returns ``(satisfied, first_index)`` where ``first_index`` is the
    smallest ``n`` such that ``trace[:n + 1]`` satisfies ``f``.  Positions
    past the end of a prefix are treated as unknown, never as false, and the
    evaluation is done directly on the trace without progression.
    """
    trace = [frozenset(s) for s in trace]
    if not trace:
        raise ValueError("trace must be non-empty")
    g = _nnf(f)
    for n in range(1, len(trace) + 1):
        if _eval(g, trace[:n], 0, {}) is True:
            return True, n - 1
    return False, None
