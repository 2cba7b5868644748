"""
State predicates over species counts and path predicates built from them.

Text syntax (loosest to tightest binding)::

    <=>   =>   ||   &&   !   < <= = > >=   + -   *

``=>`` is right-associative; the other binary operators associate left.
Species are referenced by name; integer constants may carry a unary minus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator, Mapping, Sequence, Union

from .crn import CrnError, State

INT64_MIN, INT64_MAX = -(2 ** 63), 2 ** 63 - 1


class PredicateError(ValueError):
    pass


@dataclass(frozen=True)
class Const:
    value: Union[bool, int]


@dataclass(frozen=True)
class Species:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Species, Not, BinOp]

BOOL_OPS = ("&&", "||", "=>", "<=>")
CMP_OPS = ("<", "<=", "=", ">", ">=")
ARITH_OPS = ("+", "-", "*")

TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class PathPredicate:
    initial: Expr
    final: Expr

    def __str__(self):
        return f"({to_text(self.initial)}, {to_text(self.final)})"


# -- construction helpers ---------------------------------------------------

def var(name: str) -> Species:
    return Species(name)


def eq(name: str, value: int) -> BinOp:
    return BinOp("=", Species(name), Const(int(value)))


def conj(*args: Expr) -> Expr:
    if not args:
        return TRUE
    out = args[0]
    for a in args[1:]:
        out = BinOp("&&", out, a)
    return out


def disj(*args: Expr) -> Expr:
    if not args:
        return FALSE
    out = args[0]
    for a in args[1:]:
        out = BinOp("||", out, a)
    return out


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(<=>|=>|<=|>=|&&|\|\||[!<>=+\-*()]|\d+|[A-Za-z_][A-Za-z_0-9]*)")


def _tokenize(text: str) -> list[str]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PredicateError(f"unexpected character at {pos}: {text[pos:]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise PredicateError(f"expected {expected or 'token'}, got {tok!r}")
        self.pos += 1
        return tok

    def parse(self):
        expr = self.iff()
        if self.peek() is not None:
            raise PredicateError(f"trailing input at {self.peek()!r}")
        _check_sorts(expr, want_bool=True)
        return expr

    def iff(self):
        left = self.implies()
        while self.peek() == "<=>":
            self.take()
            left = BinOp("<=>", left, self.implies())
        return left

    def implies(self):
        left = self.disj()
        if self.peek() == "=>":
            self.take()
            return BinOp("=>", left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.peek() == "||":
            self.take()
            left = BinOp("||", left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.peek() == "&&":
            self.take()
            left = BinOp("&&", left, self.unary())
        return left

    def unary(self):
        if self.peek() == "!":
            self.take()
            return Not(self.unary())
        return self.comparison()

    def comparison(self):
        left = self.sum()
        if self.peek() in CMP_OPS:
            op = self.take()
            return BinOp(op, left, self.sum())
        return left

    def sum(self):
        left = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.atom()
        while self.peek() == "*":
            self.take()
            left = BinOp("*", left, self.atom())
        return left

    def atom(self):
        tok = self.peek()
        if tok == "(":
            self.take()
            inner = self.iff()
            self.take(")")
            return inner
        if tok == "-":
            self.take()
            nxt = self.take()
            if not nxt.isdigit():
                raise PredicateError("unary minus only applies to integer constants")
            return Const(-int(nxt))
        if tok is not None and tok.isdigit():
            self.take()
            return Const(int(tok))
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok is not None and re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", tok):
            self.take()
            return Species(tok)
        raise PredicateError(f"unexpected token {tok!r}")


def _check_sorts(expr: Expr, want_bool: bool) -> None:
    if isinstance(expr, Const):
        ok = isinstance(expr.value, bool) == want_bool
    elif isinstance(expr, Species):
        ok = not want_bool
    elif isinstance(expr, Not):
        ok = want_bool
        _check_sorts(expr.arg, True)
    elif expr.op in BOOL_OPS:
        ok = want_bool
        _check_sorts(expr.left, True)
        _check_sorts(expr.right, True)
    elif expr.op in CMP_OPS:
        ok = want_bool
        _check_sorts(expr.left, False)
        _check_sorts(expr.right, False)
    else:
        ok = not want_bool
        _check_sorts(expr.left, False)
        _check_sorts(expr.right, False)
    if not ok:
        kind = "boolean" if want_bool else "integer"
        raise PredicateError(f"expected a {kind} expression, got {to_text(expr)!r}")


def parse(text: str) -> Expr:
    return _Parser(_tokenize(text)).parse()


def to_text(expr: Expr) -> str:
    if isinstance(expr, Const):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        return str(expr.value)
    if isinstance(expr, Species):
        return expr.name
    if isinstance(expr, Not):
        return f"!{_wrap(expr.arg)}"
    return f"{_wrap(expr.left)} {expr.op} {_wrap(expr.right)}"


def _wrap(expr: Expr) -> str:
    if isinstance(expr, BinOp) or (isinstance(expr, Const) and not isinstance(expr.value, bool)
                                   and expr.value < 0):
        return f"({to_text(expr)})"
    return to_text(expr)


def species_in(expr: Expr) -> set[str]:
    if isinstance(expr, Species):
        return {expr.name}
    if isinstance(expr, Not):
        return species_in(expr.arg)
    if isinstance(expr, BinOp):
        return species_in(expr.left) | species_in(expr.right)
    return set()


def is_linear(expr: Expr) -> bool:
    if isinstance(expr, Not):
        return is_linear(expr.arg)
    if isinstance(expr, BinOp):
        if expr.op == "*" and species_in(expr.left) and species_in(expr.right):
            return False
        return is_linear(expr.left) and is_linear(expr.right)
    return True


# -- evaluation ---------------------------------------------------------------

def _wrap64(v: int) -> int:
    if not INT64_MIN <= v <= INT64_MAX:
        raise PredicateError("integer overflow in predicate arithmetic")
    return v


_BIN: dict[str, Callable] = {
    "&&": lambda a, b: a and b,
    "||": lambda a, b: a or b,
    "=>": lambda a, b: (not a) or b,
    "<=>": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "+": lambda a, b: _wrap64(a + b),
    "-": lambda a, b: _wrap64(a - b),
    "*": lambda a, b: _wrap64(a * b),
}


def compile_predicate(expr: Expr, species: Sequence[str]) -> Callable[[Sequence[int]], bool]:
    """Turn ``expr`` into a function of a state vector ordered like ``species``."""
    index = {s: i for i, s in enumerate(species)}

    def build(e):
        if isinstance(e, Const):
            v = e.value
            return lambda x: v
        if isinstance(e, Species):
            if e.name not in index:
                raise PredicateError(f"unresolved species {e.name!r}")
            i = index[e.name]
            return lambda x: x[i]
        if isinstance(e, Not):
            f = build(e.arg)
            return lambda x: not f(x)
        f, g, op = build(e.left), build(e.right), _BIN[e.op]
        if e.op == "&&":
            return lambda x: f(x) and g(x)
        if e.op == "||":
            return lambda x: f(x) or g(x)
        return lambda x: op(f(x), g(x))

    return build(expr)


def evaluate(expr: Expr, x: Sequence[int] | Mapping[str, int], species: Sequence[str] | None = None) -> bool:
    """Evaluate at a state given as a count mapping, or as a vector plus species names."""
    if isinstance(x, Mapping):
        species = list(x)
        x = [x[s] for s in species]
    elif species is None:
        raise PredicateError("species names are required for a state vector")
    if len(x) != len(species):
        raise CrnError("state dimension does not match species list")
    return bool(compile_predicate(expr, species)(x))


# -- bounds and state enumeration --------------------------------------------

def upper_bounds(expr: Expr) -> dict[str, int]:
    """
    Per-species upper bounds that every satisfying state obeys, read off the
    conjunctive/disjunctive structure.  Species without a derivable bound are
    absent from the result.
    """
    if isinstance(expr, BinOp):
        if expr.op == "&&":
            a, b = upper_bounds(expr.left), upper_bounds(expr.right)
            out = dict(a)
            for s, v in b.items():
                out[s] = min(v, out[s]) if s in out else v
            return out
        if expr.op == "||":
            a, b = upper_bounds(expr.left), upper_bounds(expr.right)
            return {s: max(a[s], b[s]) for s in a.keys() & b.keys()}
        if expr.op in CMP_OPS:
            return _comparison_bounds(expr)
    if isinstance(expr, Const) and expr.value is False:
        return {}
    return {}


def _linear_species_sum(e: Expr) -> list[str] | None:
    """Species names if ``e`` is a plain sum of species, else None."""
    if isinstance(e, Species):
        return [e.name]
    if isinstance(e, BinOp) and e.op == "+":
        a, b = _linear_species_sum(e.left), _linear_species_sum(e.right)
        if a is not None and b is not None:
            return a + b
    return None


def _comparison_bounds(e: BinOp) -> dict[str, int]:
    op, left, right = e.op, e.left, e.right
    if isinstance(left, Const) and not isinstance(right, Const):
        flipped = {"<": ">", "<=": ">=", "=": "=", ">": "<", ">=": "<="}
        op, left, right = flipped[op], right, left
    if not (isinstance(right, Const) and not isinstance(right.value, bool)):
        return {}
    names = _linear_species_sum(left)
    if names is None:
        return {}
    c = right.value
    if op in ("=", "<="):
        bound = c
    elif op == "<":
        bound = c - 1
    else:
        return {}
    return {s: max(bound, -1) for s in names}


def total_bound(expr: Expr, species: Sequence[str]) -> int | None:
    """Largest total molecule count a satisfying state can have, if derivable."""
    ub = upper_bounds(expr)
    if any(s not in ub for s in species):
        return None
    return max(0, sum(max(ub[s], 0) for s in species))


def satisfying_states(expr: Expr, species: Sequence[str], max_total: int | None = None) -> list[State]:
    """
    All states satisfying ``expr`` with total count at most ``max_total`` (if given)
    and within the per-species bounds derivable from ``expr``.
    """
    ub = upper_bounds(expr)
    if max_total is None:
        missing = [s for s in species if s not in ub]
        if missing:
            raise PredicateError(
                f"predicate does not bound species {missing}; a total bound is required"
            )
        max_total = sum(max(ub[s], 0) for s in species)
    caps = [min(ub.get(s, max_total), max_total) for s in species]
    if any(c < 0 for c in caps):
        return []
    f = compile_predicate(expr, species)
    out = []
    for x in product(*(range(c + 1) for c in caps)):
        if sum(x) <= max_total and f(x):
            out.append(tuple(x))
    return out


def iter_nodes(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, Not):
        yield from iter_nodes(expr.arg)
    elif isinstance(expr, BinOp):
        yield from iter_nodes(expr.left)
        yield from iter_nodes(expr.right)
