"""
Minimal integer/boolean term language for the synthesis constraints.

A term is an ``int``, a ``bool``, a variable name (``str``) or a tuple
``(op, *args)`` whose ``op`` is an SMT-LIB function symbol.  Terms render
to SMT-LIB 2 text and compile to Python closures over a variable
assignment, so the same constraint objects feed both solver backends.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Union

Term = Union[int, bool, str, tuple]


def And(*args: Term) -> Term:
    flat = []
    for a in args:
        if a is True:
            continue
        if a is False:
            return False
        if isinstance(a, tuple) and a[0] == "and":
            flat.extend(a[1:])
        else:
            flat.append(a)
    if not flat:
        return True
    return flat[0] if len(flat) == 1 else ("and", *flat)


def Or(*args: Term) -> Term:
    flat = []
    for a in args:
        if a is False:
            continue
        if a is True:
            return True
        if isinstance(a, tuple) and a[0] == "or":
            flat.extend(a[1:])
        else:
            flat.append(a)
    if not flat:
        return False
    return flat[0] if len(flat) == 1 else ("or", *flat)


def Not(a: Term) -> Term:
    if isinstance(a, bool):
        return not a
    return ("not", a)


def Eq(a: Term, b: Term) -> Term:
    return ("=", a, b)


def Ge(a: Term, b: Term) -> Term:
    return (">=", a, b)


def Gt(a: Term, b: Term) -> Term:
    return (">", a, b)


def Le(a: Term, b: Term) -> Term:
    return ("<=", a, b)


def Lt(a: Term, b: Term) -> Term:
    return ("<", a, b)


def Sum(args: Iterable[Term]) -> Term:
    args = [a for a in args if a != 0]
    if not args:
        return 0
    return args[0] if len(args) == 1 else ("+", *args)


def Add(a: Term, b: Term) -> Term:
    return Sum([a, b])


def Sub(a: Term, b: Term) -> Term:
    if b == 0:
        return a
    return ("-", a, b)


def Ite(c: Term, a: Term, b: Term) -> Term:
    return ("ite", c, a, b)


def Implies(a: Term, b: Term) -> Term:
    return ("=>", a, b)


def times_small(n: Term, coeff: Term) -> Term:
    """``n * coeff`` for a symbolic ``coeff`` in {0, 1, 2}, kept linear."""
    if isinstance(coeff, int):
        return 0 if coeff == 0 else (n if coeff == 1 else ("*", coeff, n))
    return Ite(Eq(coeff, 0), 0, Ite(Eq(coeff, 1), n, ("*", 2, n)))


# -- rendering --------------------------------------------------------------

def to_smt(t: Term) -> str:
    if isinstance(t, bool):
        return "true" if t else "false"
    if isinstance(t, int):
        return str(t) if t >= 0 else f"(- {-t})"
    if isinstance(t, str):
        return t
    return "(" + " ".join([t[0]] + [to_smt(a) for a in t[1:]]) + ")"


def variables(t: Term, out: set | None = None) -> set[str]:
    if out is None:
        out = set()
    if isinstance(t, str):
        out.add(t)
    elif isinstance(t, tuple):
        for a in t[1:]:
            variables(a, out)
    return out


def has_nonlinear(t: Term) -> bool:
    if not isinstance(t, tuple):
        return False
    if t[0] == "*":
        symbolic = [a for a in t[1:] if not isinstance(a, int) and not _is_constant(a)]
        if len(symbolic) > 1:
            return True
    return any(has_nonlinear(a) for a in t[1:])


def _is_constant(t: Term) -> bool:
    if isinstance(t, (int, bool)):
        return True
    if isinstance(t, tuple):
        return all(_is_constant(a) for a in t[1:])
    return False


# -- evaluation ---------------------------------------------------------------

_PY_NARY = {"and": " and ", "or": " or ", "+": " + ", "*": " * "}
_PY_BIN = {"<": "<", "<=": "<=", ">": ">", ">=": ">=", "=": "=="}


def _to_py(t: Term) -> str:
    if isinstance(t, bool):
        return "True" if t else "False"
    if isinstance(t, int):
        return f"({t})"
    if isinstance(t, str):
        return f"e[{t!r}]"
    op, args = t[0], t[1:]
    if op in _PY_NARY:
        return "(" + _PY_NARY[op].join(_to_py(a) for a in args) + ")"
    if op in _PY_BIN:
        return f"({_to_py(args[0])} {_PY_BIN[op]} {_to_py(args[1])})"
    if op == "-":
        if len(args) == 1:
            return f"(-{_to_py(args[0])})"
        return "(" + " - ".join(_to_py(a) for a in args) + ")"
    if op == "not":
        return f"(not {_to_py(args[0])})"
    if op == "=>":
        return f"((not {_to_py(args[0])}) or {_to_py(args[1])})"
    if op == "ite":
        return f"({_to_py(args[1])} if {_to_py(args[0])} else {_to_py(args[2])})"
    if op == "distinct":
        return f"(len({{{', '.join(_to_py(a) for a in args)}}}) == {len(args)})"
    raise ValueError(f"cannot evaluate operator {op!r}")


def compile_term(t: Term) -> Callable[[Mapping[str, int]], object]:
    """Compile a term into ``f(assignment)``; unknown variables raise KeyError."""
    return eval(f"lambda e: {_to_py(t)}", {"len": len})  # noqa: S307 - generated from our own terms


def evaluate(t: Term, env: Mapping[str, int]):
    return compile_term(t)(env)
