"""
Solver backends.

``SmtProcess`` drives any SMT-LIB 2 solver over its standard streams.
``Builtin`` needs no external tool: it walks every stoichiometry assignment
and evaluates the very same constraint terms, searching path variables
step by step.  It is only complete within declared small bounds.
"""

from __future__ import annotations

import itertools
import logging
import os
import selectors
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .encoding import (SymbolicEncoding, emit_smtlib, path_commands, get_value_command, n_var,
                       stoichiometry_vars, x_var)
from .terms import Term, compile_term, to_smt
from .. import predicates as pr

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    def __init__(self, message: str, transcript: str = ""):
        super().__init__(message)
        self.transcript = transcript


class SolverTimeout(BackendError):
    pass


# -- s-expressions --------------------------------------------------------------

def parse_sexpr(text: str):
    """Parse one s-expression into nested lists of atom strings."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def read():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while tokens[pos] != ")":
                out.append(read())
            pos += 1
            return out
        return tok

    if not tokens:
        raise ValueError("empty s-expression")
    return read()


def sexpr_int(node) -> int:
    if isinstance(node, str):
        return int(node)
    if len(node) == 2 and node[0] == "-":
        return -sexpr_int(node[1])
    raise ValueError(f"not an integer literal: {node!r}")


def _sexpr_end(text: str) -> int | None:
    """Index just past the s-expression opening ``text``, or None if incomplete."""
    depth = 0
    for k, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return k + 1
    return None


# -- external process ---------------------------------------------------------------

SOLVER_ARGS = {
    "z3": ["-in", "-smt2"],
    "cvc5": ["--lang=smt2", "--incremental", "--produce-models"],
    "yices-smt2": ["--incremental"],
}


@dataclass
class SmtProcess:
    """Configuration for an external SMT-LIB 2 solver process."""
    executable: str = "z3"
    args: list[str] | None = None
    timeout: float = 7200.0
    kind: str = field(default="external-SMT-process", init=False)

    def command(self) -> list[str]:
        path = shutil.which(self.executable)
        if path is None:
            raise BackendError(f"SMT solver {self.executable!r} not found on PATH")
        args = self.args
        if args is None:
            args = SOLVER_ARGS.get(os.path.basename(self.executable), ["-in"])
        return [path, *args]

    def available(self) -> bool:
        return shutil.which(self.executable) is not None

    def open(self, encoding: SymbolicEncoding, paths: Sequence[int] | None = None) -> "SmtSession":
        return SmtSession(self.command(), encoding, paths)


class SmtSession:
    def __init__(self, command: list[str], encoding: SymbolicEncoding,
                 paths: Sequence[int] | None = None):
        self.encoding = encoding
        n_paths = len(encoding.trajectories)
        self.paths = set(range(n_paths) if paths is None else paths)
        self.transcript: list[str] = []
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.STDOUT)
        self.selector = selectors.DefaultSelector()
        self.selector.register(self.proc.stdout, selectors.EVENT_READ)
        self.buffer = b""
        self.send(emit_smtlib(encoding, query=False, paths=sorted(self.paths)))

    def send(self, text: str) -> None:
        self.transcript.append(text)
        try:
            self.proc.stdin.write(text.encode())
            self.proc.stdin.flush()
        except BrokenPipeError:
            raise BackendError("solver process died", self.dump()) from None

    def dump(self, limit: int = 20000) -> str:
        text = "".join(self.transcript)
        return text if len(text) <= limit else "...\n" + text[-limit:]

    def _read_response(self, deadline: float | None) -> str:
        while True:
            text = self.buffer.decode(errors="replace").lstrip()
            if text.startswith("("):
                end = _sexpr_end(text)
                if end is not None:
                    self.buffer = text[end:].encode()
                    return text[:end]
            elif "\n" in text:
                line, rest = text.split("\n", 1)
                self.buffer = rest.encode()
                return line.strip()
            wait = None if deadline is None else deadline - time.monotonic()
            if wait is not None and (wait <= 0 or not self.selector.select(wait)):
                self.proc.kill()
                raise SolverTimeout("solver timed out", self.dump())
            chunk = os.read(self.proc.stdout.fileno(), 65536)
            if not chunk:
                raise BackendError("solver process closed its output", self.dump())
            self.buffer += chunk

    def _response(self, deadline):
        resp = self._read_response(deadline)
        self.transcript.append(f";; <- {resp}\n")
        if resp.startswith("(error"):
            raise BackendError(f"solver error: {resp}", self.dump())
        return resp

    def check(self, deadline: float | None = None) -> str:
        self.send("(check-sat)\n")
        resp = self._response(deadline)
        if resp not in ("sat", "unsat", "unknown"):
            raise BackendError(f"unexpected check-sat response {resp!r}", self.dump())
        return resp

    def model(self) -> dict[str, int]:
        self.send(get_value_command(self.encoding.problem) + "\n")
        resp = self._response(None)
        try:
            pairs = parse_sexpr(resp)
            return {name: sexpr_int(val) for name, val in pairs}
        except (ValueError, IndexError) as exc:
            raise BackendError(f"malformed model: {exc}", self.dump()) from None

    def add_path(self, index: int) -> None:
        if index not in self.paths:
            self.paths.add(index)
            self.send("\n".join(path_commands(self.encoding, index)) + "\n")

    def add(self, terms: list[Term]) -> None:
        self.send("".join(f"(assert {to_smt(t)})\n" for t in terms))

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.write(b"(exit)\n")
                self.proc.stdin.flush()
                self.proc.wait(timeout=2)
            except (BrokenPipeError, subprocess.TimeoutExpired, OSError):
                self.proc.kill()
                self.proc.wait()
        self.selector.close()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


# -- builtin enumerator -------------------------------------------------------------

@dataclass
class Builtin:
    """Exhaustive search over stoichiometry assignments, in lexicographic order."""
    max_species: int = 2
    max_reactions: int = 2
    max_steps: int = 6
    max_total: int = 12
    timeout: float = 7200.0
    kind: str = field(default="builtin-enumerator", init=False)

    def available(self) -> bool:
        return True

    def open(self, encoding: SymbolicEncoding, paths: Sequence[int] | None = None) -> "BuiltinSession":
        prob = encoding.problem
        total = prob.total_bound()
        over = []
        if prob.n_species > self.max_species:
            over.append(f"N={prob.n_species}>{self.max_species}")
        if prob.n_reactions > self.max_reactions:
            over.append(f"M={prob.n_reactions}>{self.max_reactions}")
        if prob.max_steps > self.max_steps:
            over.append(f"K={prob.max_steps}>{self.max_steps}")
        if total is None or total > self.max_total:
            over.append(f"input total {total} > {self.max_total}")
        if over:
            raise BackendError("builtin backend bounds exceeded: " + ", ".join(over))
        return BuiltinSession(encoding)


def _pair_vectors(n: int) -> list[tuple[int, ...]]:
    out = []
    for v in itertools.product(range(3), repeat=n):
        if sum(v) == 2:
            out.append(v)
    return sorted(out)


class BuiltinSession:
    def __init__(self, encoding: SymbolicEncoding):
        self.encoding = encoding
        prob = encoding.problem
        self.n, self.m = prob.n_species, prob.n_reactions
        self.stoich_names = stoichiometry_vars(self.m, self.n)
        self.structure = [compile_term(t) for _, t in encoding.structure]
        self.extra: list = [compile_term(t) for t in encoding.uniqueness]
        self.paths = [_CompiledPath(t, prob, self.n) for t in encoding.trajectories]
        self.candidates = self._assignments()
        self.current: dict[str, int] | None = None

    def _assignments(self) -> Iterator[dict[str, int]]:
        pairs = _pair_vectors(self.n)
        rows = [(r, p) for r in pairs for p in pairs]
        for choice in itertools.product(rows, repeat=self.m):
            env = {}
            for i, (r, p) in enumerate(choice):
                for s in range(self.n):
                    env[f"r_{i}_{s}"] = r[s]
                    env[f"p_{i}_{s}"] = p[s]
            yield env

    def check(self, deadline: float | None = None) -> str:
        for env in self.candidates:
            if deadline is not None and time.monotonic() > deadline:
                raise SolverTimeout("builtin search timed out")
            if not all(f(env) for f in self.structure):
                continue
            if not all(f(env) for f in self.extra):
                continue
            if all(path.satisfiable(env) for path in self.paths):
                self.current = env
                return "sat"
        self.current = None
        return "unsat"

    def model(self) -> dict[str, int]:
        if self.current is None:
            raise BackendError("no model available")
        return {k: self.current[k] for k in self.stoich_names}

    def add_path(self, index: int) -> None:
        pass  # every path is always checked

    def add(self, terms: list[Term]) -> None:
        self.extra.extend(compile_term(t) for t in terms)

    def close(self) -> None:
        pass


class _CompiledPath:
    """Step-wise existential search over one unrolled path."""

    def __init__(self, traj, problem, n):
        self.n = n
        self.k = problem.max_steps
        self.index = traj.index
        self.bound = traj.bound
        self.stutter = problem.stutter
        self.initial = compile_term(traj.initial)
        self.steps = [compile_term(t) for t in traj.steps]
        self.final = compile_term(traj.final)
        phi0 = problem.predicates[traj.index].initial
        bound = traj.bound if traj.bound is not None else problem.total_bound()
        ub = pr.upper_bounds(phi0)
        caps = [min(ub.get(s, bound), bound) for s in problem.species]
        self.starts = [x for x in itertools.product(*(range(c + 1) for c in caps))
                       if sum(x) <= bound]
        self.max_total = bound

    def _env(self, env, step, x):
        e = dict(env)
        for s in range(self.n):
            e[x_var(self.index, step, s)] = x[s]
        return e

    def satisfiable(self, stoich: dict[str, int]) -> bool:
        m = len([k for k in stoich if k.startswith("r_")]) // self.n
        changes = []
        for i in range(m):
            changes.append(tuple(stoich[f"p_{i}_{s}"] - stoich[f"r_{i}_{s}"] for s in range(self.n)))
        frontier = {x for x in self.starts if self.initial(self._env(stoich, 0, x))}
        for j in range(self.k):
            nxt = set()
            for x in frontier:
                e = self._env(stoich, j, x)
                cands = {(x, 1)}
                mults = range(1, self.max_total + 1) if self.stutter else (1,)
                for d in changes:
                    for mult in mults:
                        y = tuple(a + mult * b for a, b in zip(x, d))
                        if min(y) < 0:
                            break
                        cands.add((y, mult))
                for y, mult in cands:
                    if y in nxt:
                        continue
                    ey = dict(e)
                    for s in range(self.n):
                        ey[x_var(self.index, j + 1, s)] = y[s]
                    if self.stutter:
                        ey[n_var(self.index, j)] = mult
                    if self.steps[j](ey):
                        nxt.add(y)
            frontier = nxt
            if not frontier:
                return False
        return any(self.final(self._env(stoich, self.k, x)) for x in frontier)
