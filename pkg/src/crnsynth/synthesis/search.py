"""Enumeration of distinct solution CRNs by repeated solving with uniqueness constraints."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..crn import Crn, is_terminal, stutter_targets, successors
from ..predicates import PathPredicate, compile_predicate, satisfying_states
from .backends import BackendError, SolverTimeout
from .encoding import SynthesisProblem, emit_smtlib, encode, encode_uniqueness, model_to_crn

log = logging.getLogger(__name__)

EXHAUSTED = "exhausted"
LIMIT = "solution-limit-reached"
TIMEOUT = "timeout"


@dataclass
class SynthesisOutcome:
    problem: SynthesisProblem
    solutions: list[Crn] = field(default_factory=list)
    status: str = EXHAUSTED
    solve_seconds: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    excluded: int = 0

    def __len__(self):
        return len(self.solutions)


def path_exists(crn: Crn, phi: PathPredicate, problem: SynthesisProblem) -> bool:
    """Explicit check of one path predicate under the problem's step relation and bounds."""
    bound = problem.total_bound()
    if problem.stutter:
        def step(crn, x):
            return stutter_targets(crn, x, problem.sequential)
    else:
        step = successors
    final = compile_predicate(phi.final, crn.species)
    frontier = set(satisfying_states(phi.initial, crn.species, bound))
    seen = set(frontier)
    for depth in range(problem.max_steps + 1):
        if any(is_terminal(crn, x) and final(x) for x in frontier):
            return True
        if depth == problem.max_steps:
            break
        frontier = set().union(*(step(crn, x) for x in frontier)) - seen
        seen |= frontier
    return False


def first_violation(crn: Crn, problem: SynthesisProblem, order: list[int]) -> int | None:
    for i in order:
        if not path_exists(crn, problem.predicates[i], problem):
            return i
    return None


def enumerate_solutions(problem: SynthesisProblem, backend, max_solutions: int | None = None,
                        timeout: float | None = None, dump_dir: str | Path | None = None,
                        lazy: bool | None = None) -> SynthesisOutcome:
    """
    Solve, extract a CRN, forbid it, repeat until unsat, the solution limit
    or the timeout.  ``timeout`` defaults to the backend's own.

    With ``lazy`` (the default for external solvers) the solver starts from the
    structural constraints only; each candidate is checked explicitly and the
    path constraints of the first predicate it violates are added before
    solving again.  Unsat on a subset of predicates implies unsat on all, so the
    solutions are the same as with the full encoding.
    """
    if max_solutions is not None and max_solutions < 1:
        raise ValueError("max_solutions must be at least 1")
    timeout = backend.timeout if timeout is None else timeout
    start = time.monotonic()
    deadline = start + timeout
    encoding = encode(problem)
    outcome = SynthesisOutcome(problem)
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
    if lazy is None:
        lazy = getattr(backend, "kind", "") == "external-SMT-process"
    session = backend.open(encoding, paths=[] if lazy else None)
    order = list(range(len(problem.predicates)))
    try:
        while True:
            if dump_dir is not None:
                script = emit_smtlib(encoding.with_uniqueness(outcome.solutions))
                (dump_dir / f"query_{len(outcome.solutions):04d}.smt2").write_text(script)
            t0 = time.monotonic()
            try:
                answer = session.check(deadline)
            except SolverTimeout:
                outcome.status = TIMEOUT
                break
            if answer == "unsat":
                outcome.status = EXHAUSTED
                break
            if answer == "unknown":
                raise BackendError("solver answered unknown", getattr(session, "dump", lambda: "")())
            crn = model_to_crn(session.model(), problem)
            if lazy:
                bad = first_violation(crn, problem, order)
                if bad is not None:
                    log.debug("candidate %s violates predicate %d", crn, bad)
                    session.add_path(bad)
                    # check the most recently violated predicates first
                    order.remove(bad)
                    order.insert(0, bad)
                    continue
            if any(crn.canonical_key() == c.canonical_key() for c in outcome.solutions):
                raise BackendError(f"solver repeated a solution: {crn}")
            now = time.monotonic()
            outcome.solutions.append(crn)
            outcome.solve_seconds.append(now - t0)
            outcome.elapsed.append(now - start)
            log.info("solution %d after %.2fs: %s", len(outcome.solutions), now - start, crn)
            session.add(encode_uniqueness([crn], problem))
            outcome.excluded += 1
            if max_solutions is not None and len(outcome.solutions) >= max_solutions:
                outcome.status = LIMIT
                break
    finally:
        session.close()
        outcome.wall_seconds = time.monotonic() - start
    return outcome


def increment_k(problem: SynthesisProblem, backend, max_k: int, max_solutions: int | None = None,
                timeout: float | None = None, lazy: bool | None = None) -> dict[int, SynthesisOutcome]:
    """Run the enumeration for every K from ``problem.max_steps`` up to ``max_k``."""
    if max_k < problem.max_steps:
        raise ValueError("max_k must be at least the problem's K")
    return {
        k: enumerate_solutions(problem.with_steps(k), backend, max_solutions, timeout, lazy=lazy)
        for k in range(problem.max_steps, max_k + 1)
    }
