"""
Brute-force ground truth for small instances.

Enumerates every bimolecular CRN over a tiny species set and checks path
predicates by breadth-first search over the stutter transition graph.  Shares
no code with the symbolic encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from math import comb
from typing import Iterator, Sequence

from .crn import Crn, Reaction, is_terminal, species_names, stutter_targets, successors
from .predicates import PathPredicate, compile_predicate, satisfying_states

MAX_SPECIES = 3
MAX_REACTIONS = 3
MAX_TOTAL = 12


class OracleBoundsError(ValueError):
    pass


def _pair_vectors(n: int) -> list[tuple[int, ...]]:
    out = []
    for i, j in combinations_with_replacement(range(n), 2):
        v = [0] * n
        v[i] += 1
        v[j] += 1
        out.append(tuple(v))
    return sorted(out)


@dataclass(frozen=True)
class ReactionSpace:
    n_species: int
    reactions: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    @classmethod
    def build(cls, n_species: int) -> ReactionSpace:
        pairs = _pair_vectors(n_species)
        rxns = tuple((r, p) for r in pairs for p in pairs if r != p)
        return cls(n_species, rxns)

    @property
    def count(self) -> int:
        return len(self.reactions)

    @property
    def ordered_count(self) -> int:
        """Reaction count when reactant and product pairs are ordered: N^2 (N^2 - 1)."""
        n2 = self.n_species ** 2
        return n2 * (n2 - 1)

    def crn_count(self, m: int) -> int:
        return comb(self.count, m)

    def ordered_crn_count(self, m: int) -> int:
        return comb(self.ordered_count, m)


def all_crns(n_species: int, n_reactions: int, species: Sequence[str] | None = None) -> Iterator[Crn]:
    if n_species > MAX_SPECIES or n_reactions > MAX_REACTIONS:
        raise OracleBoundsError(
            f"exhaustive enumeration is capped at N<={MAX_SPECIES}, M<={MAX_REACTIONS}"
        )
    if n_species < 1 or n_reactions < 1:
        raise OracleBoundsError("need N >= 1 and M >= 1")
    names = tuple(species or species_names(n_species))
    space = ReactionSpace.build(n_species)
    for chosen in combinations(space.reactions, n_reactions):
        yield Crn(names, tuple(Reaction(r, p) for r, p in chosen))


def brute_force_check(crn: Crn, phi: PathPredicate, k: int, total_bound: int = MAX_TOTAL,
                      max_total: int = MAX_TOTAL, stutter: bool = True,
                      sequential: bool = False) -> bool:
    """
    True iff some state satisfying the initial predicate reaches, within ``k``
    steps, a terminal state satisfying the final predicate.

    A step is a stutter step by default, a single firing with ``stutter=False``;
    ``sequential`` selects the stutter variant where every firing is enabled.
    Terminal states loop on themselves, so shorter paths count.
    """
    if stutter:
        def step(crn, x):
            return stutter_targets(crn, x, sequential)
    else:
        step = successors
    if total_bound > max_total:
        raise OracleBoundsError(f"total bound {total_bound} exceeds the oracle cap {max_total}")
    initial = satisfying_states(phi.initial, crn.species, total_bound)
    # every initial state must fit inside the bound, not just the ones we found
    wider = satisfying_states(phi.initial, crn.species, total_bound + 1)
    if len(wider) != len(initial):
        raise OracleBoundsError("initial predicate admits states above the total bound")
    final = compile_predicate(phi.final, crn.species)
    frontier = set(initial)
    seen = set(frontier)
    for depth in range(k + 1):
        for x in frontier:
            if is_terminal(crn, x) and final(x):
                return True
        if depth == k:
            break
        nxt = set()
        for x in frontier:
            nxt |= step(crn, x)
        frontier = nxt - seen
        seen |= frontier
        if not frontier:
            break
    return False


def meets_roles(crn: Crn, inputs: Sequence[str], outputs: Sequence[str]) -> bool:
    for s in inputs:
        i = crn.index_of(s)
        if not any(r.reactants[i] > 0 for r in crn.reactions):
            return False
    for s in outputs:
        i = crn.index_of(s)
        if not any(r.products[i] > 0 for r in crn.reactions):
            return False
    return True


def exhaustive_synthesis(problem, max_total: int = MAX_TOTAL) -> list[Crn]:
    """Every CRN of the problem's size satisfying all its path predicates, canonically ordered."""
    bound = problem.total_bound()
    if bound is None or bound > max_total:
        raise OracleBoundsError(f"predicate totals ({bound}) exceed the oracle cap {max_total}")
    found = []
    for crn in all_crns(problem.n_species, problem.n_reactions, problem.species):
        if not meets_roles(crn, problem.inputs, problem.outputs):
            continue
        if all(brute_force_check(crn, phi, problem.max_steps, bound, max_total, problem.stutter,
                                 problem.sequential)
               for phi in problem.predicates):
            found.append(Crn(crn.species, crn.reactions, problem.inputs, problem.outputs).canonical())
    return sorted(found, key=Crn.canonical_key)
