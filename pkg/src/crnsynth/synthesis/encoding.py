"""
Symbolic encoding of bimolecular CRN synthesis.

Stoichiometry is two integer matrices ``r`` and ``p`` (reaction x species);
each path predicate gets its own unrolled path ``x^i_0 .. x^i_K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .. import predicates as pr
from ..crn import Crn, species_names
from ..predicates import PathPredicate
from .terms import (And, Eq, Ge, Gt, Lt, Not, Or, Sub, Sum, Term, has_nonlinear,
                    times_small, to_smt)


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class SynthesisProblem:
    n_species: int
    n_reactions: int
    max_steps: int
    predicates: tuple[PathPredicate, ...]
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    stutter: bool = True
    species: tuple[str, ...] = ()
    sequential: bool = False

    def __post_init__(self):
        if self.n_species < 1 or self.n_reactions < 1 or self.max_steps < 1:
            raise EncodingError("N, M and K must all be at least 1")
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        names = tuple(self.species) or species_names(self.n_species)
        if len(names) != self.n_species:
            raise EncodingError("species list does not match N")
        object.__setattr__(self, "species", names)
        known = set(names)
        for phi in self.predicates:
            extra = (pr.species_in(phi.initial) | pr.species_in(phi.final)) - known
            if extra:
                raise EncodingError(f"predicate {phi} references unknown species {sorted(extra)}")
        extra = (set(self.inputs) | set(self.outputs)) - known
        if extra:
            raise EncodingError(f"unknown input/output species {sorted(extra)}")

    def with_steps(self, k: int) -> SynthesisProblem:
        return SynthesisProblem(self.n_species, self.n_reactions, k, self.predicates,
                                self.inputs, self.outputs, self.stutter, self.species,
                                self.sequential)

    def total_bound(self) -> int | None:
        """Largest total molecule count any predicate's initial states can have."""
        bounds = [pr.total_bound(phi.initial, self.species) for phi in self.predicates]
        if any(b is None for b in bounds):
            return None
        return max(bounds, default=0)


# -- variable names ---------------------------------------------------------

def r_var(i: int, s: int) -> str:
    return f"r_{i}_{s}"


def p_var(i: int, s: int) -> str:
    return f"p_{i}_{s}"


def x_var(pred: int, step: int, s: int) -> str:
    return f"x_{pred}_{step}_{s}"


def n_var(pred: int, step: int) -> str:
    return f"n_{pred}_{step}"


def stoichiometry_vars(n_reactions: int, n_species: int) -> list[str]:
    return ([r_var(i, s) for i in range(n_reactions) for s in range(n_species)]
            + [p_var(i, s) for i in range(n_reactions) for s in range(n_species)])


# -- constraint groups --------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Constraints for one path predicate, kept apart so backends can search step-wise."""
    index: int
    bound: int | None
    initial: Term
    steps: tuple[Term, ...]
    final: Term
    nonneg: Term

    def terms(self) -> list[Term]:
        return [self.nonneg, self.initial, *self.steps, self.final]


@dataclass(frozen=True)
class SymbolicEncoding:
    problem: SynthesisProblem
    declarations: tuple[str, ...]
    structure: tuple[tuple[str, Term], ...]
    trajectories: tuple[Trajectory, ...]
    uniqueness: tuple[Term, ...] = field(default=())

    def constraints(self) -> list[Term]:
        out = [t for _, t in self.structure]
        for traj in self.trajectories:
            out.extend(traj.terms())
        out.extend(self.uniqueness)
        return out

    def with_uniqueness(self, previous: Sequence[Crn]) -> SymbolicEncoding:
        return SymbolicEncoding(self.problem, self.declarations, self.structure,
                                self.trajectories, tuple(encode_uniqueness(previous, self.problem)))

    @property
    def logic(self) -> str:
        return "QF_NIA" if any(has_nonlinear(t) for t in self.constraints()) else "QF_LIA"


def encode_structure(problem: SynthesisProblem) -> list[tuple[str, Term]]:
    """Labelled structural constraints: bimolecularity, roles, distinctness, net change."""
    m, n = problem.n_reactions, problem.n_species
    idx = {s: k for k, s in enumerate(problem.species)}
    out: list[tuple[str, Term]] = []
    for i in range(m):
        for s in range(n):
            out.append(("nonneg", Ge(r_var(i, s), 0)))
            out.append(("nonneg", Ge(p_var(i, s), 0)))
    for i in range(m):
        out.append(("bimolecular", Eq(Sum(r_var(i, s) for s in range(n)), 2)))
        out.append(("bimolecular", Eq(Sum(p_var(i, s) for s in range(n)), 2)))
    for name in problem.inputs:
        s = idx[name]
        out.append((f"input {name}", Or(*(Gt(r_var(i, s), 0) for i in range(m)))))
    for name in problem.outputs:
        s = idx[name]
        out.append((f"output {name}", Or(*(Gt(p_var(i, s), 0) for i in range(m)))))
    for i in range(m):
        for j in range(i + 1, m):
            out.append((f"distinct {i} {j}", Or(
                *(Not(Eq(p_var(i, s), p_var(j, s))) for s in range(n)),
                *(Not(Eq(r_var(i, s), r_var(j, s))) for s in range(n)),
            )))
    for i in range(m):
        out.append((f"changes {i}", Or(*(Not(Eq(p_var(i, s), r_var(i, s))) for s in range(n)))))
    return out


def predicate_term(expr: pr.Expr, names: dict[str, str]) -> Term:
    """Translate a state predicate, mapping species names to solver variables."""
    if isinstance(expr, pr.Const):
        return expr.value
    if isinstance(expr, pr.Species):
        return names[expr.name]
    if isinstance(expr, pr.Not):
        return Not(predicate_term(expr.arg, names))
    a, b = predicate_term(expr.left, names), predicate_term(expr.right, names)
    op = {"&&": "and", "||": "or", "<=>": "="}.get(expr.op, expr.op)
    if op == "and":
        return And(a, b)
    if op == "or":
        return Or(a, b)
    return (op, a, b)


def terminal(xs: Sequence[Term], m: int) -> Term:
    """No reaction has enough molecules of every reactant."""
    n = len(xs)
    return And(*(Or(*(Lt(xs[s], r_var(i, s)) for s in range(n))) for i in range(m)))


def step_term(xs: Sequence[Term], ys: Sequence[Term], m: int, mult: Term | None, bound: int | None,
              sequential: bool = False) -> Term:
    """
    One transition ``xs -> ys``: a terminal self-loop, or one reaction fired
    ``mult`` times (``mult=None`` means a single firing).

    The multiplicity is limited by ``x_s >= n (r_s - p_s)``; with ``sequential``
    by ``x_s >= n r_s - (n - 1) p_s`` instead, so every firing is enabled.
    """
    n = len(xs)
    loop = And(terminal(xs, m), *(Eq(ys[s], xs[s]) for s in range(n)))
    fires = []
    for i in range(m):
        conds = []
        for s in range(n):
            r, p = r_var(i, s), p_var(i, s)
            conds.append(Ge(xs[s], r))
            if mult is None:
                conds.append(Eq(ys[s], Sum([xs[s], Sub(p, r)])))
            else:
                nr, np_ = times_small(mult, r), times_small(mult, p)
                if sequential:
                    conds.append(Ge(xs[s], Sum([Sub(nr, np_), p])))
                else:
                    conds.append(Ge(xs[s], Sub(nr, np_)))
                conds.append(Eq(ys[s], Sum([xs[s], Sub(np_, nr)])))
        fires.append(And(*conds))
    if mult is None:
        return Or(loop, *fires)
    return Or(loop, And(Ge(mult, 1), ("<=", mult, bound), Or(*fires)))


def encode_trajectory(problem: SynthesisProblem, index: int) -> Trajectory:
    if not 0 <= index < len(problem.predicates):
        raise EncodingError(f"no predicate with index {index}")
    phi = problem.predicates[index]
    n, m, k = problem.n_species, problem.n_reactions, problem.max_steps
    bound = pr.total_bound(phi.initial, problem.species)
    if problem.stutter and bound is None:
        raise EncodingError(
            f"initial predicate {pr.to_text(phi.initial)!r} does not bound the total "
            "molecule count, which stutter multiplicities require"
        )
    path = [[x_var(index, j, s) for s in range(n)] for j in range(k + 1)]
    names0 = dict(zip(problem.species, path[0]))
    namesk = dict(zip(problem.species, path[k]))
    steps = []
    for j in range(k):
        mult = n_var(index, j) if problem.stutter else None
        steps.append(step_term(path[j], path[j + 1], m, mult, bound, problem.sequential))
    return Trajectory(
        index=index,
        bound=bound,
        initial=predicate_term(phi.initial, names0),
        steps=tuple(steps),
        final=And(predicate_term(phi.final, namesk), terminal(path[k], m)),
        nonneg=And(*(Ge(v, 0) for row in path for v in row)),
    )


def reaction_equals(i: int, crn_reaction, n: int) -> Term:
    return And(*(Eq(r_var(i, s), crn_reaction.reactants[s]) for s in range(n)),
               *(Eq(p_var(i, s), crn_reaction.products[s]) for s in range(n)))


def encode_uniqueness(previous: Sequence[Crn], problem: SynthesisProblem) -> list[Term]:
    """One ``DifferentFrom`` per earlier solution: not every symbolic reaction occurs in it."""
    out = []
    m, n = problem.n_reactions, problem.n_species
    for crn in previous:
        if crn.num_reactions != m or crn.num_species != n:
            raise EncodingError("previous solution has a different shape")
        out.append(Not(And(*(
            Or(*(reaction_equals(i, rxn, n) for rxn in crn.reactions)) for i in range(m)
        ))))
    return out


def encode(problem: SynthesisProblem, previous: Sequence[Crn] = ()) -> SymbolicEncoding:
    decls = stoichiometry_vars(problem.n_reactions, problem.n_species)
    for i in range(len(problem.predicates)):
        decls += path_declarations(problem, i)
    return SymbolicEncoding(
        problem=problem,
        declarations=tuple(decls),
        structure=tuple(encode_structure(problem)),
        trajectories=tuple(encode_trajectory(problem, i) for i in range(len(problem.predicates))),
        uniqueness=tuple(encode_uniqueness(previous, problem)),
    )


def path_declarations(problem: SynthesisProblem, index: int) -> list[str]:
    n, k = problem.n_species, problem.max_steps
    decls = [x_var(index, j, s) for j in range(k + 1) for s in range(n)]
    if problem.stutter:
        decls += [n_var(index, j) for j in range(k)]
    return decls


def path_commands(enc: SymbolicEncoding, index: int) -> list[str]:
    """Declarations and assertions for one path predicate."""
    traj = enc.trajectories[index]
    lines = [f"; path {index}: {enc.problem.predicates[index]}"]
    lines += [f"(declare-fun {v} () Int)" for v in path_declarations(enc.problem, index)]
    lines += [f"(assert {to_smt(t)})" for t in traj.terms()]
    return lines


def emit_smtlib(enc: SymbolicEncoding, query: bool = True, paths: Sequence[int] | None = None) -> str:
    """
    Deterministic SMT-LIB 2 script; ``query`` appends check-sat and get-value.
    ``paths`` limits the path predicates included (default: all of them).
    """
    prob = enc.problem
    paths = range(len(enc.trajectories)) if paths is None else paths
    lines = [
        f"; bimolecular CRN synthesis N={prob.n_species} M={prob.n_reactions} "
        f"K={prob.max_steps} stutter={'yes' if prob.stutter else 'no'}"
        f"{' sequential' if prob.stutter and prob.sequential else ''}",
        "(set-option :produce-models true)",
        f"(set-logic {enc.logic})",
    ]
    lines += [f"(declare-fun {v} () Int)"
              for v in stoichiometry_vars(prob.n_reactions, prob.n_species)]
    lines.append("; structure")
    for label, t in enc.structure:
        lines.append(f"(assert {to_smt(t)}) ; {label}")
    for i in paths:
        lines += path_commands(enc, i)
    if enc.uniqueness:
        lines.append("; uniqueness")
        lines += [f"(assert {to_smt(t)})" for t in enc.uniqueness]
    if query:
        lines += ["(check-sat)", get_value_command(prob)]
    return "\n".join(lines) + "\n"


def get_value_command(problem: SynthesisProblem) -> str:
    return f"(get-value ({' '.join(stoichiometry_vars(problem.n_reactions, problem.n_species))}))"


def model_to_crn(values: dict[str, int], problem: SynthesisProblem) -> Crn:
    m, n = problem.n_reactions, problem.n_species
    try:
        reactants = [[int(values[r_var(i, s)]) for s in range(n)] for i in range(m)]
        products = [[int(values[p_var(i, s)]) for s in range(n)] for i in range(m)]
    except KeyError as exc:
        raise EncodingError(f"model is missing {exc.args[0]}") from None
    return Crn.from_matrices(problem.species, reactants, products,
                             inputs=problem.inputs, outputs=problem.outputs).canonical()
