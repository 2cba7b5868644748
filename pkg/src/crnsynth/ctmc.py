"""
Exact stochastic semantics of a CRN over its reachable states.

The reachable state space is built once per (network structure, initial
predicate); generators for different rate vectors reuse the stored
transition list, which is what makes rate tuning affordable.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.stats import poisson

from .crn import Crn, State, enabled, fire
from .predicates import Expr, PathPredicate, compile_predicate, satisfying_states

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_TFINAL = 100.0
MAX_STATES = 2_000_000
DENSE_LIMIT = 400
UNIFORMIZATION_LIMIT = 200_000


class SpecificationError(ValueError):
    pass


class CapacityError(RuntimeError):
    pass


class NumericalError(ArithmeticError):
    pass


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class StateSpace:
    """Reachable states with their transitions, independent of rate values."""
    states: tuple[State, ...]
    index: dict
    initial: tuple[int, ...]
    terminal: tuple[int, ...]
    # one row per (source, reaction) pair with a nonzero propensity
    src: np.ndarray
    dst: np.ndarray
    reaction: np.ndarray
    coeff: np.ndarray

    def __len__(self):
        return len(self.states)

    def mask(self, expr: Expr, species: Sequence[str]) -> np.ndarray:
        f = compile_predicate(expr, species)
        return np.fromiter((bool(f(x)) for x in self.states), dtype=bool, count=len(self.states))

    def terminal_mask(self) -> np.ndarray:
        m = np.zeros(len(self.states), dtype=bool)
        m[list(self.terminal)] = True
        return m

    def uniform_initial(self) -> np.ndarray:
        p = np.zeros(len(self.states))
        p[list(self.initial)] = 1.0 / len(self.initial)
        return p


def _combinatorial(x: State, reactants: Sequence[int]) -> float:
    value = 1.0
    for xs, rs in zip(x, reactants):
        if rs == 2:
            value *= xs * (xs - 1) / 2
        elif rs == 1:
            value *= xs
    return value


def build_state_space(crn: Crn, initial: Expr | Sequence[State], total_bound: int | None = None,
                      max_states: int = MAX_STATES) -> StateSpace:
    """Breadth-first closure under single firings of the initial states."""
    if isinstance(initial, (list, tuple)) and (not initial or isinstance(initial[0], tuple)):
        starts = [tuple(int(v) for v in x) for x in initial]
    else:
        starts = satisfying_states(initial, crn.species, total_bound)
    if not starts:
        raise SpecificationError("no initial state satisfies the predicate")
    index: dict[State, int] = {}
    states: list[State] = []
    for x in starts:
        if x not in index:
            index[x] = len(states)
            states.append(x)
    queue = deque(states)
    src, dst, rxn, coeff = [], [], [], []
    terminal = []
    while queue:
        x = queue.popleft()
        i = index[x]
        any_enabled = False
        for r, reaction in enumerate(crn.reactions):
            if not enabled(crn, r, x):
                continue
            any_enabled = True
            y = fire(crn, r, x)
            j = index.get(y)
            if j is None:
                if len(states) >= max_states:
                    raise CapacityError(f"state space exceeds {max_states} states")
                j = index[y] = len(states)
                states.append(y)
                queue.append(y)
            src.append(i)
            dst.append(j)
            rxn.append(r)
            coeff.append(_combinatorial(x, reaction.reactants))
        if not any_enabled:
            terminal.append(i)
    return StateSpace(
        states=tuple(states),
        index=index,
        initial=tuple(index[x] for x in starts),
        terminal=tuple(sorted(terminal)),
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        reaction=np.asarray(rxn, dtype=np.int64),
        coeff=np.asarray(coeff, dtype=float),
    )


def build_generator(space: StateSpace, rates: Sequence[float], volume: float = 1.0) -> sp.csr_matrix:
    """Sparse generator: summed propensities off the diagonal, rows summing to zero."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
        raise SpecificationError("rates must be positive and finite")
    if not volume > 0:
        raise SpecificationError("volume must be positive")
    n = len(space)
    vals = rates[space.reaction] * space.coeff / volume
    off = sp.coo_matrix((vals, (space.src, space.dst)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    q = (off - sp.diags(exit_rates)).tocsr()
    q.sum_duplicates()
    return q


# -- transient analysis ---------------------------------------------------------------

def _poisson_window(lam_t: float, tol: float) -> tuple[int, int]:
    if lam_t == 0:
        return 0, 0
    left = int(poisson.ppf(tol / 2, lam_t)) if lam_t > 25 else 0
    right = int(poisson.isf(tol / 2, lam_t)) + 1
    return max(0, left), max(right, left)


def _uniformize(q: sp.csr_matrix, p0: np.ndarray, t: float, tol: float) -> np.ndarray:
    lam = float(-q.diagonal().min()) * 1.02
    if lam == 0 or t == 0:
        return p0.copy()
    lam_t = lam * t
    left, right = _poisson_window(lam_t, tol)
    pt = (sp.identity(q.shape[0], format="csr") + q / lam).T.tocsr()
    weights = poisson.pmf(np.arange(left, right + 1), lam_t)
    v = p0.copy()
    for _ in range(left):
        v = pt @ v
    out = weights[0] * v
    for k in range(1, len(weights)):
        nv = pt @ v
        out += weights[k] * nv
        if np.abs(nv - v).sum() < tol * 1e-3:
            # the embedded chain has converged; the remaining Poisson mass lands on nv
            out += weights[k + 1:].sum() * nv
            break
        v = nv
    return out


def integrate_cme(q: sp.csr_matrix, p0: np.ndarray, t: float, tol: float = DEFAULT_TOL,
                  method: str = "auto") -> np.ndarray:
    """
    Transient distribution ``p0 exp(Q t)``.

    ``auto`` uses a dense matrix exponential for small chains, uniformization
    while the number of Poisson terms stays moderate, and an implicit BDF
    integrator otherwise.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    p0 = np.asarray(p0, dtype=float)
    if t == 0:
        return p0.copy()
    n = q.shape[0]
    lam_t = float(-q.diagonal().min()) * t if n else 0.0
    if method == "auto":
        if n <= DENSE_LIMIT:
            method = "expm"
        elif lam_t <= UNIFORMIZATION_LIMIT:
            method = "uniformization"
        else:
            method = "bdf"
    if method == "expm":
        out = scipy.linalg.expm(q.T.toarray() * t) @ p0
    elif method == "uniformization":
        out = _uniformize(q, p0, t, tol)
    elif method == "bdf":
        qt = q.T.tocsr()
        sol = solve_ivp(lambda _t, y: qt @ y, (0.0, t), p0, method="BDF", jac=qt,
                        rtol=min(tol, 1e-6), atol=tol)
        if not sol.success:
            raise NumericalError(f"BDF integration failed: {sol.message}")
        out = sol.y[:, -1]
    else:
        raise ValueError(f"unknown CME method {method!r}")
    return _clean(out, method, tol)


def _clean(p: np.ndarray, method: str, tol: float) -> np.ndarray:
    """Clamp round-off negatives and renormalize; real mass drift is an error."""
    if not np.all(np.isfinite(p)):
        raise NumericalError(f"non-finite probabilities from {method}")
    low = p.min(initial=0.0)
    allowed = max(1e-9, 2 * tol)
    if low < -allowed:
        raise NumericalError(f"negative probability {low:.3g} from {method}")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > allowed:
        raise NumericalError(f"probability mass drifted to {total!r} under {method}")
    return p / total


def transient(q: sp.csr_matrix, p0: np.ndarray, times: Sequence[float], tol: float = DEFAULT_TOL,
              method: str = "auto") -> np.ndarray:
    """Distributions at increasing output times, stepping from one to the next."""
    out = []
    p, last = np.asarray(p0, dtype=float), 0.0
    for t in times:
        if t < last:
            raise ValueError("output times must be nondecreasing")
        p = integrate_cme(q, p, t - last, tol, method)
        out.append(p)
        last = t
    return np.array(out)


# -- path-predicate probability --------------------------------------------------------

class CompiledPredicate:
    """State space, initial distribution and target mask for one path predicate."""

    def __init__(self, crn: Crn, phi: PathPredicate, total_bound: int | None = None,
                 terminal_only: bool = False, max_states: int = MAX_STATES):
        self.phi = phi
        self.space = build_state_space(crn, phi.initial, total_bound, max_states)
        target = self.space.mask(phi.final, crn.species)
        if terminal_only:
            target &= self.space.terminal_mask()
        self.target = target
        self.p0 = self.space.uniform_initial()

    def probability(self, rates: Sequence[float], t: float = DEFAULT_TFINAL,
                    tol: float = DEFAULT_TOL, volume: float = 1.0) -> float:
        if not self.target.any():
            return 0.0
        q = build_generator(self.space, rates, volume)
        pt = integrate_cme(q, self.p0, t, tol)
        return float(min(1.0, pt[self.target].sum()))


def probability_of(crn: Crn, phi: PathPredicate, t: float = DEFAULT_TFINAL, rates=None,
                   total_bound: int | None = None, tol: float = DEFAULT_TOL,
                   terminal_only: bool = False) -> float:
    """Mass on final-predicate states at time ``t`` from a uniform start over initial states."""
    rates = crn.rates if rates is None else rates
    return CompiledPredicate(crn, phi, total_bound, terminal_only).probability(rates, t, tol)


def average_probability(crn: Crn, predicates: Sequence[PathPredicate], t: float = DEFAULT_TFINAL,
                        rates=None, total_bound: int | None = None, tol: float = DEFAULT_TOL,
                        terminal_only: bool = False) -> float:
    if not predicates:
        raise ValueError("need at least one predicate")
    vals = [probability_of(crn, phi, t, rates, total_bound, tol, terminal_only) for phi in predicates]
    return float(np.mean(vals))


# -- hitting times ---------------------------------------------------------------------

def _trapped(space: StateSpace) -> list[int]:
    """States that cannot reach any terminal state."""
    n = len(space)
    rev = [[] for _ in range(n)]
    for a, b in zip(space.src.tolist(), space.dst.tolist()):
        rev[b].append(a)
    seen = set(space.terminal)
    queue = deque(space.terminal)
    while queue:
        j = queue.popleft()
        for i in rev[j]:
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return [i for i in range(n) if i not in seen]


def expected_hitting_time(q: sp.csr_matrix, space: StateSpace, scale_by_total: bool = False) -> np.ndarray:
    """
    Expected time to reach a terminal state from every state: solve
    ``-W tau = 1`` with ``W`` the generator restricted to non-terminal states.
    """
    trapped = _trapped(space)
    if trapped:
        example = space.states[trapped[0]]
        raise StructureError(
            f"{len(trapped)} states never reach a terminal state, e.g. {example}"
        )
    n = len(space)
    tau = np.zeros(n)
    live = np.setdiff1d(np.arange(n), np.asarray(space.terminal, dtype=np.int64))
    if len(live):
        w = (-q[live][:, live]).tocsc()
        ones = np.ones(len(live))
        lu = spla.splu(w)
        sol = lu.solve(ones)
        for _ in range(3):
            resid = ones - w @ sol
            if np.abs(resid).max() <= 1e-9 * max(1.0, np.abs(sol).max()) * 1e-3:
                break
            sol += lu.solve(resid)
        tau[live] = sol
    if scale_by_total:
        totals = np.fromiter((sum(x) for x in space.states), dtype=float, count=n)
        tau = tau * totals
    return tau


def hitting_time_from(crn: Crn, start: State, rates=None, volume: float = 1.0,
                      scale_by_total: bool = False) -> float:
    space = build_state_space(crn, [tuple(start)])
    q = build_generator(space, crn.rates if rates is None else rates, volume)
    return float(expected_hitting_time(q, space, scale_by_total)[space.index[tuple(start)]])
