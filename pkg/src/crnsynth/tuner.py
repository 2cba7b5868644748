"""
Metropolis-Hastings search over reaction rates.

The objective is the mean correctness probability over all path predicates
at a fixed time.  Likelihood is ``exp(beta * objective)``, so a proposal is
accepted with probability ``min(1, exp(beta * delta))``.  Proposals are
Gaussian steps in log-rate space, reflected back into the rate bounds, and
alternate between all-rates and single-rate moves.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .crn import Crn
from .ctmc import DEFAULT_TFINAL, DEFAULT_TOL, CompiledPredicate
from .predicates import PathPredicate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParameterSpace:
    dimension: int
    lo: float = 0.01
    hi: float = 100.0

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("rate bounds need 0 < lo < hi")
        if self.dimension < 1:
            raise ValueError("need at least one rate")

    def contains(self, rates: Sequence[float]) -> bool:
        return len(rates) == self.dimension and all(self.lo <= k <= self.hi for k in rates)

    def reflect(self, log_rates: np.ndarray) -> np.ndarray:
        """Fold log-rates back into [log lo, log hi] by mirror reflection."""
        a, b = math.log(self.lo), math.log(self.hi)
        width = b - a
        y = np.mod(log_rates - a, 2 * width)
        y = np.where(y > width, 2 * width - y, y)
        return a + y


@dataclass(frozen=True)
class TuneConfig:
    burn_in: int = 20
    samples: int = 20
    proposal_sd: float = 0.5
    seed: int = 0
    t_final: float = DEFAULT_TFINAL
    tol: float = DEFAULT_TOL
    beta: float = 50.0
    lo: float = 0.01
    hi: float = 100.0
    jobs: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 0:
            raise ValueError("burn-in and sample counts must be nonnegative")
        if not self.proposal_sd > 0:
            raise ValueError("proposal standard deviation must be positive")

    @property
    def iterations(self) -> int:
        return self.burn_in + self.samples


@dataclass
class TraceEntry:
    iteration: int
    rates: tuple[float, ...]
    objective: float
    accepted: bool


@dataclass
class TuneResult:
    best_rates: tuple[float, ...]
    best_objective: float
    initial_objective: float
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        steps = [e for e in self.trace if e.iteration > 0]
        return sum(e.accepted for e in steps) / len(steps) if steps else 0.0

    def best_so_far(self) -> list[float]:
        out, best = [], -math.inf
        for e in self.trace:
            best = max(best, e.objective)
            out.append(best)
        return out


class Objective:
    """Average correctness probability of one CRN over a list of path predicates."""

    def __init__(self, crn: Crn, predicates: Sequence[PathPredicate], t_final: float = DEFAULT_TFINAL,
                 tol: float = DEFAULT_TOL, jobs: int = 1, terminal_only: bool = False):
        if not predicates:
            raise ValueError("need at least one predicate")
        self.crn = crn
        self.t_final = t_final
        self.tol = tol
        self.jobs = jobs
        self.compiled = [CompiledPredicate(crn, phi, terminal_only=terminal_only) for phi in predicates]

    def per_predicate(self, rates: Sequence[float]) -> list[float]:
        rates = tuple(float(k) for k in rates)

        def one(c):
            return c.probability(rates, self.t_final, self.tol)

        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as pool:
                return list(pool.map(one, self.compiled))
        return [one(c) for c in self.compiled]

    def __call__(self, rates: Sequence[float]) -> float:
        vals = self.per_predicate(rates)
        return float(min(1.0, max(0.0, sum(vals) / len(vals))))


def propose(rates: np.ndarray, rng: np.random.Generator, sd: float, space: ParameterSpace,
            single_site: bool) -> np.ndarray:
    logk = np.log(rates)
    if single_site:
        step = np.zeros_like(logk)
        i = rng.integers(len(logk))
        step[i] = rng.normal(0.0, sd)
    else:
        step = rng.normal(0.0, sd, size=len(logk))
    return np.exp(space.reflect(logk + step))


def mh_step(rates: np.ndarray, value: float, objective, rng: np.random.Generator, *, sd: float,
            space: ParameterSpace, beta: float, single_site: bool = False):
    """One proposal and accept/reject.  Returns (rates, value, proposal, proposal value, accepted)."""
    if sd == 0:
        cand = rates.copy()
    else:
        cand = propose(rates, rng, sd, space, single_site)
    cand_value = objective(cand)
    delta = beta * (cand_value - value)
    accepted = delta >= 0 or rng.random() < math.exp(delta)
    if accepted:
        return cand, cand_value, cand, cand_value, True
    return rates, value, cand, cand_value, False


def run(crn: Crn, predicates: Sequence[PathPredicate] | Objective, config: TuneConfig,
        initial: Sequence[float] | None = None) -> TuneResult:
    """Run ``burn_in + samples`` MH steps from all-1.0 rates (or ``initial``)."""
    objective = predicates if isinstance(predicates, Objective) else Objective(
        crn, predicates, config.t_final, config.tol, config.jobs)
    space = ParameterSpace(crn.num_reactions, config.lo, config.hi)
    rates = np.ones(crn.num_reactions) if initial is None else np.asarray(initial, dtype=float)
    if not space.contains(rates):
        raise ValueError(f"initial rates {rates} outside [{config.lo}, {config.hi}]")
    rng = np.random.default_rng(config.seed)
    value = objective(rates)
    result = TuneResult(tuple(rates), value, value, [TraceEntry(0, tuple(rates), value, True)])
    for it in range(1, config.iterations + 1):
        rates, value, cand, cand_value, ok = mh_step(
            rates, value, objective, rng, sd=config.proposal_sd, space=space,
            beta=config.beta, single_site=(it % 2 == 0))
        result.trace.append(TraceEntry(it, tuple(float(k) for k in cand), cand_value, ok))
        if cand_value > result.best_objective:
            result.best_objective = cand_value
            result.best_rates = tuple(float(k) for k in cand)
    log.info("tuned %s: %.4f -> %.4f (acceptance %.2f)", crn, result.initial_objective,
             result.best_objective, result.acceptance_rate)
    return result


@dataclass
class RankRow:
    crn_id: int
    crn: Crn
    baseline: float
    short: float
    short_rates: tuple[float, ...]
    long: float | None = None
    long_rates: tuple[float, ...] | None = None
    traces: dict[str, list[TraceEntry]] = field(default_factory=dict)

    @property
    def final(self) -> float:
        return self.long if self.long is not None else self.short

    @property
    def best_rates(self) -> tuple[float, ...]:
        return self.long_rates if self.long_rates is not None else self.short_rates


def rank_candidates(crns: Sequence[Crn], predicates: Sequence[PathPredicate], short: TuneConfig,
                    top: int = 10, long: TuneConfig | None = None, gate: float | None = 0.5,
                    ids: Sequence[int] | None = None) -> list[RankRow]:
    """
    Short-tune every candidate, then long-tune the ``top`` best whose short
    objective reaches ``gate`` (``None`` disables the gate).  The long run starts
    from the short run's best rates.  Rows are sorted by final objective,
    ties broken by candidate id.
    """
    if not crns:
        raise ValueError("need at least one candidate")
    ids = list(range(len(crns))) if ids is None else list(ids)
    rows = []
    for cid, crn in zip(ids, crns):
        obj = Objective(crn, predicates, short.t_final, short.tol, short.jobs)
        res = run(crn, obj, short)
        rows.append(RankRow(cid, crn, res.initial_objective, res.best_objective, res.best_rates,
                            traces={"short": res.trace}))
    rows.sort(key=lambda r: (-r.short, r.crn_id))
    if long is not None:
        for row in rows[:top]:
            if gate is not None and row.short < gate:
                continue
            obj = Objective(row.crn, predicates, long.t_final, long.tol, long.jobs)
            res = run(row.crn, obj, long, initial=row.short_rates)
            row.long, row.long_rates = res.best_objective, res.best_rates
            row.traces["long"] = res.trace
    rows.sort(key=lambda r: (-r.final, r.crn_id))
    return rows
