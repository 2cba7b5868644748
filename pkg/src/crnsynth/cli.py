"""
Command-line front end.

Every command writes its tables into ``--out`` together with a
``manifest.json`` describing the run; ``crnsynth replay manifest.json``
re-executes a recorded run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import ctmc
from .crn import Crn, CrnError, dump_crns, load_crns
from .oracle import OracleBoundsError, exhaustive_synthesis
from .predicates import PredicateError, parse as parse_expr
from .specs import SpecError, load_benchmark
from .synthesis import (TIMEOUT, BackendError, Builtin, EncodingError, SmtProcess,
                        SolverTimeout, SynthesisProblem, enumerate_solutions)
from .tuner import TuneConfig, rank_candidates

log = logging.getLogger("crnsynth")

EXIT_OK, EXIT_USAGE, EXIT_TIMEOUT, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------------

def fmt(value) -> str:
    """Round-trip text for floats, plain text for everything else."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, args: argparse.Namespace, argv: Sequence[str], started: datetime,
                   wall: float, extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    inputs = {}
    for key in ("crn", "spec"):
        value = params.get(key)
        if value and Path(value).is_file():
            inputs[value] = digest(value)
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "parameters": params,
        "inputs": inputs,
        "version": __version__,
        "seeds": {"seed": params["seed"]} if "seed" in params else {},
        "started": started.isoformat(),
        "wallSeconds": wall,
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


# -- argument helpers ---------------------------------------------------------------

def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return values


def int_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        lo_i, hi_i = int(lo), int(hi if sep else lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if lo_i < 1 or hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return range(lo_i, hi_i + 1)


def load_one(path: str, index: int, rates: list[float] | None) -> Crn:
    crns = load_crns(path)
    if not 1 <= index <= len(crns):
        raise UsageError(f"{path} holds {len(crns)} CRN(s); index {index} is out of range")
    crn = crns[index - 1]
    return crn.with_rates(rates) if rates is not None else crn


def make_backend(args) -> Builtin | SmtProcess:
    timeout = args.timeout
    if args.backend == "builtin":
        return Builtin(timeout=timeout)
    return SmtProcess(args.solver, timeout=timeout)


def build_problem(args, steps: int) -> SynthesisProblem:
    bench = load_benchmark(args.spec, args.species)
    return SynthesisProblem(bench.n_species, args.reactions, steps, bench.predicates(),
                            bench.inputs, bench.outputs, stutter=not args.no_stutter,
                            sequential=args.sequential)


# -- commands ------------------------------------------------------------------------

def cmd_synth(args, out: Path) -> tuple[int, dict]:
    problem = build_problem(args, args.steps)
    lazy = {"auto": None, "lazy": True, "eager": False}[args.paths]
    outcome = enumerate_solutions(problem, make_backend(args), args.max_solutions, args.timeout,
                                  dump_dir=args.dump_smt, lazy=lazy)
    meta = [{"index": i + 1, "solveSeconds": s, "elapsedSeconds": e}
            for i, (s, e) in enumerate(zip(outcome.solve_seconds, outcome.elapsed))]
    dump_crns(outcome.solutions, out / "solutions.json", meta)
    write_csv(out / "times.csv", ["solution", "solveSeconds", "elapsedSeconds"],
              ([m["index"], m["solveSeconds"], m["elapsedSeconds"]] for m in meta))
    print(f"{len(outcome.solutions)} solution(s), status {outcome.status}, "
          f"{outcome.wall_seconds:.2f}s")
    code = EXIT_TIMEOUT if outcome.status == TIMEOUT else EXIT_OK
    return code, {"status": outcome.status, "solutions": len(outcome.solutions)}


def cmd_sweep_k(args, out: Path) -> tuple[int, dict]:
    if args.max_steps < args.steps:
        raise UsageError("--max-steps must be at least --steps")
    backend = make_backend(args)
    ks = list(range(args.steps, args.max_steps + 1))

    def one(k):
        return enumerate_solutions(build_problem(args, k), backend, args.max_solutions, args.timeout)

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(one, ks))
    else:
        outcomes = [one(k) for k in ks]
    write_csv(out / "sweep.csv", ["K", "solutions", "wallSeconds", "status"],
              ([k, len(o), o.wall_seconds, o.status] for k, o in zip(ks, outcomes)))
    for k, o in zip(ks, outcomes):
        print(f"K={k}: {len(o)} solution(s) ({o.status})")
    timed_out = any(o.status == TIMEOUT for o in outcomes)
    return (EXIT_TIMEOUT if timed_out else EXIT_OK), {"statuses": {k: o.status for k, o in zip(ks, outcomes)}}


def _trace_rows(trace):
    for e in trace:
        yield [e.iteration, *e.rates, e.objective, e.accepted]


def cmd_tune(args, out: Path) -> tuple[int, dict]:
    crns = load_crns(args.crn)
    if not crns:
        raise UsageError(f"{args.crn} holds no CRNs")
    bench = load_benchmark(args.spec, crns[0].num_species)
    preds = bench.predicates()
    short = TuneConfig(burn_in=args.burnin, samples=args.samples, proposal_sd=args.proposal_sd,
                       seed=args.seed, t_final=args.tfinal, tol=args.tol, beta=args.beta,
                       jobs=args.jobs)
    long = None
    if args.long_burnin is not None or args.long_samples is not None:
        long = TuneConfig(burn_in=args.long_burnin or 0, samples=args.long_samples or 0,
                          proposal_sd=args.proposal_sd, seed=args.seed, t_final=args.tfinal,
                          tol=args.tol, beta=args.beta, jobs=args.jobs)
    ids = list(range(1, len(crns) + 1))
    rows = rank_candidates(crns, preds, short, top=args.top, long=long,
                           gate=None if args.gate < 0 else args.gate, ids=ids)

    header = ["rank", "crnId", "baseline", "short", "long", "final"]
    table = [[i + 1, r.crn_id, r.baseline, r.short, "" if r.long is None else r.long, r.final]
             for i, r in enumerate(rows)]
    write_csv(out / "report.csv", header, table)
    report = [{"rank": i + 1, "crnId": r.crn_id, "crn": str(r.crn), "baseline": r.baseline,
               "short": r.short, "long": r.long, "final": r.final, "bestRates": list(r.best_rates)}
              for i, r in enumerate(rows)]
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    dump_crns([r.crn.with_rates(r.best_rates) for r in rows], out / "tuned.json",
              [{"crnId": r.crn_id, "objective": r.final} for r in rows])
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    for r in rows:
        m = r.crn.num_reactions
        head = ["iteration", *(f"k_{j + 1}" for j in range(m)), "objective", "accepted"]
        for phase, trace in r.traces.items():
            write_csv(trace_dir / f"trace_{r.crn_id}_{phase}.csv", head, _trace_rows(trace))
    for i, r in enumerate(rows[:10]):
        print(f"#{i + 1} crn {r.crn_id}: {r.baseline:.4f} -> {r.final:.4f}  {r.crn}")
    return EXIT_OK, {}


def cmd_heatmap(args, out: Path) -> tuple[int, dict]:
    crn = load_one(args.crn, args.index, args.rates)
    bench = load_benchmark(args.spec, crn.num_species)
    rows = []
    for (a, b), phi in zip(bench.grid, bench.predicates()):
        p = ctmc.probability_of(crn, phi, args.tfinal, tol=args.tol, terminal_only=args.terminal_only)
        rows.append([a, b, p])
    write_csv(out / "heatmap.csv", ["a", "b", "probability"], rows)
    mean = sum(r[2] for r in rows) / len(rows)
    print(f"mean probability {mean:.6f} over {len(rows)} inputs")
    return EXIT_OK, {"mean": mean}


def start_state(crn: Crn, n: int, fraction: float) -> tuple[int, ...]:
    a = math.floor(fraction * n + 0.5)
    x = [0] * crn.num_species
    x[0], x[1] = a, n - a
    return tuple(x)


def config_label(fraction: float) -> str:
    """``0.6`` becomes ``"0.6n/0.4n"``: the split of n molecules between the first two species."""
    return f"{fraction:g}n/{round(1 - fraction, 12):g}n"


def cmd_hitting(args, out: Path) -> tuple[int, dict]:
    crn = load_one(args.crn, args.index, args.rates)
    if crn.num_species < 2:
        raise UsageError("hitting times need at least two species")
    rows = []
    for n in args.n_range:
        for f in args.fractions:
            x = start_state(crn, n, f)
            tau = ctmc.hitting_time_from(crn, x, volume=args.volume, scale_by_total=not args.unscaled)
            rows.append([n, config_label(f), tau])
    write_csv(out / "hitting.csv", ["n", "initialConfigLabel", "expectedTime"], rows)
    print(f"{len(rows)} expected hitting times written")
    return EXIT_OK, {}


def parse_state(crn: Crn, text: str) -> tuple[int, ...]:
    counts = {}
    for part in text.split(","):
        name, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"expected NAME=COUNT in --state, got {part!r}")
        counts[name.strip()] = int(value)
    try:
        return crn.state(**counts)
    except CrnError as exc:
        raise UsageError(str(exc)) from None


def cmd_transient(args, out: Path) -> tuple[int, dict]:
    crn = load_one(args.crn, args.index, args.rates)
    x0 = parse_state(crn, args.state)
    space = ctmc.build_state_space(crn, [x0])
    q = ctmc.build_generator(space, crn.rates, args.volume)
    times = np.linspace(0.0, args.tfinal, args.points)
    dist = ctmc.transient(q, space.uniform_initial(), times, args.tol)
    keep = np.ones(len(space), dtype=bool)
    if args.final:
        keep = space.mask(parse_expr(args.final), crn.species)
    idx = np.flatnonzero(keep)
    write_csv(out / "transient.csv", ["time", "stateIndex", "probability"],
              ([t, int(i), p[i]] for t, p in zip(times, dist) for i in idx))
    write_csv(out / "states.csv", ["stateIndex", *crn.species],
              ([i, *space.states[i]] for i in range(len(space))))
    print(f"{len(space)} states, {len(times)} output times")
    return EXIT_OK, {"states": len(space)}


def cmd_cme_bench(args, out: Path) -> tuple[int, dict]:
    crn = load_one(args.crn, args.index, args.rates)
    rows = []
    for n in args.n_list:
        x0 = start_state(crn, n, 0.6)
        t0 = time.perf_counter()
        space = ctmc.build_state_space(crn, [x0])
        q = ctmc.build_generator(space, crn.rates)
        t_end = 100.0 / n
        ctmc.transient(q, space.uniform_initial(), np.linspace(0.0, t_end, args.points), args.tol)
        wall = time.perf_counter() - t0
        rows.append([n, len(space), t_end, wall])
        print(f"n={n}: {len(space)} states, {wall:.3f}s")
    write_csv(out / "cme_bench.csv", ["n", "stateCount", "tEnd", "wallSeconds"], rows)
    return EXIT_OK, {}


def cmd_oracle(args, out: Path) -> tuple[int, dict]:
    problem = build_problem(args, args.steps)
    found = exhaustive_synthesis(problem, args.max_total)
    dump_crns(found, out / "oracle.json")
    print(f"{len(found)} CRN(s) satisfy every predicate")
    return EXIT_OK, {"solutions": len(found)}


# -- parser ------------------------------------------------------------------------

def _synthesis_flags(p: argparse.ArgumentParser, steps_required: bool = True) -> None:
    p.add_argument("--spec", required=True, help="am, div or a JSON spec file")
    p.add_argument("--species", type=positive_int, help="number of species N")
    p.add_argument("--reactions", type=positive_int, required=True, help="number of reactions M")
    p.add_argument("--steps", type=positive_int, required=steps_required, default=1,
                   help="path length bound K")
    p.add_argument("--no-stutter", action="store_true", help="one firing per step")
    p.add_argument("--sequential", action="store_true",
                   help="stutter steps require every one of the n firings to be enabled")


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("exec", "builtin"), default="exec")
    p.add_argument("--solver", default="z3", help="SMT-LIB 2 solver executable")
    p.add_argument("--max-solutions", type=positive_int)
    p.add_argument("--timeout", type=float, default=7200.0, help="seconds")


def _crn_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--crn", required=True, help="CRN JSON file")
    p.add_argument("--index", type=positive_int, default=1,
                   help="which CRN of the file, counting from 1 as in solutions.json")
    p.add_argument("--rates", type=float_list, help="override rates, comma separated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crnsynth", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "enumerate CRNs satisfying a specification")
    _synthesis_flags(p)
    _backend_flags(p)
    p.add_argument("--dump-smt", metavar="DIR", help="write each SMT-LIB query to DIR")
    p.add_argument("--paths", choices=("auto", "lazy", "eager"), default="auto",
                   help="add path constraints on demand (lazy) or up front (eager)")

    p = add("sweep-k", cmd_sweep_k, "solution counts for a range of K")
    _synthesis_flags(p)
    _backend_flags(p)
    p.add_argument("--max-steps", type=positive_int, required=True)
    p.add_argument("--jobs", type=positive_int, default=1)

    p = add("tune", cmd_tune, "rank candidates by tuned correctness probability")
    p.add_argument("--crn", required=True, help="CRN JSON file (one or many)")
    p.add_argument("--spec", required=True)
    p.add_argument("--burnin", type=nonneg_int, default=20)
    p.add_argument("--samples", type=nonneg_int, default=20)
    p.add_argument("--long-burnin", type=nonneg_int)
    p.add_argument("--long-samples", type=nonneg_int)
    p.add_argument("--top", type=positive_int, default=10)
    p.add_argument("--gate", type=float, default=0.5, help="negative disables the gate")
    p.add_argument("--tfinal", type=float, default=ctmc.DEFAULT_TFINAL)
    p.add_argument("--tol", type=float, default=ctmc.DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=50.0)
    p.add_argument("--proposal-sd", type=float, default=0.5)
    p.add_argument("--jobs", type=positive_int, default=1)

    p = add("heatmap", cmd_heatmap, "correctness probability for every input of a spec")
    _crn_flags(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--tfinal", type=float, default=ctmc.DEFAULT_TFINAL)
    p.add_argument("--tol", type=float, default=ctmc.DEFAULT_TOL)
    p.add_argument("--terminal-only", action="store_true",
                   help="count only terminal states satisfying the final predicate")

    p = add("hitting", cmd_hitting, "expected time to a terminal state")
    _crn_flags(p)
    p.add_argument("--fractions", type=float_list, default=[0.1, 0.6, 0.9],
                   help="initial share of the first species")
    p.add_argument("--n-range", type=int_range, required=True, help="LO..HI total molecules")
    p.add_argument("--volume", type=float, default=1.0)
    p.add_argument("--unscaled", action="store_true", help="do not multiply by the total count")

    p = add("transient", cmd_transient, "CME solution from one initial state")
    _crn_flags(p)
    p.add_argument("--state", required=True, help="initial counts, e.g. A=2,B=1")
    p.add_argument("--tfinal", type=float, default=ctmc.DEFAULT_TFINAL)
    p.add_argument("--points", type=positive_int, default=101)
    p.add_argument("--tol", type=float, default=ctmc.DEFAULT_TOL)
    p.add_argument("--volume", type=float, default=1.0)
    p.add_argument("--final", help="only report states satisfying this predicate")

    p = add("cme-bench", cmd_cme_bench, "CME integration timing against molecule count")
    _crn_flags(p)
    p.add_argument("--n-list", type=int_list, required=True, help="comma-separated totals")
    p.add_argument("--points", type=positive_int, default=500)
    p.add_argument("--tol", type=float, default=ctmc.DEFAULT_TOL)

    p = add("oracle", cmd_oracle, "brute-force solution set for a small instance")
    _synthesis_flags(p)
    p.add_argument("--max-total", type=positive_int, default=12)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="output directory for the replay")
    p.add_argument("--backend", choices=("exec", "builtin"), help="override the backend")
    p.set_defaults(func=None)
    return parser


def _replay(args) -> int:
    data = json.loads(Path(args.manifest).read_text())
    argv = list(data["argv"])
    out = args.out or str(Path(args.manifest).parent / "replay")
    argv = _set_flag(argv, "--out", out)
    if args.backend:
        argv = _set_flag(argv, "--backend", args.backend)
    return main(argv)


def _set_flag(argv: list[str], flag: str, value: str) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == flag:
            skip = True
            continue
        if tok.startswith(flag + "="):
            continue
        out.append(tok)
    return [*out, flag, value]


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        return _replay(args)

    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    extra: dict = {}
    try:
        code, extra = args.func(args, out)
    except (UsageError, CrnError, SpecError, PredicateError, EncodingError, OracleBoundsError,
            ctmc.SpecificationError, ctmc.StructureError, ctmc.CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, extra = EXIT_USAGE, {"error": str(exc)}
    except SolverTimeout as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        code, extra = EXIT_TIMEOUT, {"status": TIMEOUT}
    except BackendError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        code, extra = EXIT_USAGE, {"error": str(exc)}
    except (ctmc.NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code, extra = EXIT_NUMERICAL, {"error": str(exc)}
    write_manifest(out, args, argv, started, time.perf_counter() - t0, {"exitCode": code, **extra})
    return code


if __name__ == "__main__":
    sys.exit(main())
