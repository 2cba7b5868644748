"""
Bimolecular chemical reaction networks and their discrete semantics.

States are plain tuples of molecule counts, ordered like ``Crn.species``.
Everything here is immutable and side-effect free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

State = tuple[int, ...]

CANONICAL_NAMES = ("A", "B", "X", "Y")


class CrnError(ValueError):
    """Structural problem with a CRN, a state, or a reaction index."""


def species_names(n: int) -> tuple[str, ...]:
    """Canonical species labels: A, B, X, Y, then S4, S5, ..."""
    if n < 1:
        raise CrnError("need at least one species")
    return tuple(CANONICAL_NAMES[i] if i < len(CANONICAL_NAMES) else f"S{i}" for i in range(n))


@dataclass(frozen=True)
class Reaction:
    reactants: tuple[int, ...]
    products: tuple[int, ...]
    rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "reactants", tuple(int(v) for v in self.reactants))
        object.__setattr__(self, "products", tuple(int(v) for v in self.products))
        if len(self.reactants) != len(self.products):
            raise CrnError("reactant and product vectors differ in length")
        if min(self.reactants + self.products) < 0:
            raise CrnError("negative stoichiometry")
        if sum(self.reactants) != 2 or sum(self.products) != 2:
            raise CrnError(
                f"reaction {self.reactants} -> {self.products} is not bimolecular"
            )
        if self.reactants == self.products:
            raise CrnError("reaction does not change the state")
        if not self.rate >= 0:
            raise CrnError(f"invalid rate {self.rate!r}")

    @property
    def stoichiometry(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.reactants, self.products

    @property
    def change(self) -> tuple[int, ...]:
        return tuple(p - r for r, p in zip(self.reactants, self.products))

    def with_rate(self, rate: float) -> Reaction:
        return Reaction(self.reactants, self.products, rate)

    def format(self, names: Sequence[str]) -> str:
        def side(vec):
            return " + ".join(n for n, c in zip(names, vec) for _ in range(c))

        return f"{side(self.reactants)} -> {side(self.products)}"


@dataclass(frozen=True)
class Crn:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    inputs: frozenset[str] = field(default_factory=frozenset)
    outputs: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        if len(set(self.species)) != len(self.species):
            raise CrnError(f"duplicate species names in {self.species}")
        if not self.reactions:
            raise CrnError("a CRN needs at least one reaction")
        n = len(self.species)
        keys = set()
        for rxn in self.reactions:
            if len(rxn.reactants) != n:
                raise CrnError("reaction dimension does not match species count")
            if rxn.stoichiometry in keys:
                raise CrnError(f"duplicate reaction {rxn.format(self.species)}")
            keys.add(rxn.stoichiometry)
        unknown = (self.inputs | self.outputs) - set(self.species)
        if unknown:
            raise CrnError(f"unknown input/output species {sorted(unknown)}")
        for s in self.inputs:
            i = self.species.index(s)
            if not any(rxn.reactants[i] > 0 for rxn in self.reactions):
                raise CrnError(f"input species {s} is never consumed")
        for s in self.outputs:
            i = self.species.index(s)
            if not any(rxn.products[i] > 0 for rxn in self.reactions):
                raise CrnError(f"output species {s} is never produced")

    @classmethod
    def from_matrices(cls, species, reactants, products, rates=None, inputs=(), outputs=()):
        if rates is None:
            rates = [1.0] * len(reactants)
        rxns = [Reaction(r, p, k) for r, p, k in zip(reactants, products, rates)]
        return cls(tuple(species), tuple(rxns), frozenset(inputs), frozenset(outputs))

    @classmethod
    def parse(cls, text: str, species: Sequence[str] | None = None, inputs=(), outputs=()) -> Crn:
        """Build a CRN from lines like ``A + B -> 2 X @ 3.5`` (``;`` also separates)."""
        lines = [ln.strip() for chunk in text.split("\n") for ln in chunk.split(";")]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        parsed = []
        seen: list[str] = list(species or [])
        for ln in lines:
            rate = 1.0
            if "@" in ln:
                ln, rate_text = ln.split("@")
                rate = float(rate_text)
            lhs, rhs = ln.split("->")
            sides = [_parse_side(lhs), _parse_side(rhs)]
            for side in sides:
                for name in side:
                    if name not in seen:
                        if species is not None:
                            raise CrnError(f"unknown species {name!r}")
                        seen.append(name)
            parsed.append((sides, rate))
        names = tuple(seen)
        rxns = []
        for (lhs, rhs), rate in parsed:
            rxns.append(Reaction(
                tuple(lhs.get(s, 0) for s in names),
                tuple(rhs.get(s, 0) for s in names),
                rate,
            ))
        return cls(names, tuple(rxns), frozenset(inputs), frozenset(outputs))

    @property
    def num_species(self) -> int:
        return len(self.species)

    @property
    def num_reactions(self) -> int:
        return len(self.reactions)

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(r.rate for r in self.reactions)

    def with_rates(self, rates: Sequence[float]) -> Crn:
        if len(rates) != self.num_reactions:
            raise CrnError(f"expected {self.num_reactions} rates, got {len(rates)}")
        rxns = tuple(r.with_rate(float(k)) for r, k in zip(self.reactions, rates))
        return Crn(self.species, rxns, self.inputs, self.outputs)

    def index_of(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise CrnError(f"unknown species {name!r}") from None

    def state(self, **counts: int) -> State:
        for name in counts:
            self.index_of(name)
        return tuple(int(counts.get(s, 0)) for s in self.species)

    def canonical_key(self) -> tuple:
        """Reaction multiset with rates dropped; equal for permuted reaction lists."""
        return tuple(sorted(r.stoichiometry for r in self.reactions))

    def canonical(self) -> Crn:
        """Same network with reactions sorted by (reactants, products)."""
        rxns = tuple(sorted(self.reactions, key=lambda r: r.stoichiometry))
        return Crn(self.species, rxns, self.inputs, self.outputs)

    def __str__(self) -> str:
        return "; ".join(
            f"{r.format(self.species)} @ {r.rate:g}" for r in self.reactions
        )

    # -- JSON -------------------------------------------------------------

    def to_dict(self) -> dict:
        def counts(vec):
            return {s: c for s, c in zip(self.species, vec) if c}

        return {
            "species": list(self.species),
            "reactions": [
                {"reactants": counts(r.reactants), "products": counts(r.products), "rate": r.rate}
                for r in self.reactions
            ],
            "inputs": sorted(self.inputs, key=self.species.index),
            "outputs": sorted(self.outputs, key=self.species.index),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Crn:
        species = tuple(data["species"])
        rxns = []
        for entry in data["reactions"]:
            for side in ("reactants", "products"):
                unknown = set(entry.get(side, {})) - set(species)
                if unknown:
                    raise CrnError(f"unknown species {sorted(unknown)} in reaction")
            rxns.append(Reaction(
                tuple(int(entry.get("reactants", {}).get(s, 0)) for s in species),
                tuple(int(entry.get("products", {}).get(s, 0)) for s in species),
                float(entry.get("rate", 1.0)),
            ))
        return cls(species, tuple(rxns), frozenset(data.get("inputs", ())),
                   frozenset(data.get("outputs", ())))


def _parse_side(text: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for term in text.split("+"):
        term = term.strip()
        if not term:
            continue
        parts = term.split()
        if len(parts) == 2:
            coeff, name = int(parts[0]), parts[1]
        elif len(parts) == 1:
            head = parts[0]
            digits = len(head) - len(head.lstrip("0123456789"))
            coeff, name = (int(head[:digits]), head[digits:]) if digits else (1, head)
        else:
            raise CrnError(f"cannot parse reaction term {term!r}")
        out[name] = out.get(name, 0) + coeff
    return out


def load_crns(path: str | Path) -> list[Crn]:
    """Read one CRN object or a JSON array of them."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return [Crn.from_dict(d) for d in data]


def dump_crns(crns: Iterable[Crn], path: str | Path, meta: Sequence[dict] | None = None) -> None:
    objs = []
    for i, crn in enumerate(crns):
        obj = crn.to_dict()
        if meta is not None:
            obj["meta"] = meta[i]
        objs.append(obj)
    Path(path).write_text(json.dumps(objs, indent=2) + "\n")


# -- semantics ------------------------------------------------------------

def _check(crn: Crn, x: Sequence[int], r: int | None = None) -> None:
    if len(x) != crn.num_species:
        raise CrnError(f"state {tuple(x)} has dimension {len(x)}, expected {crn.num_species}")
    if r is not None and not 0 <= r < crn.num_reactions:
        raise CrnError(f"reaction index {r} out of range")


def propensity(crn: Crn, r: int, x: Sequence[int]) -> float:
    """Mass-action propensity at unit volume; ``k x(x-1)/2`` for a doubled reactant."""
    _check(crn, x, r)
    rxn = crn.reactions[r]
    value = rxn.rate
    for xs, rs in zip(x, rxn.reactants):
        if rs == 2:
            value *= xs * (xs - 1) / 2
        elif rs == 1:
            value *= xs
    return float(value)


def enabled(crn: Crn, r: int, x: Sequence[int]) -> bool:
    _check(crn, x, r)
    return all(xs >= rs for xs, rs in zip(x, crn.reactions[r].reactants))


def fire(crn: Crn, r: int, x: Sequence[int]) -> State:
    if not enabled(crn, r, x):
        raise CrnError(f"reaction {r} is not enabled in {tuple(x)}")
    rxn = crn.reactions[r]
    return tuple(xs - rs + ps for xs, rs, ps in zip(x, rxn.reactants, rxn.products))


def is_terminal(crn: Crn, x: Sequence[int]) -> bool:
    _check(crn, x)
    return not any(enabled(crn, r, x) for r in range(crn.num_reactions))


def successors(crn: Crn, x: Sequence[int]) -> set[State]:
    _check(crn, x)
    return {fire(crn, r, x) for r in range(crn.num_reactions) if enabled(crn, r, x)}


def stutter_successors(crn: Crn, x: Sequence[int], sequential: bool = False
                       ) -> set[tuple[State, int | None, int]]:
    """
    One stutter step: reaction ``r`` applied ``n >= 1`` times at once, subject to
    ``x_s >= n * (reactants_s - products_s)`` for every species, plus the
    ``(x, None, 0)`` self-loop when ``x`` is terminal.

    With ``sequential`` the bound is ``x_s >= n * reactants_s - (n - 1) * products_s``,
    i.e. the reaction stays enabled for each of the ``n`` firings.  The plain
    bound admits a few more targets when a species goes from 2 to 1 molecule.

    ``n`` never exceeds the total molecule count of ``x``.
    """
    _check(crn, x)
    x = tuple(x)
    total = sum(x)
    out: set[tuple[State, int | None, int]] = set()
    for r, rxn in enumerate(crn.reactions):
        if not enabled(crn, r, x):
            continue
        for n in range(1, total + 1):
            if any(xs < _stutter_need(n, rs, ps, sequential)
                   for xs, rs, ps in zip(x, rxn.reactants, rxn.products)):
                break
            out.add((tuple(xs + n * (ps - rs) for xs, rs, ps in zip(x, rxn.reactants, rxn.products)), r, n))
    if not out:
        out.add((x, None, 0))
    return out


def _stutter_need(n: int, rs: int, ps: int, sequential: bool) -> int:
    return n * rs - (n - 1) * ps if sequential else n * (rs - ps)


def stutter_targets(crn: Crn, x: Sequence[int], sequential: bool = False) -> set[State]:
    return {y for y, _, _ in stutter_successors(crn, x, sequential)}


def states_with_total(n_species: int, total: int) -> Iterator[State]:
    """All states whose counts sum to exactly ``total``."""
    if n_species == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in states_with_total(n_species - 1, total - first):
            yield (first,) + rest


def states_up_to(n_species: int, max_total: int) -> Iterator[State]:
    for total in range(max_total + 1):
        yield from states_with_total(n_species, total)
