"""Benchmark specifications: approximate majority and division over input grids."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .crn import species_names
from .predicates import PathPredicate, conj, disj, eq


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class InputGrid:
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        if not pairs:
            raise SpecError("input grid is empty")
        if len(set(pairs)) != len(pairs):
            raise SpecError("input grid has duplicate pairs")
        if any(a < 0 or b < 0 for a, b in pairs):
            raise SpecError("input counts must be nonnegative")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def restrict(self, max_total: int) -> InputGrid:
        return InputGrid(tuple(p for p in self.pairs if sum(p) <= max_total))


def square(lo: int, hi: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(lo, hi + 1) for b in range(lo, hi + 1)]


def standard_grid(name: str) -> InputGrid:
    """The published input ranges: ``am`` is [1..5]^2 u [6..10]^2, ``div`` is [1..10]^2."""
    if name == "am":
        return InputGrid(tuple(square(1, 5) + square(6, 10)))
    if name == "div":
        return InputGrid(tuple(square(1, 10)))
    raise SpecError(f"unknown benchmark {name!r}")


def am_predicates(grid: InputGrid | Sequence[tuple[int, int]], n_species: int = 2) -> list[PathPredicate]:
    if n_species not in (2, 3):
        raise SpecError("approximate majority is defined for 2 or 3 species")
    names = species_names(n_species)
    out = []
    for a, b in _pairs(grid):
        init = [eq("A", a), eq("B", b)] + [eq(s, 0) for s in names[2:]]
        a_wins = conj(eq("A", a + b), eq("B", 0))
        b_wins = conj(eq("A", 0), eq("B", a + b))
        if a > b:
            final = a_wins
        elif a < b:
            final = b_wins
        else:
            final = disj(a_wins, b_wins)
        out.append(PathPredicate(conj(*init), final))
    return out


def div_predicates(grid: InputGrid | Sequence[tuple[int, int]], n_species: int = 3) -> list[PathPredicate]:
    if n_species not in (3, 4):
        raise SpecError("division is defined for 3 or 4 species")
    names = species_names(n_species)
    out = []
    for a, b in _pairs(grid):
        if b < 1:
            raise SpecError(f"division input ({a}, {b}) has a zero divisor")
        init = [eq("A", a), eq("B", b)] + [eq(s, 0) for s in names[2:]]
        out.append(PathPredicate(conj(*init), eq("X", a // b)))
    return out


# inputs/outputs used for the structural constraints of each benchmark
ROLES = {
    "am": (("A", "B"), ("A", "B")),
    "div": (("A", "B"), ("X",)),
}


@dataclass(frozen=True)
class Benchmark:
    name: str
    n_species: int
    grid: InputGrid

    @property
    def species(self) -> tuple[str, ...]:
        return species_names(self.n_species)

    @property
    def inputs(self) -> tuple[str, ...]:
        return ROLES[self.name][0]

    @property
    def outputs(self) -> tuple[str, ...]:
        return ROLES[self.name][1]

    def predicates(self) -> list[PathPredicate]:
        if self.name == "am":
            return am_predicates(self.grid, self.n_species)
        return div_predicates(self.grid, self.n_species)

    def to_dict(self) -> dict:
        return {"name": self.name, "N": self.n_species, "grid": [list(p) for p in self.grid]}


def load_benchmark(spec: str, n_species: int | None = None) -> Benchmark:
    """``spec`` is ``am``, ``div`` or a JSON file ``{"name", "N", "grid"}``."""
    if spec in ("am", "div"):
        if n_species is None:
            n_species = 2 if spec == "am" else 3
        return Benchmark(spec, n_species, standard_grid(spec))
    data = json.loads(Path(spec).read_text())
    name = data["name"]
    if name not in ROLES:
        raise SpecError(f"unknown benchmark {name!r} in {spec}")
    n = int(data.get("N", n_species or 0))
    if n_species is not None and n != n_species:
        raise SpecError(f"spec file declares N={n} but {n_species} species were requested")
    grid = InputGrid(tuple(tuple(p) for p in data["grid"])) if "grid" in data else standard_grid(name)
    return Benchmark(name, n, grid)


def _pairs(grid):
    return grid.pairs if isinstance(grid, InputGrid) else InputGrid(tuple(grid)).pairs
