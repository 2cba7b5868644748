import shutil

import pytest

from crnsynth.crn import Crn

HAVE_Z3 = shutil.which("z3") is not None

requires_z3 = pytest.mark.skipif(not HAVE_Z3, reason="z3 executable not on PATH")


def dc_network(rates=(1.0, 1.0)) -> Crn:
    """Direct competition: A + B -> 2B, A + B -> 2A."""
    return Crn.parse(f"A + B -> 2 B @ {rates[0]}; A + B -> 2 A @ {rates[1]}",
                     species=("A", "B"))


def am39(rates=(1.0, 1.0, 1.0)) -> Crn:
    """The classical three-reaction approximate majority network."""
    k1, k2, k3 = rates
    return Crn.parse(f"A + B -> 2 X @ {k1}; A + X -> 2 A @ {k2}; B + X -> 2 B @ {k3}",
                     species=("A", "B", "X"))


@pytest.fixture
def dc():
    return dc_network()


@pytest.fixture
def am():
    return am39()


# -- acceptance report --------------------------------------------------------------

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(criterion: int, ok: bool, text: str, soft: bool = False, part: str = ""):
        tag = "PASS" if ok else ("FAIL (soft)" if soft else "FAIL")
        label = f"{criterion}{part}"
        lines[(criterion, part)] = f"criterion {label:<3}: {tag:<11} {text}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(lines):
        terminalreporter.write_line(lines[c])
