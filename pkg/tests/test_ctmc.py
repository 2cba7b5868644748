import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from crnsynth import ctmc
from crnsynth.crn import Crn, Reaction, species_names
from crnsynth.oracle import ReactionSpace
from crnsynth.predicates import FALSE, PathPredicate, parse
from crnsynth.specs import am_predicates

from conftest import am39, dc_network


def dc_space(*starts):
    return ctmc.build_state_space(dc_network(), list(starts))


# -- state space / generator -------------------------------------------------------

def test_state_space_from_predicate():
    space = ctmc.build_state_space(dc_network(), parse("A = 2 && B = 1"))
    assert set(space.states) == {(2, 1), (1, 2), (3, 0), (0, 3)}
    assert {space.states[i] for i in space.terminal} == {(3, 0), (0, 3)}
    assert [space.states[i] for i in space.initial] == [(2, 1)]


def test_am39_only_terminal_from_tie():
    space = ctmc.build_state_space(am39(), [(1, 1, 0)])
    assert [space.states[i] for i in space.terminal] == [(0, 0, 2)]
    assert all(sum(x) == 2 for x in space.states)


def test_empty_initial_set_and_capacity():
    with pytest.raises(ctmc.SpecificationError):
        ctmc.build_state_space(dc_network(), parse("A = 1 && A = 2 && B = 0"))
    with pytest.raises(ctmc.CapacityError):
        ctmc.build_state_space(dc_network(), [(30, 30)], max_states=10)


def test_generator_entries():
    space = dc_space((1, 1))
    q = ctmc.build_generator(space, (1.0, 1.0)).toarray()
    i = space.index
    assert q[i[(1, 1)], i[(0, 2)]] == 1.0
    assert q[i[(1, 1)], i[(2, 0)]] == 1.0
    assert q[i[(1, 1)], i[(1, 1)]] == -2.0
    q2 = ctmc.build_generator(space, (1.0, 1.0), volume=2.0).toarray()
    assert q2[i[(1, 1)], i[(0, 2)]] == 0.5


def test_am39_generator_single_exit():
    space = ctmc.build_state_space(am39((3.5, 1, 1)), [(1, 1, 0)])
    q = ctmc.build_generator(space, (3.5, 1.0, 1.0)).toarray()
    row = q[space.index[(1, 1, 0)]]
    assert np.count_nonzero(row) == 2
    assert row[space.index[(0, 0, 2)]] == 3.5


def test_parallel_edges_are_summed():
    crn = Crn.parse("A + B -> 2 B @ 1; 2 A -> A + B @ 1", species=("A", "B"))
    # from (2,1): A + B -> 2B gives (1,2); 2A -> A + B also gives (1,2)
    space = ctmc.build_state_space(crn, [(2, 1)])
    q = ctmc.build_generator(space, (2.0, 3.0)).toarray()
    assert q[space.index[(2, 1)], space.index[(1, 2)]] == pytest.approx(2.0 * 2 + 3.0 * 1)


def test_generator_rejects_bad_rates():
    space = dc_space((1, 1))
    with pytest.raises(ctmc.SpecificationError):
        ctmc.build_generator(space, (0.0, 1.0))
    with pytest.raises(ctmc.SpecificationError):
        ctmc.build_generator(space, (1.0, 1.0), volume=0)


def random_crn(n_species):
    space = ReactionSpace.build(n_species).reactions
    return st.lists(st.sampled_from(space), min_size=1, max_size=3, unique=True).map(
        lambda rows: Crn(species_names(n_species), tuple(Reaction(r, p) for r, p in rows)))


instances = st.integers(2, 3).flatmap(lambda n: st.tuples(
    random_crn(n), st.lists(st.integers(0, 3), min_size=n, max_size=n),
    st.lists(st.floats(0.05, 20), min_size=3, max_size=3)))


@settings(max_examples=50, deadline=None)
@given(instances)
def test_generator_rows_sum_to_zero(inst):
    crn, x0, rates = inst
    space = ctmc.build_state_space(crn, [tuple(x0)])
    q = ctmc.build_generator(space, rates[:crn.num_reactions])
    assert np.abs(np.asarray(q.sum(axis=1))).max() <= 1e-12
    assert (q - sp.diags(q.diagonal())).min() >= 0
    for i in space.terminal:
        assert q[i].nnz == 0


# -- transient ------------------------------------------------------------------

@pytest.mark.parametrize("method", ["expm", "uniformization", "bdf"])
@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_dc_tie_terminal_mass(method, t):
    space = dc_space((1, 1))
    q = ctmc.build_generator(space, (1.0, 1.0))
    p = ctmc.integrate_cme(q, space.uniform_initial(), t, method=method)
    term = p[list(space.terminal)]
    assert term.sum() == pytest.approx(1 - math.exp(-2 * t), abs=1e-6)
    assert term[0] == pytest.approx(term[1], abs=1e-9)


def test_time_zero_is_identity():
    space = dc_space((2, 1))
    q = ctmc.build_generator(space, (1.0, 2.0))
    p0 = space.uniform_initial()
    assert np.array_equal(ctmc.integrate_cme(q, p0, 0.0), p0)
    with pytest.raises(ValueError):
        ctmc.integrate_cme(q, p0, -1.0)


def test_long_horizon_absorbs():
    space = dc_space((1, 1))
    q = ctmc.build_generator(space, (1.0, 1.0))
    p = ctmc.integrate_cme(q, space.uniform_initial(), 100.0)
    assert p[list(space.terminal)].sum() == pytest.approx(1.0, abs=1e-9)


def test_methods_agree_on_a_larger_chain():
    crn = am39((2.0, 1.0, 0.5))
    space = ctmc.build_state_space(crn, [(12, 9, 0)])
    q = ctmc.build_generator(space, crn.rates)
    p0 = space.uniform_initial()
    ref = ctmc.integrate_cme(q, p0, 0.7, method="expm")
    for method in ("uniformization", "bdf"):
        assert np.abs(ctmc.integrate_cme(q, p0, 0.7, 1e-10, method) - ref).sum() < 1e-6


@settings(max_examples=30, deadline=None)
@given(instances, st.floats(0.01, 3), st.floats(0.01, 3))
def test_semigroup_and_conservation(inst, s, t):
    crn, x0, rates = inst
    space = ctmc.build_state_space(crn, [tuple(x0)])
    q = ctmc.build_generator(space, rates[:crn.num_reactions])
    p0 = space.uniform_initial()
    tol = 1e-10
    for method in ("expm", "uniformization"):
        whole = ctmc.integrate_cme(q, p0, s + t, tol, method)
        split = ctmc.integrate_cme(q, ctmc.integrate_cme(q, p0, s, tol, method), t, tol, method)
        assert abs(whole.sum() - 1) <= 1e-9
        assert np.abs(whole - split).sum() <= 10 * tol + 1e-9


def test_transient_outputs_in_order():
    space = dc_space((1, 1))
    q = ctmc.build_generator(space, (1.0, 1.0))
    dist = ctmc.transient(q, space.uniform_initial(), [0.0, 0.5, 1.0])
    assert dist.shape == (3, len(space))
    terminal = dist[:, list(space.terminal)].sum(axis=1)
    assert terminal == pytest.approx([0.0, 1 - math.exp(-1), 1 - math.exp(-2)])
    with pytest.raises(ValueError):
        ctmc.transient(q, space.uniform_initial(), [1.0, 0.5])


def absorption_probabilities(q, space):
    live = np.setdiff1d(np.arange(len(space)), space.terminal)
    term = np.asarray(space.terminal)
    qa = q.toarray()
    b = qa[np.ix_(live, term)]
    return live, term, np.linalg.solve(-qa[np.ix_(live, live)], b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(1, 3), st.floats(0.2, 5), st.floats(0.2, 5))
def test_terminal_mass_matches_absorption_solve(a, b, k1, k2):
    crn = dc_network((k1, k2))
    space = ctmc.build_state_space(crn, [(a, b)])
    q = ctmc.build_generator(space, crn.rates)
    p = ctmc.integrate_cme(q, space.uniform_initial(), 100.0)
    start = space.index[(a, b)]
    if start in space.terminal:
        assert p[start] == pytest.approx(1.0)
        return
    live, term, absorb = absorption_probabilities(q, space)
    row = absorb[list(live).index(start)]
    assert p[term] == pytest.approx(row, abs=1e-6)


# -- path-predicate probabilities -------------------------------------------------------

def test_dc_probabilities():
    tie, maj = am_predicates([(1, 1), (2, 1)], 2)
    assert ctmc.probability_of(dc_network(), tie, 100.0) == pytest.approx(1.0, abs=1e-9)
    assert ctmc.probability_of(dc_network(), maj, 100.0) == pytest.approx(2 / 3, abs=1e-4)


def test_false_final_scores_zero():
    phi = PathPredicate(parse("A = 2 && B = 1"), FALSE)
    assert ctmc.probability_of(dc_network(), phi) == 0.0
    assert ctmc.average_probability(dc_network(), [phi, phi]) == 0.0


def test_average_probability():
    preds = am_predicates([(2, 1), (1, 2)], 2)
    assert ctmc.average_probability(dc_network(), preds, 100.0) == pytest.approx(2 / 3, abs=1e-4)
    single = ctmc.average_probability(dc_network(), preds[:1], 5.0)
    assert single == ctmc.probability_of(dc_network(), preds[0], 5.0)
    with pytest.raises(ValueError):
        ctmc.average_probability(dc_network(), [])


def test_am39_scores_zero_on_the_tie():
    (phi,) = am_predicates([(1, 1)], 3)
    assert ctmc.probability_of(am39(), phi, 100.0) == 0.0


def test_terminal_only_option():
    # (A=2,B=2) for division is transiently right only while X=1 sits in a live state
    crn = Crn.parse("A + B -> X + B; A + X -> A + A", species=("A", "B", "X"))
    phi = PathPredicate(parse("A = 2 && B = 1 && X = 0"), parse("X = 1"))
    loose = ctmc.probability_of(crn, phi, 0.3)
    strict = ctmc.probability_of(crn, phi, 0.3, terminal_only=True)
    assert loose > strict


def test_uniform_initial_over_several_states():
    phi = PathPredicate(parse("A + B = 2 && A >= 1"), parse("B = 0"))
    # starts (2,0) [terminal, correct] and (1,1) [half goes to (2,0)]
    assert ctmc.probability_of(dc_network(), phi, 100.0) == pytest.approx(0.75, abs=1e-9)


# -- hitting times --------------------------------------------------------------------

def test_dc_hitting_times():
    assert ctmc.hitting_time_from(dc_network(), (1, 1)) == pytest.approx(0.5, abs=1e-9)
    assert ctmc.hitting_time_from(dc_network(), (2, 1)) == pytest.approx(0.5, abs=1e-9)
    assert ctmc.hitting_time_from(dc_network(), (3, 0)) == 0.0


def test_volume_scaling():
    assert ctmc.hitting_time_from(dc_network(), (1, 1), scale_by_total=True) == pytest.approx(1.0)
    assert ctmc.hitting_time_from(dc_network(), (2, 1), scale_by_total=True) == pytest.approx(1.5)
    for x in [(2, 1), (3, 3), (4, 1)]:
        base = ctmc.hitting_time_from(dc_network(), x)
        assert ctmc.hitting_time_from(dc_network(), x, volume=2.0) == pytest.approx(2 * base, rel=1e-12)


def birth_death_tau(n, k=1.0):
    """Expected absorption times of DC (equal rates k) on total n, by direct recursion."""
    # from (a, n-a): exit rate 2k a (n-a), moves to a +- 1 with probability 1/2
    m = n - 1
    if m <= 0:
        return {}
    a_mat = np.zeros((m, m))
    rhs = np.zeros(m)
    for i, a in enumerate(range(1, n)):
        rate = 2 * k * a * (n - a)
        a_mat[i, i] = 1.0
        for nb in (a - 1, a + 1):
            if 1 <= nb <= n - 1:
                a_mat[i, nb - 1] -= 0.5
        rhs[i] = 1.0 / rate
    sol = np.linalg.solve(a_mat, rhs)
    return {(a, n - a): sol[a - 1] for a in range(1, n)}


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_hitting_matches_birth_death(n):
    space = ctmc.build_state_space(dc_network(), list({(a, n - a) for a in range(n + 1)}))
    tau = ctmc.expected_hitting_time(ctmc.build_generator(space, (1.0, 1.0)), space)
    for x, want in birth_death_tau(n).items():
        assert tau[space.index[x]] == pytest.approx(want, abs=1e-9)
    for i in space.terminal:
        assert tau[i] == 0.0


def test_trapped_states_are_an_error():
    crn = Crn.parse("A + B -> 2 B; 2 B -> A + B", species=("A", "B"))
    with pytest.raises(ctmc.StructureError):
        ctmc.hitting_time_from(crn, (1, 1))
