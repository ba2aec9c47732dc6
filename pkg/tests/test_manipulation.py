import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collegeda import Dominance, Market, OracleSizeError, Variant, responsive_dominates
from collegeda.daa import KernelInputs, daa_matching
from collegeda.fixtures import STUDENTS, example_market, misreport_indices
from collegeda.manipulation import (
    SearchStats,
    brute_force_oracle,
    evaluate_report,
    find_manipulation_by_subsets,
    find_manipulation_college_proposing,
    find_manipulation_student_proposing,
    find_manipulation_via_seats,
    find_optimal_manipulation_student_proposing,
    proposed_prefix,
    split_to_one_to_one,
    truthful_run,
)
from conftest import markets
from reference import sequential_da

SP, CP = Variant.STUDENT_PROPOSING, Variant.COLLEGE_PROPOSING


def names(xs):
    return {STUDENTS[s] for s in xs}


def aligned():
    return Market.from_lists([[0, 1], [1, 0]], [[0, 1], [1, 0]], [1, 1])


def beats(market, c, a, b):
    order = market.college_prefs[c].tolist()
    return responsive_dominates(order, a, b, int(market.capacities[c])) is Dominance.STRICTLY_BETTER


def check_report(market, rep):
    """Replay, dominance and the set identities every returned report must satisfy."""
    replay = KernelInputs.build(market, rep.variant).with_report(rep.college, rep.reported_list).run()
    assert replay.matching() == rep.result_matching
    assert sorted(rep.reported_list) == list(range(market.n_students))
    if rep.is_truthful:
        return
    assert beats(market, rep.college, rep.outcome, rep.truthful_set)
    assert len(rep.lost) == len(rep.gained)
    assert not rep.temp_accepts & rep.outcome
    rank = market.profile.college_rank[rep.college]
    assert all(rank[u] > rank[t] for u in rep.temp_accepts for t in rep.lost)


# markets found by random search where a narrower search family fails;
# each is manipulable according to the oracle
DEMOTION_MISS = dict(
    sp=[[1, 2, 0], [0, 2, 1], [1, 2, 0], [2, 0, 1], [1, 0, 2]],
    cp=[[2, 0, 1, 3, 4], [3, 1, 2, 0, 4], [1, 3, 0, 2, 4]],
    caps=[1, 2, 1],
    college=0,
)
LONE_SEAT_MISS = dict(
    sp=[[1, 0], [1, 0], [0, 1], [1, 0], [0, 1]],
    cp=[[0, 1, 2, 3, 4], [2, 1, 3, 0, 4]],
    caps=[3, 1],
    college=0,
)
GREEDY_STUCK = dict(
    sp=[[1, 0, 2], [2, 0, 1], [1, 0, 2], [2, 1, 0], [2, 1, 0]],
    cp=[[3, 0, 2, 4, 1], [1, 2, 3, 0, 4], [0, 2, 3, 1, 4]],
    caps=[1, 1, 2],
    college=2,
)
SUBSET_MISSES = [
    dict(
        sp=[[2, 0, 1], [2, 0, 1], [2, 1, 0], [0, 2, 1], [1, 2, 0], [1, 2, 0]],
        cp=[[0, 4, 5, 3, 2, 1], [4, 1, 0, 5, 2, 3], [3, 4, 1, 5, 2, 0]],
        caps=[2, 2, 2],
        college=2,
    ),
    dict(
        sp=[[1, 2, 0], [1, 0, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0]],
        cp=[[0, 4, 1, 2, 3], [4, 2, 0, 3, 1], [4, 1, 2, 0, 3]],
        caps=[1, 2, 2],
        college=2,
    ),
]


def build(d):
    return Market.from_lists(d["sp"], d["cp"], d["caps"]), d["college"]


class TestExampleMarket:
    def test_finder_finds_a_beneficial_report(self):
        m = example_market()
        rep = find_manipulation_student_proposing(m, 0)
        assert rep is not None
        assert names(rep.truthful_set) == {"t1", "t2", "t3"}
        assert len(rep.lost) == 1
        check_report(m, rep)

    def test_published_misreport(self):
        m = example_market()
        rep = evaluate_report(m, 0, SP, misreport_indices())
        assert names(rep.outcome) == {"s2", "s3", "s4"}
        assert names(rep.lost) == {"t1", "t2", "t3"}
        assert names(rep.gained) == {"s2", "s3", "s4"}
        # u1..u3 are held for a while so that c can drop t1..t3
        assert names(rep.temp_accepts) == {"u1", "u2", "u3"}
        check_report(m, rep)

    def test_optimal_report(self):
        m = example_market()
        rep = find_optimal_manipulation_student_proposing(m, 0)
        check_report(m, rep)
        order = [STUDENTS[s] for s in m.college_prefs[0]]
        assert responsive_dominates(order, names(rep.outcome), {"s2", "s3", "s4"}, 3) in (
            Dominance.STRICTLY_BETTER,
            Dominance.EQUAL,
        )
        oracle = brute_force_oracle(m, 0, SP, max_students=10)
        assert oracle.decision
        assert not any(beats(m, 0, o, rep.outcome) for o in oracle.outcomes)
        assert {frozenset(names(o)) for o in oracle.maximal_outcomes} == {frozenset(names(rep.outcome))}

    def test_oracle_guard(self):
        with pytest.raises(OracleSizeError):
            brute_force_oracle(example_market(), 0, SP)

    def test_seat_market(self):
        m = example_market()
        derived, mapping = split_to_one_to_one(m)
        assert derived.n_colleges == 7
        assert derived.college_names[:3] == ("c^1", "c^2", "c^3")
        assert mapping.seats_of[0] == (0, 1, 2)
        seat_mu = daa_matching(derived)
        assert names(s for x in (0, 1, 2) for s in seat_mu.of_college(x)) == {"t1", "t2", "t3"}
        assert find_manipulation_via_seats(m, 0) is not None


class TestTrivialMarkets:
    @pytest.mark.parametrize("c", [0, 1])
    def test_aligned_market_is_not_manipulable(self, c):
        m = aligned()
        assert find_manipulation_student_proposing(m, c) is None
        assert find_manipulation_college_proposing(m, c) is None
        rep = find_optimal_manipulation_student_proposing(m, c)
        assert rep.is_truthful and rep.iterations == 0
        for variant in Variant:
            o = brute_force_oracle(m, c, variant)
            assert not o.decision and o.maximal_outcomes == {frozenset({c})}

    def test_unfilled_college_costs_no_runs(self):
        m = Market.from_lists([[0, 1], [0, 1]], [[0, 1], [1, 0]], [3, 1])
        stats = SearchStats()
        assert find_manipulation_college_proposing(m, 0, stats=stats) is None
        assert stats.daa_runs == 0 and stats.pruned

    def test_split_identity_for_unit_capacities(self):
        m = aligned()
        derived, mapping = split_to_one_to_one(m)
        assert np.array_equal(derived.student_prefs, m.student_prefs)
        assert np.array_equal(derived.college_prefs, m.college_prefs)
        assert mapping.parent == (0, 1)

    def test_split_single_college(self):
        m = Market.from_lists([[0], [0], [0]], [[2, 0, 1]], [3])
        derived, mapping = split_to_one_to_one(m)
        assert derived.n_colleges == 3
        seat_mu = daa_matching(derived)
        assert mapping.lift(seat_mu, 1).of_college(0) == {0, 1, 2}

    def test_three_student_oracle_by_hand(self):
        # every one of the 6 reports of college 0, evaluated with the slow reference
        sp, cp0, cp1 = [[1, 0], [0, 1], [1, 0]], [2, 1, 0], [1, 2, 0]
        m = Market.from_lists(sp, [cp0, cp1], [1, 1])
        expected = set()
        for perm in itertools.permutations(range(3)):
            got = sequential_da(sp, [list(perm), cp1], [1, 1])
            expected.add(frozenset(s for s in range(3) if got[s] == 0))
        o = brute_force_oracle(m, 0, SP)
        assert o.outcomes == expected == {frozenset({0}), frozenset({1}), frozenset({2})}
        assert o.reports_tried == 6
        assert o.truthful == {1}
        assert o.decision and o.maximal_outcomes == {frozenset({2})}


class TestSearchFamilies:
    def test_single_demotion_can_miss(self):
        m, c = build(DEMOTION_MISS)
        assert brute_force_oracle(m, c, SP).decision
        assert find_manipulation_student_proposing(m, c, family="demotion") is None
        rep = find_manipulation_student_proposing(m, c)
        assert rep is not None and len(rep.lost) == 1
        check_report(m, rep)

    def test_seats_must_share_a_report(self):
        m, c = build(LONE_SEAT_MISS)
        assert brute_force_oracle(m, c, SP).decision
        derived, mapping = split_to_one_to_one(m)
        inputs = KernelInputs.build(derived, SP)
        seats = mapping.seats_of[c]
        truth = inputs.run()
        mu_c = frozenset().union(*(truth.college_set(x) for x in seats))
        # no single seat gains anything for the college on its own
        for x in seats:
            for perm in itertools.permutations(range(m.n_students)):
                raw = inputs.with_report(x, perm).run()
                got = frozenset().union(*(raw.college_set(y) for y in seats))
                assert not beats(m, c, got, mu_c)
        w = find_manipulation_via_seats(m, c)
        assert w is not None
        assert beats(m, c, w.lifted.of_college(c), mu_c)

    def test_optimal_explores_incomparable_improvements(self):
        m, c = build(GREEDY_STUCK)
        rep = find_optimal_manipulation_student_proposing(m, c)
        oracle = brute_force_oracle(m, c, SP)
        assert rep.outcome in oracle.maximal_outcomes
        assert rep.outcome == {0, 2}
        # {0, 1} is the first-ranked single improvement; it is a dead end
        # that {0, 2} dominates
        assert {0, 1} in oracle.outcomes and beats(m, c, {0, 2}, {0, 1})

    @pytest.mark.parametrize("case", SUBSET_MISSES)
    def test_subset_phase_can_miss(self, case):
        m, c = build(case)
        assert brute_force_oracle(m, c, CP).decision
        stats = SearchStats()
        assert find_manipulation_college_proposing(m, c, complete=False, stats=stats) is None
        assert stats.daa_runs <= 2 ** (int(m.capacities[c]) - 1) - 1
        rep = find_manipulation_college_proposing(m, c)
        assert rep is not None and rep.search == "swaps"
        check_report(m, rep)
        assert rep.daa_runs > 2 ** (int(m.capacities[c]) - 1) - 1

    def test_subsets_protocol_matches_college_phase(self):
        m, c = build(SUBSET_MISSES[0])
        assert find_manipulation_by_subsets(m, c, CP) is None


@settings(max_examples=150)
@given(markets(max_students=6, max_colleges=3, max_cap=3))
def test_student_proposing_finders_agree_with_oracle(market):
    truthful = truthful_run(market, SP)
    for c in range(market.n_colleges):
        oracle = brute_force_oracle(market, c, SP)
        rep = find_manipulation_student_proposing(market, c)
        assert (rep is not None) == oracle.decision
        assert (find_manipulation_via_seats(market, c) is not None) == oracle.decision
        opt = find_optimal_manipulation_student_proposing(market, c)
        check_report(market, opt)
        assert not any(beats(market, c, o, opt.outcome) for o in oracle.outcomes)
        if rep is not None:
            check_report(market, rep)
            assert len(rep.lost) == 1
            q = int(market.capacities[c])
            assert truthful.n_held[c] == q and truthful.n_received[c] > q


@settings(max_examples=150)
@given(markets(max_students=6, max_colleges=3, max_cap=3))
def test_college_proposing_finder_agrees_with_oracle(market):
    truthful = truthful_run(market, CP)
    for c in range(market.n_colleges):
        oracle = brute_force_oracle(market, c, CP)
        rep = find_manipulation_college_proposing(market, c)
        assert (rep is not None) == oracle.decision
        best = find_manipulation_college_proposing(market, c, optimal=True)
        assert (best is not None) == oracle.decision
        if rep is None:
            continue
        offered = set(market.college_prefs[c, : truthful.n_proposed[c]].tolist())
        for r in (rep, best):
            check_report(market, r)
            assert proposed_prefix(r) <= offered
        assert best.outcome in oracle.maximal_outcomes


@given(markets(max_students=10, max_colleges=4, max_cap=4))
def test_seat_split_equality(market):
    derived, mapping = split_to_one_to_one(market)
    assert sum(len(s) for s in mapping.seats_of) == int(market.capacities.sum())
    seat_mu = daa_matching(derived)
    lifted = mapping.lift(seat_mu, market.n_colleges)
    assert lifted == daa_matching(market)
    for c, seats in enumerate(mapping.seats_of):
        assert lifted.of_college(c) == frozenset().union(*(seat_mu.of_college(x) for x in seats))


@given(st.integers(1, 4), st.integers(0, 10_000))
def test_budget_of_subset_phase(q, seed):
    rng = np.random.default_rng(seed)
    n_s = int(rng.integers(q, 12))
    m = Market.from_lists(
        [rng.permutation(3) for _ in range(n_s)], [rng.permutation(n_s) for _ in range(3)], [q, 2, 1]
    )
    stats = SearchStats()
    find_manipulation_college_proposing(m, 0, complete=False, stats=stats)
    assert stats.daa_runs <= max(0, 2 ** (q - 1) - 1)
