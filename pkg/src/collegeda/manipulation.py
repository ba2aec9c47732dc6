"""Beneficial preference misrepresentation by a single college.

All finders keep every other agent truthful and judge outcomes by the
responsive extension of the college's *true* order: a report is beneficial
only when the resulting set strictly dominates the truthful one slot by slot.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .daa import KernelInputs, ProposalTrace, RawOutcome, Variant
from .errors import OracleSizeError
from .model import Dominance, Market, Matching, compare_rank_vectors, padded_ranks

DEFAULT_ORACLE_GUARD = 8


@dataclass(frozen=True)
class ManipulationReport:
    college: int
    variant: Variant
    reported_list: tuple[int, ...]
    result_matching: Matching
    truthful_set: frozenset[int]
    lost: frozenset[int]  # T: truthful matches the college gives up
    gained: frozenset[int]  # S*: new matches
    temp_accepts: frozenset[int]  # U: held for a while, not kept, below all of T
    daa_runs: int = 0
    budget_runs: int = 0
    iterations: int = 0
    search: str = ""
    trace: ProposalTrace | None = field(default=None, repr=False, compare=False)

    @property
    def outcome(self) -> frozenset[int]:
        return self.result_matching.of_college(self.college)

    @property
    def is_truthful(self) -> bool:
        return self.outcome == self.truthful_set

    def summary(self, market: Market) -> dict:
        names = market.student_names

        def named(xs):
            return sorted((names[x] for x in xs), key=names.index)

        return {
            "college": market.college_names[self.college],
            "variant": self.variant.value,
            "reportedList": [names[s] for s in self.reported_list],
            "truthfulMatch": named(self.truthful_set),
            "manipulatedMatch": named(self.outcome),
            "lost": named(self.lost),
            "gained": named(self.gained),
            "tempAccepts": named(self.temp_accepts),
            "daaRuns": self.daa_runs,
            "iterations": self.iterations,
            "search": self.search,
            "matching": self.result_matching.to_dict(market),
        }


@dataclass(frozen=True)
class SeatMapping:
    """``seats_of[c]`` lists the unit-capacity seats standing in for college ``c``."""

    seats_of: tuple[tuple[int, ...], ...]
    parent: tuple[int, ...]

    def lift(self, seat_matching: Matching, n_colleges: int) -> Matching:
        """Map a matching of the seat market back onto the original colleges."""
        parent = np.asarray(self.parent, dtype=np.int64)
        sm = seat_matching.student_match
        return Matching(np.where(sm >= 0, parent[np.maximum(sm, 0)], -1), n_colleges)


def split_to_one_to_one(market: Market) -> tuple[Market, SeatMapping]:
    """Replace every college by ``q(c)`` capacity-one seats.

    Seats copy their college's list; each student's list replaces ``c`` by
    the block ``c^1 > c^2 > ... > c^q(c)`` in place.
    """
    seats_of: list[tuple[int, ...]] = []
    parent: list[int] = []
    names: list[str] = []
    for c, q in enumerate(market.capacities.tolist()):
        first = len(parent)
        seats_of.append(tuple(range(first, first + q)))
        parent.extend([c] * q)
        names.extend(f"{market.college_names[c]}^{i + 1}" for i in range(q))
    student_prefs = [
        [seat for c in row for seat in seats_of[c]] for row in market.student_prefs.tolist()
    ]
    college_prefs = [market.college_prefs[c] for c in parent]
    derived = Market.from_lists(
        student_prefs, college_prefs, [1] * len(parent), market.student_names, names
    )
    return derived, SeatMapping(tuple(seats_of), tuple(parent))


# ---------------------------------------------------------------------------
# shared helpers


@dataclass
class SearchStats:
    """Mutable tally a caller can pass to a finder to see how much work it did,
    also when the finder returns None."""

    daa_runs: int = 0
    budget_runs: int = 0  # runs spent in the bounded subset phase
    pruned: bool = False
    calls: int = 0

    def merge(self, other: "SearchStats") -> None:
        self.daa_runs += other.daa_runs
        self.budget_runs += other.budget_runs
        self.calls += other.calls


class _Judge:
    """Scores outcome sets of one college under its true order."""

    def __init__(self, market: Market, college: int):
        self.rank = market.profile.college_rank[college]
        self.capacity = int(market.capacities[college])

    def key(self, members) -> tuple[int, ...]:
        return padded_ranks(self.rank, members, self.capacity)

    def compare(self, a, b) -> Dominance:
        return compare_rank_vectors(self.key(a), self.key(b))

    def beats(self, a, b) -> bool:
        return self.compare(a, b) is Dominance.STRICTLY_BETTER


def _demoted(order: Sequence[int], student: int, position: int) -> list[int]:
    rest = [s for s in order if s != student]
    rest.insert(position, student)
    return rest


def ever_held(trace: ProposalTrace, college: int) -> frozenset[int]:
    """Students tentatively matched with ``college`` at some point of the run.

    Every offer is either held on arrival or refused on the spot, so these are
    the college's counterparts in proposals minus those refused immediately.
    """
    props, rej = trace.proposals, trace.rejections
    refused = rej[:, kernels.REJ_KIND] == kernels.REFUSED
    if trace.variant is Variant.STUDENT_PROPOSING:
        met = props[props[:, kernels.PROP_TO] == college, kernels.PROP_FROM]
        turned = rej[refused & (rej[:, kernels.REJ_BY] == college), kernels.REJ_WHO]
    else:
        met = props[props[:, kernels.PROP_FROM] == college, kernels.PROP_TO]
        turned = rej[refused & (rej[:, kernels.REJ_WHO] == college), kernels.REJ_BY]
    return frozenset(met.tolist()) - frozenset(turned.tolist())


def temp_accepts(
    trace: ProposalTrace, college: int, outcome: frozenset[int], lost: frozenset[int], rank: np.ndarray
) -> frozenset[int]:
    """U: students held for a while but not kept, each truly below all of ``lost``."""
    if not lost:
        return frozenset()
    floor = max(rank[t] for t in lost)
    return frozenset(u for u in ever_held(trace, college) - outcome if rank[u] > floor)


def _report(
    inputs: KernelInputs,
    market: Market,
    college: int,
    variant: Variant,
    reported: Sequence[int],
    truthful: frozenset[int],
    stats: SearchStats,
    iterations: int = 0,
    search: str = "",
) -> ManipulationReport:
    raw = inputs.with_report(college, reported).run(record=True)
    trace = ProposalTrace(variant, raw.proposals, raw.rejections, raw.n_proposed, raw.n_received)
    outcome = raw.college_set(college)
    lost = truthful - outcome
    rank = market.profile.college_rank[college]
    return ManipulationReport(
        college=college,
        variant=variant,
        reported_list=tuple(int(s) for s in reported),
        result_matching=raw.matching(),
        truthful_set=truthful,
        lost=lost,
        gained=outcome - truthful,
        temp_accepts=temp_accepts(trace, college, outcome, lost, rank),
        daa_runs=stats.daa_runs,
        budget_runs=stats.budget_runs,
        iterations=iterations,
        search=search,
        trace=trace,
    )


def _start(stats: SearchStats | None) -> SearchStats:
    local = SearchStats(calls=1)
    if stats is not None:
        stats.calls += 1
    return local


def _finish(stats: SearchStats | None, local: SearchStats) -> None:
    if stats is not None:
        stats.daa_runs += local.daa_runs
        stats.budget_runs += local.budget_runs
        stats.pruned = local.pruned


def evaluate_report(
    market: Market, college: int, variant: Variant | str, reported: Sequence[int]
) -> ManipulationReport:
    """Outcome of ``college`` submitting ``reported`` with everyone else truthful."""
    variant = Variant.parse(variant)
    inputs = KernelInputs.build(market, variant)
    truthful = inputs.run().college_set(college)
    return _report(inputs, market, college, variant, reported, truthful, SearchStats(daa_runs=1))


def truthful_run(market: Market, variant: Variant | str) -> RawOutcome:
    return KernelInputs.build(market, Variant.parse(variant)).run()


def _search(inputs, judge, college, reports, reference, stats, stop_at_first):
    """Evaluate candidate reports and keep ``(key, n_lost, report, outcome)``
    for those whose outcome strictly beats ``reference``."""
    found = []
    for report in reports:
        outcome = inputs.with_report(college, report).run().college_set(college)
        stats.daa_runs += 1
        if judge.beats(outcome, reference):
            found.append((judge.key(outcome), len(reference - outcome), list(report), outcome))
            if stop_at_first:
                break
    return found


def _pick(candidates):
    # the lexicographically smallest rank vector is never strictly dominated
    # by another candidate, so it is a dominance-maximal choice
    return min(candidates, key=lambda cand: (cand[0], cand[2]))


def _climb(inputs, judge, college, start, step, stats):
    """Explore every outcome reachable by strict improvements from ``start``.

    ``step(current)`` yields candidate reports aimed at improving on
    ``current``.  Returns ``(outcome, report, depth)`` for a dominance-maximal
    outcome among those reached (``report`` is None for ``start`` itself).
    Following only one improvement per step can get stuck on an outcome that
    is incomparable with a better one reachable from a sibling.
    """
    reached = {start: (None, 0)}
    stack = [start]
    while stack:
        current = stack.pop()
        depth = reached[current][1]
        for _, _, report, outcome in _search(inputs, judge, college, step(current), current, stats, False):
            if outcome not in reached:
                reached[outcome] = (report, depth + 1)
                stack.append(outcome)
    best = min(reached, key=lambda o: (judge.key(o), reached[o][0] or []))
    report, depth = reached[best]
    return best, report, depth


# ---------------------------------------------------------------------------
# student-proposing DAA: the college is a proposee


def can_gain_student_proposing(market: Market, college: int, truthful: RawOutcome | None = None) -> bool:
    """Necessary condition for manipulability: the college fills its quota and
    receives more proposals than it has seats in the truthful run."""
    if truthful is None:
        truthful = truthful_run(market, Variant.STUDENT_PROPOSING)
    q = int(market.capacities[college])
    return int(truthful.n_held[college]) == q and int(truthful.n_received[college]) > q


def demotion_reports(true_order: Sequence[int], rank: np.ndarray, held: frozenset[int], helpers=None):
    """Reports moving one held student further down the true list."""
    pos = {s: i for i, s in enumerate(true_order)}
    for t in sorted(held, key=lambda s: -rank[s]):
        for j in range(pos[t] + 1, len(true_order)):
            yield _demoted(true_order, t, j)


def helper_reports(true_order: Sequence[int], rank: np.ndarray, held: frozenset[int], helpers=None):
    """Reports built to drop one member ``t`` of ``held``.

    The report lists, in true order, every student truly preferred to ``t``
    together with the rest of ``held``; then a helper ``u`` (truly below
    ``t``), then ``t``, then everyone else in true order.  The college is thus
    willing to swap ``t`` for ``u`` and ``u`` for anyone it truly prefers to
    ``t``.  ``helpers`` restricts the candidates for ``u``.
    """
    for t in sorted(held, key=lambda s: -rank[s]):
        top = [s for s in true_order if rank[s] < rank[t] or (s in held and s != t)]
        top_set = set(top)
        for u in true_order:
            if u in held or rank[u] < rank[t] or (helpers is not None and u not in helpers):
                continue
            rest = [s for s in true_order if s not in top_set and s != u and s != t]
            yield top + [u, t] + rest


FAMILIES = {"helper": helper_reports, "demotion": demotion_reports}


def proposers_to(market: Market, truthful: RawOutcome, college: int) -> frozenset[int]:
    """Students who proposed to ``college`` in a student-proposing run: each
    student proposes down a prefix of his list of length ``n_proposed``."""
    srank = market.profile.student_rank
    return frozenset(np.flatnonzero(srank[:, college] < truthful.n_proposed).tolist())


def find_manipulation_student_proposing(
    market: Market,
    college: int,
    best: bool = True,
    family: str = "helper",
    stats: SearchStats | None = None,
) -> ManipulationReport | None:
    """Beneficial report for ``college`` under student-proposing DAA, or None.

    Every candidate report gives up exactly one truthful match.  The default
    ``"helper"`` family (see :func:`helper_reports`) uses as helpers only
    students who proposed to the college in the truthful run; ``"demotion"``
    merely moves one match further down the true list and can miss
    manipulations.  With ``best`` unset the first beneficial report is
    returned; otherwise a dominance-maximal one among those losing a single
    match.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown report family {family!r}")
    local = _start(stats)
    variant = Variant.STUDENT_PROPOSING
    inputs = KernelInputs.build(market, variant)
    truthful = inputs.run()
    if not can_gain_student_proposing(market, college, truthful):
        local.pruned = True
        _finish(stats, local)
        return None
    mu_c = truthful.college_set(college)
    judge = _Judge(market, college)
    true_order = market.college_prefs[college].tolist()
    helpers = proposers_to(market, truthful, college) - mu_c
    reports = FAMILIES[family](true_order, judge.rank, mu_c, helpers)
    found = _search(inputs, judge, college, reports, mu_c, local, not best)
    _finish(stats, local)
    if not found:
        return None
    single = [cand for cand in found if cand[1] == 1]
    _, _, report, _ = _pick(single or found)
    return _report(inputs, market, college, variant, report, mu_c, local, search=family)


def find_optimal_manipulation_student_proposing(
    market: Market, college: int, stats: SearchStats | None = None
) -> ManipulationReport:
    """Best report for ``college`` under student-proposing DAA.

    Starting from the truthful outcome, helper reports aimed at the outcome
    reached so far are tried, and every strict improvement (under the true
    order) is explored in turn.  The returned report leads to a
    dominance-maximal outcome among those reached; it is the truthful list
    when nothing helps.  ``iterations`` is the number of improvement steps
    behind the returned outcome.
    """
    local = _start(stats)
    variant = Variant.STUDENT_PROPOSING
    inputs = KernelInputs.build(market, variant)
    truthful = inputs.run()
    mu_c = truthful.college_set(college)
    true_order = market.college_prefs[college].tolist()
    report, depth = None, 0
    if can_gain_student_proposing(market, college, truthful):
        judge = _Judge(market, college)
        _, report, depth = _climb(
            inputs, judge, college, mu_c, lambda cur: helper_reports(true_order, judge.rank, cur), local
        )
    else:
        local.pruned = True
    _finish(stats, local)
    return _report(
        inputs, market, college, variant, report or true_order, mu_c, local, depth, search="helper"
    )


@dataclass(frozen=True)
class SeatWitness:
    report: tuple[int, ...]
    seat_matching: Matching
    lifted: Matching


def find_manipulation_via_seats(market: Market, college: int) -> SeatWitness | None:
    """Student-proposing manipulability decided in the unit-capacity seat market.

    Every seat of ``college`` submits the same candidate report; the seat
    outcome is lifted back to ``college`` and compared with its truthful set.
    Seats manipulating one at a time are not enough: rejecting a student from
    one seat can simply hand it to a sibling seat.
    """
    derived, mapping = split_to_one_to_one(market)
    seat_inputs = KernelInputs.build(derived, Variant.STUDENT_PROPOSING)
    seat_truth = seat_inputs.run()
    seats = mapping.seats_of[college]
    mu_c = frozenset().union(*(seat_truth.college_set(x) for x in seats))
    q = int(market.capacities[college])
    # a student who moves down the block proposes to several seats
    proposers = frozenset().union(*(proposers_to(derived, seat_truth, x) for x in seats))
    if len(mu_c) < q or len(proposers) <= q:
        return None
    judge = _Judge(market, college)
    true_order = market.college_prefs[college].tolist()
    for report in helper_reports(true_order, judge.rank, mu_c, proposers - mu_c):
        inputs = seat_inputs
        for x in seats:
            inputs = inputs.with_report(x, report)
        raw = inputs.run()
        outcome = frozenset().union(*(raw.college_set(x) for x in seats))
        if judge.beats(outcome, mu_c):
            seat_matching = raw.matching()
            return SeatWitness(tuple(report), seat_matching, mapping.lift(seat_matching, market.n_colleges))
    return None


# ---------------------------------------------------------------------------
# college-proposing DAA: the college is a proposer


def withheld_report(true_order: Sequence[int], withheld: Sequence[int]) -> list[int]:
    """True order over everyone outside ``withheld``, then ``withheld`` in true order."""
    w = set(withheld)
    return [s for s in true_order if s not in w] + [s for s in true_order if s in w]


def targeted_report(true_order: Sequence[int], target: Sequence[int]) -> list[int]:
    """``target`` first, then everyone else, both in true order.

    A college proposing this list opens with offers to exactly ``target``;
    if nobody in it ever leaves, the college ends with ``target``.
    """
    return withheld_report(true_order, [s for s in true_order if s not in set(target)])


def subset_reports(true_order: Sequence[int], rank: np.ndarray, held: frozenset[int]):
    """Reports pushing a non-empty subset of ``held`` without its least
    preferred member to the bottom; ``2**(q-1) - 1`` of them."""
    least = max(held, key=lambda s: rank[s])
    pool = sorted((s for s in held if s != least), key=lambda s: rank[s])
    for size in range(1, len(pool) + 1):
        for withheld in itertools.combinations(pool, size):
            yield withheld_report(true_order, withheld)


def swap_reports(true_order: Sequence[int], rank: np.ndarray, held: frozenset[int], offered: Sequence[int]):
    """Targeted reports for every set obtained from ``held`` by replacing one
    member with a truly better student out of ``offered``."""
    for t in sorted(held, key=lambda s: -rank[s]):
        for s in offered:
            if s not in held and rank[s] < rank[t]:
                yield targeted_report(true_order, (held - {t}) | {s})


def find_manipulation_college_proposing(
    market: Market,
    college: int,
    optimal: bool = False,
    complete: bool = True,
    stats: SearchStats | None = None,
) -> ManipulationReport | None:
    """Beneficial report for ``college`` under college-proposing DAA, or None.

    The first phase tries the ``2**(q-1) - 1`` reports that push a subset of
    the truthful match (never its least preferred member) to the bottom.
    That family misses some manipulations, so unless ``complete`` is unset a
    second phase tries targeted reports: for each set reachable from the
    truthful match by swapping one member for a better student the college
    offered a seat to, the college proposes to that set first.  With
    ``optimal`` set, improvements are followed through further swaps until
    none helps and a dominance-maximal outcome is returned.
    """
    local = _start(stats)
    variant = Variant.COLLEGE_PROPOSING
    inputs = KernelInputs.build(market, variant)
    truthful = inputs.run()
    q = int(market.capacities[college])
    mu_c = truthful.college_set(college)
    if q == 1 or len(mu_c) < q:
        local.pruned = True
        _finish(stats, local)
        return None
    judge = _Judge(market, college)
    true_order = market.college_prefs[college].tolist()
    offered = true_order[: int(truthful.n_proposed[college])]

    found = _search(
        inputs, judge, college, subset_reports(true_order, judge.rank, mu_c), mu_c, local, not optimal
    )
    local.budget_runs = local.daa_runs
    search = "subsets"
    if complete and (optimal or not found):
        more = _search(
            inputs, judge, college, swap_reports(true_order, judge.rank, mu_c, offered), mu_c, local, not optimal
        )
        if more and not found:
            search = "swaps"
        found += more
    if not found:
        _finish(stats, local)
        return None
    _, _, report, outcome = _pick(found)
    depth = 1
    if optimal and complete:
        best, better, extra = _climb(
            inputs, judge, college, outcome, lambda cur: swap_reports(true_order, judge.rank, cur, offered), local
        )
        if better is not None:
            report, depth, search = better, depth + extra, "swaps"
    _finish(stats, local)
    return _report(inputs, market, college, variant, report, mu_c, local, depth if optimal else 0, search)


def find_manipulation_by_subsets(
    market: Market, college: int, variant: Variant | str, stats: SearchStats | None = None
) -> ManipulationReport | None:
    """The subset-withholding search applied under either DAA variant.

    Colleges with a single seat or an unfilled quota are skipped, otherwise
    the ``2**(q-1) - 1`` reports of :func:`subset_reports` are tried until one
    is beneficial.  This is a heuristic for student-proposing DAA, where the
    exact finder is :func:`find_manipulation_student_proposing`; it exists to
    replicate experiments run with this procedure for both variants.
    """
    variant = Variant.parse(variant)
    local = _start(stats)
    inputs = KernelInputs.build(market, variant)
    mu_c = inputs.run().college_set(college)
    q = int(market.capacities[college])
    if q == 1 or len(mu_c) < q:
        local.pruned = True
        _finish(stats, local)
        return None
    judge = _Judge(market, college)
    true_order = market.college_prefs[college].tolist()
    found = _search(inputs, judge, college, subset_reports(true_order, judge.rank, mu_c), mu_c, local, True)
    local.budget_runs = local.daa_runs
    _finish(stats, local)
    if not found:
        return None
    return _report(inputs, market, college, variant, found[0][2], mu_c, local, search="subsets")


def proposed_prefix(report: ManipulationReport) -> frozenset[int]:
    """Students the college proposed to in a college-proposing run."""
    n = int(report.trace.n_proposed[report.college])
    return frozenset(report.reported_list[:n])


# ---------------------------------------------------------------------------
# exhaustive oracle


@dataclass(frozen=True)
class OracleResult:
    decision: bool
    truthful: frozenset[int]
    outcomes: frozenset[frozenset[int]]
    maximal_outcomes: frozenset[frozenset[int]]
    reports_tried: int


def brute_force_oracle(
    market: Market,
    college: int,
    variant: Variant | str,
    max_students: int = DEFAULT_ORACLE_GUARD,
) -> OracleResult:
    """Run DAA for every one of the ``n!`` lists ``college`` could submit."""
    variant = Variant.parse(variant)
    n = market.n_students
    if n > max_students:
        raise OracleSizeError(
            f"oracle enumerates {n}! = {math.factorial(n)} reports; guard is {max_students} students"
        )
    if n > 62:
        raise OracleSizeError("oracle bitmasks support at most 62 students")
    inputs = KernelInputs.build(market, variant)
    truthful = inputs.run().college_set(college)
    masks = kernels.enumerate_report_outcomes(
        inputs.prop_prefs,
        inputs.proposee_rank,
        inputs.prop_cap,
        inputs.proposee_cap,
        college,
        inputs.college_proposes,
    )
    outcomes = frozenset(
        frozenset(s for s in range(n) if (m >> s) & 1) for m in np.unique(masks).tolist()
    )
    judge = _Judge(market, college)
    decision = any(judge.beats(o, truthful) for o in outcomes)
    maximal = frozenset(o for o in outcomes if not any(judge.beats(p, o) for p in outcomes))
    return OracleResult(decision, truthful, outcomes, maximal, len(masks))
