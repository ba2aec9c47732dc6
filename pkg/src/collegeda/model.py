"""Markets, matchings, responsive set comparison and stability checking.

Agents are dense integer indices (students ``0..n_students-1``, colleges
``0..n_colleges-1``); names only matter at the I/O boundary.  Preference
lists are stored best-first as rows of an integer matrix, together with the
inverse ("rank") tables used for O(1) comparisons.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInputError

UNMATCHED = -1


def _frozen(a, dtype=np.int64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def is_permutation(row: Sequence[int], n: int) -> bool:
    row = np.asarray(row)
    if row.shape != (n,):
        return False
    seen = np.zeros(n, dtype=bool)
    if n and (row.min() < 0 or row.max() >= n):
        return False
    seen[row] = True
    return bool(seen.all())


def inverse_rows(prefs: np.ndarray) -> np.ndarray:
    """rank[i, prefs[i, k]] = k for every row."""
    rank = np.empty_like(prefs)
    n_rows, n_cols = prefs.shape
    rank[np.arange(n_rows)[:, None], prefs] = np.arange(n_cols)[None, :]
    return rank


@dataclass(frozen=True, eq=False)
class PreferenceProfile:
    """Complete strict preferences of both sides, best first.

    ``student_prefs`` has shape ``(n_students, n_colleges)`` and
    ``college_prefs`` has shape ``(n_colleges, n_students)``.
    """

    student_prefs: np.ndarray
    college_prefs: np.ndarray

    def __post_init__(self):
        sp = _frozen(self.student_prefs)
        cp = _frozen(self.college_prefs)
        if sp.ndim != 2 or cp.ndim != 2:
            raise MalformedInputError("preference tables must be two-dimensional")
        n_s, n_c = sp.shape
        if cp.shape != (n_c, n_s):
            raise MalformedInputError(
                f"college preference table has shape {cp.shape}, expected {(n_c, n_s)}"
            )
        for s in range(n_s):
            if not is_permutation(sp[s], n_c):
                raise MalformedInputError(f"student {s}: list is not a permutation of all colleges")
        for c in range(n_c):
            if not is_permutation(cp[c], n_s):
                raise MalformedInputError(f"college {c}: list is not a permutation of all students")
        object.__setattr__(self, "student_prefs", sp)
        object.__setattr__(self, "college_prefs", cp)

    @property
    def n_students(self) -> int:
        return self.student_prefs.shape[0]

    @property
    def n_colleges(self) -> int:
        return self.college_prefs.shape[0]

    @cached_property
    def student_rank(self) -> np.ndarray:
        r = inverse_rows(self.student_prefs)
        r.setflags(write=False)
        return r

    @cached_property
    def college_rank(self) -> np.ndarray:
        r = inverse_rows(self.college_prefs)
        r.setflags(write=False)
        return r

    def __eq__(self, other):
        if not isinstance(other, PreferenceProfile):
            return NotImplemented
        return np.array_equal(self.student_prefs, other.student_prefs) and np.array_equal(
            self.college_prefs, other.college_prefs
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Market:
    """A college admissions market ``(C, S, q, >)``."""

    capacities: np.ndarray
    profile: PreferenceProfile
    student_names: tuple[str, ...] = field(default=())
    college_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        caps = _frozen(self.capacities)
        if caps.shape != (self.profile.n_colleges,):
            raise MalformedInputError(
                f"expected {self.profile.n_colleges} capacities, got shape {caps.shape}"
            )
        if caps.size and caps.min() < 1:
            raise MalformedInputError("every college needs capacity >= 1")
        object.__setattr__(self, "capacities", caps)
        s_names = tuple(self.student_names) or tuple(f"s{i}" for i in range(self.n_students))
        c_names = tuple(self.college_names) or tuple(f"c{i}" for i in range(self.n_colleges))
        for side, names, n in (("student", s_names, self.n_students), ("college", c_names, self.n_colleges)):
            if len(names) != n:
                raise MalformedInputError(f"{len(names)} {side} names for {n} {side}s")
            if len(set(names)) != n:
                raise MalformedInputError(f"{side} names are not unique")
        object.__setattr__(self, "student_names", s_names)
        object.__setattr__(self, "college_names", c_names)

    @classmethod
    def from_lists(
        cls,
        student_prefs: Sequence[Sequence[int]],
        college_prefs: Sequence[Sequence[int]],
        capacities: Sequence[int],
        student_names: Iterable[str] = (),
        college_names: Iterable[str] = (),
    ) -> "Market":
        n_s, n_c = len(student_prefs), len(college_prefs)
        sp = np.asarray(student_prefs, dtype=np.int64).reshape(n_s, n_c)
        cp = np.asarray(college_prefs, dtype=np.int64).reshape(n_c, n_s)
        return cls(np.asarray(capacities), PreferenceProfile(sp, cp), tuple(student_names), tuple(college_names))

    @property
    def n_students(self) -> int:
        return self.profile.n_students

    @property
    def n_colleges(self) -> int:
        return self.profile.n_colleges

    @property
    def student_prefs(self) -> np.ndarray:
        return self.profile.student_prefs

    @property
    def college_prefs(self) -> np.ndarray:
        return self.profile.college_prefs

    def with_college_list(self, college: int, order: Sequence[int]) -> "Market":
        """Copy of the market in which ``college`` reports ``order``."""
        cp = np.array(self.college_prefs)
        cp[college] = np.asarray(order)
        return Market(
            self.capacities,
            PreferenceProfile(self.student_prefs, cp),
            self.student_names,
            self.college_names,
        )

    def __eq__(self, other):
        if not isinstance(other, Market):
            return NotImplemented
        return (
            np.array_equal(self.capacities, other.capacities)
            and self.profile == other.profile
            and self.student_names == other.student_names
            and self.college_names == other.college_names
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Matching:
    """Assignment of students to colleges; ``UNMATCHED`` (-1) marks a free student."""

    student_match: np.ndarray
    n_colleges: int

    def __post_init__(self):
        sm = _frozen(self.student_match)
        if sm.ndim != 1:
            raise MalformedInputError("student_match must be one-dimensional")
        if sm.size and (sm.min() < UNMATCHED or sm.max() >= self.n_colleges):
            raise MalformedInputError("student matched to a non-existent college")
        object.__setattr__(self, "student_match", sm)

    @classmethod
    def from_college_sets(cls, sets: Sequence[Iterable[int]], n_students: int) -> "Matching":
        sm = np.full(n_students, UNMATCHED, dtype=np.int64)
        for c, members in enumerate(sets):
            for s in members:
                if sm[s] != UNMATCHED:
                    raise MalformedInputError(f"student {s} assigned to colleges {sm[s]} and {c}")
                sm[s] = c
        return cls(sm, len(sets))

    @cached_property
    def college_match(self) -> tuple[tuple[int, ...], ...]:
        """Members of each college in increasing index order."""
        out: list[list[int]] = [[] for _ in range(self.n_colleges)]
        for s, c in enumerate(self.student_match.tolist()):
            if c != UNMATCHED:
                out[c].append(s)
        return tuple(tuple(m) for m in out)

    def of_college(self, c: int) -> frozenset[int]:
        return frozenset(self.college_match[c])

    def of_student(self, s: int) -> int | None:
        c = int(self.student_match[s])
        return None if c == UNMATCHED else c

    def validate(self, market: Market) -> None:
        if self.student_match.shape != (market.n_students,) or self.n_colleges != market.n_colleges:
            raise MalformedInputError("matching does not fit the market dimensions")
        sizes = np.bincount(self.student_match[self.student_match >= 0], minlength=market.n_colleges)
        over = np.flatnonzero(sizes > market.capacities)
        if over.size:
            c = int(over[0])
            raise MalformedInputError(
                f"college {market.college_names[c]} holds {sizes[c]} students, capacity {market.capacities[c]}"
            )

    def to_dict(self, market: Market) -> dict:
        return {
            "students": {
                market.student_names[s]: (None if c == UNMATCHED else market.college_names[c])
                for s, c in enumerate(self.student_match.tolist())
            },
            "colleges": {
                market.college_names[c]: [market.student_names[s] for s in members]
                for c, members in enumerate(self.college_match)
            },
        }

    def __eq__(self, other):
        if not isinstance(other, Matching):
            return NotImplemented
        return self.n_colleges == other.n_colleges and np.array_equal(self.student_match, other.student_match)

    __hash__ = None

    def __repr__(self):
        return f"Matching({self.college_match!r})"


class Dominance(enum.Enum):
    STRICTLY_BETTER = "strictlyBetter"
    EQUAL = "equal"
    STRICTLY_WORSE = "strictlyWorse"
    INCOMPARABLE = "incomparable"


def compare_rank_vectors(a: Sequence[int], b: Sequence[int]) -> Dominance:
    """Slot-wise comparison of two padded rank vectors sorted best first
    (smaller rank is better)."""
    better = worse = False
    for x, y in zip(a, b):
        if x < y:
            better = True
        elif x > y:
            worse = True
    if better and worse:
        return Dominance.INCOMPARABLE
    if better:
        return Dominance.STRICTLY_BETTER
    if worse:
        return Dominance.STRICTLY_WORSE
    return Dominance.EQUAL


def padded_ranks(rank_of: np.ndarray | dict, members: Iterable[int], capacity: int) -> tuple[int, ...]:
    """Ranks of ``members`` sorted best first, padded with the empty-seat
    sentinel (ranked below every student) up to ``capacity`` slots."""
    ranks = sorted(int(rank_of[m]) for m in members)
    if len(ranks) > capacity:
        raise MalformedInputError(f"set of size {len(ranks)} exceeds capacity {capacity}")
    sentinel = len(rank_of)
    return tuple(ranks) + (sentinel,) * (capacity - len(ranks))


def responsive_dominates(
    true_order: Sequence, a: Iterable, b: Iterable, capacity: int | None = None
) -> Dominance:
    """Compare student sets ``a`` and ``b`` under the responsive extension of
    ``true_order`` (best first).

    Sets smaller than ``capacity`` are padded with empty seats that rank below
    every student.  ``capacity`` defaults to the larger of the two sets.
    """
    a, b = list(a), list(b)
    rank_of = {x: i for i, x in enumerate(true_order)}
    if len(rank_of) != len(true_order):
        raise MalformedInputError("true order contains duplicates")
    for x in a + b:
        if x not in rank_of:
            raise MalformedInputError(f"{x!r} does not appear in the true order")
    if len(set(a)) != len(a) or len(set(b)) != len(b):
        raise MalformedInputError("student sets must not contain duplicates")
    if capacity is None:
        capacity = max(len(a), len(b))
    ra = tuple(sorted(rank_of[x] for x in a))
    rb = tuple(sorted(rank_of[x] for x in b))
    if len(ra) > capacity or len(rb) > capacity:
        raise MalformedInputError(f"student set larger than capacity {capacity}")
    sentinel = len(rank_of)
    ra += (sentinel,) * (capacity - len(ra))
    rb += (sentinel,) * (capacity - len(rb))
    return compare_rank_vectors(ra, rb)


def blocking_pairs(market: Market, matching: Matching) -> list[tuple[int, int]]:
    """All pairs ``(s, c)`` that block ``matching``, sorted."""
    matching.validate(market)
    srank = market.profile.student_rank
    crank = market.profile.college_rank
    sm = matching.student_match
    n_s, n_c = market.n_students, market.n_colleges

    own = np.where(sm >= 0, srank[np.arange(n_s), np.maximum(sm, 0)], n_c)
    student_wants = srank < own[:, None]  # (s, c)

    sizes = np.bincount(sm[sm >= 0], minlength=n_c)
    worst = np.full(n_c, -1, dtype=np.int64)
    for s in np.flatnonzero(sm >= 0):
        c = sm[s]
        worst[c] = max(worst[c], crank[c, s])
    college_wants = (sizes < market.capacities)[:, None] | (crank < worst[:, None])  # (c, s)

    s_idx, c_idx = np.nonzero(student_wants & college_wants.T)
    return [(int(s), int(c)) for s, c in zip(s_idx, c_idx)]


def is_stable(market: Market, matching: Matching) -> tuple[bool, list[tuple[int, int]]]:
    pairs = blocking_pairs(market, matching)
    return not pairs, pairs
