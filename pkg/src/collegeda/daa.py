"""Student-proposing and college-proposing deferred acceptance."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import MalformedInputError
from .model import UNMATCHED, Market, Matching, is_permutation


class Variant(str, enum.Enum):
    STUDENT_PROPOSING = "studentProposing"
    COLLEGE_PROPOSING = "collegeProposing"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        aliases = {
            "student": cls.STUDENT_PROPOSING,
            "studentproposing": cls.STUDENT_PROPOSING,
            "sp": cls.STUDENT_PROPOSING,
            "college": cls.COLLEGE_PROPOSING,
            "collegeproposing": cls.COLLEGE_PROPOSING,
            "cp": cls.COLLEGE_PROPOSING,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown DAA variant {value!r}") from None

    @property
    def short(self) -> str:
        return "student" if self is Variant.STUDENT_PROPOSING else "college"


@dataclass(frozen=True)
class KernelInputs:
    """Contiguous int64 arrays in the proposer/proposee orientation of a variant."""

    prop_prefs: np.ndarray
    proposee_rank: np.ndarray
    prop_cap: np.ndarray
    proposee_cap: np.ndarray
    college_proposes: bool

    @classmethod
    def build(cls, market: Market, variant: Variant) -> "KernelInputs":
        p = market.profile
        ones_s = np.ones(market.n_students, dtype=np.int64)
        caps = np.ascontiguousarray(market.capacities, dtype=np.int64)
        if variant is Variant.STUDENT_PROPOSING:
            return cls(
                np.ascontiguousarray(p.student_prefs, dtype=np.int64),
                np.ascontiguousarray(p.college_rank, dtype=np.int64),
                ones_s,
                caps,
                False,
            )
        return cls(
            np.ascontiguousarray(p.college_prefs, dtype=np.int64),
            np.ascontiguousarray(p.student_rank, dtype=np.int64),
            caps,
            ones_s,
            True,
        )

    def with_report(self, college: int, report: Sequence[int]) -> "KernelInputs":
        """Inputs in which ``college`` submits ``report`` (best first)."""
        report = np.asarray(report, dtype=np.int64)
        if self.college_proposes:
            prefs = self.prop_prefs.copy()
            prefs[college] = report
            return KernelInputs(prefs, self.proposee_rank, self.prop_cap, self.proposee_cap, True)
        ranks = self.proposee_rank.copy()
        ranks[college, report] = np.arange(report.size, dtype=np.int64)
        return KernelInputs(self.prop_prefs, ranks, self.prop_cap, self.proposee_cap, False)

    def run(self, order: np.ndarray | None = None, record: bool = False) -> "RawOutcome":
        if order is None:
            order = np.arange(self.prop_prefs.shape[0], dtype=np.int64)
        res = kernels.deferred_acceptance(
            self.prop_prefs, self.proposee_rank, self.prop_cap, self.proposee_cap, order, record
        )
        return RawOutcome(*res, college_proposes=self.college_proposes)


@dataclass(frozen=True)
class RawOutcome:
    held: np.ndarray
    n_held: np.ndarray
    n_proposed: np.ndarray
    n_received: np.ndarray
    proposals: np.ndarray
    rejections: np.ndarray
    college_proposes: bool

    def student_match(self) -> np.ndarray:
        if self.college_proposes:
            return np.where(self.n_held > 0, self.held[:, 0], UNMATCHED)
        n_s = self.n_proposed.shape[0]
        sm = np.full(n_s, UNMATCHED, dtype=np.int64)
        for c in range(self.held.shape[0]):
            sm[self.held[c, : self.n_held[c]]] = c
        return sm

    def college_set(self, college: int) -> frozenset[int]:
        if self.college_proposes:
            return frozenset(np.flatnonzero((self.n_held > 0) & (self.held[:, 0] == college)).tolist())
        return frozenset(self.held[college, : self.n_held[college]].tolist())

    def matching(self) -> Matching:
        n_c = self.n_proposed.shape[0] if self.college_proposes else self.held.shape[0]
        return Matching(self.student_match(), n_c)


@dataclass(frozen=True)
class ProposalTrace:
    """Proposal and rejection history of one DAA execution.

    ``proposals`` rows are ``(round, proposer, proposee)``; ``rejections`` rows
    are ``(round, rejecter, rejected, in_favor_of, kind)`` where ``kind`` is
    :data:`kernels.DISPLACED` (a held proposer pushed out by ``in_favor_of``,
    a newcomer) or :data:`kernels.REFUSED` (the newcomer turned away because
    ``in_favor_of``, the worst holder at that moment, is preferred).  For
    student-proposing runs proposers are students; for college-proposing runs
    proposers are colleges.
    """

    variant: Variant
    proposals: np.ndarray
    rejections: np.ndarray
    n_proposed: np.ndarray
    n_received: np.ndarray

    @property
    def n_rounds(self) -> int:
        return int(self.proposals[:, 0].max()) + 1 if len(self.proposals) else 0

    def received_by(self, proposee: int) -> list[tuple[int, int]]:
        """``(round, proposer)`` pairs in arrival order."""
        rows = self.proposals[self.proposals[:, kernels.PROP_TO] == proposee]
        return [(int(r), int(p)) for r, p in rows[:, :2]]

    def proposed_by(self, proposer: int) -> list[tuple[int, int]]:
        rows = self.proposals[self.proposals[:, kernels.PROP_FROM] == proposer]
        return [(int(r), int(q)) for r, q in rows[:, [0, 2]]]

    def rejection_list(self) -> list[tuple[int, int, int | None]]:
        """Chronological ``(rejecter, rejected, in_favor_of)`` triples."""
        return [
            (int(by), int(who), None if fav < 0 else int(fav))
            for by, who, fav in self.rejections[:, 1:4]
        ]

    def rejections_by(self, proposee: int) -> np.ndarray:
        return self.rejections[self.rejections[:, kernels.REJ_BY] == proposee]


def run_daa(
    market: Market,
    variant: Variant | str = Variant.STUDENT_PROPOSING,
    proposer_order: Sequence[int] | None = None,
) -> tuple[Matching, ProposalTrace]:
    """Run deferred acceptance on ``market``.

    ``proposer_order`` is a permutation of the proposing side fixing the order
    in which proposers act inside each round; the outcome does not depend on
    it.
    """
    variant = Variant.parse(variant)
    inputs = KernelInputs.build(market, variant)
    n_p = inputs.prop_prefs.shape[0]
    if proposer_order is None:
        order = np.arange(n_p, dtype=np.int64)
    else:
        order = np.asarray(proposer_order, dtype=np.int64)
        if not is_permutation(order, n_p):
            raise MalformedInputError(f"proposer order must be a permutation of {n_p} proposers")
    raw = inputs.run(order, record=True)
    trace = ProposalTrace(variant, raw.proposals, raw.rejections, raw.n_proposed, raw.n_received)
    return raw.matching(), trace


def daa_matching(market: Market, variant: Variant | str = Variant.STUDENT_PROPOSING) -> Matching:
    """Outcome only, without recording the trace."""
    return KernelInputs.build(market, Variant.parse(variant)).run().matching()
