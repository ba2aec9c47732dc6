"""The ten-student, five-college market with a known beneficial misreport.

Cells of the published profile that were left unspecified are completed with
the remaining agents in index order; the outcome does not depend on them.
"""
from __future__ import annotations

from .model import Market

STUDENTS = ("s1", "s2", "s3", "s4", "t1", "t2", "t3", "u1", "u2", "u3")
COLLEGES = ("c", "c1", "c2", "c3", "c4")

_STUDENT_HEADS = {
    "s1": ["c1", "c2"],
    "s2": ["c2", "c3", "c"],
    "s3": ["c3", "c"],
    "s4": ["c4", "c"],
    "t1": ["c", "c1"],
    "t2": ["c", "c2", "c4"],
    "t3": ["c", "c3"],
}
_STUDENT_TAILS = {u: ["c"] for u in ("u1", "u2", "u3")}

_COLLEGE_HEADS = {
    "c": ["s4", "t3", "s2", "t1", "s3", "t2", "s1"],
    "c1": ["t1", "s1"],
    "c2": ["s1", "t2", "s2"],
    "c3": ["t3", "s2", "s3"],
    "c4": ["t2", "s4"],
}
_COLLEGE_TAIL = ["u1", "u2", "u3"]

MANIPULATING_COLLEGE = "c"
MISREPORT = ("s4", "s2", "s3", "u1", "u2", "u3", "s1", "t3", "t1", "t2")

TRUTHFUL_OUTCOME = {
    "s1": "c1", "s2": "c2", "s3": "c3", "s4": "c4",
    "t1": "c", "t2": "c", "t3": "c",
    "u1": None, "u2": None, "u3": None,
}
MANIPULATED_OUTCOME = {
    "s1": "c2", "s2": "c", "s3": "c", "s4": "c",
    "t1": "c1", "t2": "c4", "t3": "c3",
    "u1": None, "u2": None, "u3": None,
}


def _complete(head, tail, universe):
    middle = [x for x in universe if x not in head and x not in tail]
    return list(head) + middle + list(tail)


def example_market() -> Market:
    s_idx = {n: i for i, n in enumerate(STUDENTS)}
    c_idx = {n: i for i, n in enumerate(COLLEGES)}
    student_prefs = []
    for s in STUDENTS:
        order = _complete(_STUDENT_HEADS.get(s, []), _STUDENT_TAILS.get(s, []), COLLEGES)
        student_prefs.append([c_idx[c] for c in order])
    college_prefs = []
    for c in COLLEGES:
        order = _complete(_COLLEGE_HEADS[c], _COLLEGE_TAIL, STUDENTS)
        college_prefs.append([s_idx[s] for s in order])
    capacities = [3, 1, 1, 1, 1]
    return Market.from_lists(student_prefs, college_prefs, capacities, STUDENTS, COLLEGES)


def misreport_indices() -> list[int]:
    s_idx = {n: i for i, n in enumerate(STUDENTS)}
    return [s_idx[s] for s in MISREPORT]
