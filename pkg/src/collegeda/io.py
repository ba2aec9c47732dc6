"""JSON market files.

A market file looks like::

    {"students": ["ann", "bob"],
     "colleges": [{"name": "X", "capacity": 1}, {"name": "Y", "capacity": 1}],
     "studentPrefs": {"ann": ["X", "Y"], "bob": ["Y", "X"]},
     "collegePrefs": {"X": ["ann", "bob"], "Y": ["bob", "ann"]}}

Lists are complete and best first.  Names only exist at this boundary; the
library itself works with indices.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from pathlib import Path
from typing import Any

import numpy as np

from .errors import MalformedInputError
from .model import Market, Matching


def _names(raw: Any, what: str) -> list[str]:
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise MalformedInputError(f"'{what}' must be a list of names")
    dup = [n for n, k in Counter(raw).items() if k > 1]
    if dup:
        raise MalformedInputError(f"duplicate {what} name {dup[0]!r}")
    return raw


def _ranking(agent: str, row: Any, index: dict[str, int], other: str) -> list[int]:
    if not isinstance(row, list):
        raise MalformedInputError(f"preference list of {agent!r} must be a list")
    unknown = [x for x in row if x not in index]
    if unknown:
        raise MalformedInputError(f"preference list of {agent!r} names unknown {other} {unknown[0]!r}")
    dup = [x for x, k in Counter(row).items() if k > 1]
    if dup:
        raise MalformedInputError(f"preference list of {agent!r} repeats {dup[0]!r}")
    if len(row) != len(index):
        missing = [x for x in index if x not in set(row)]
        raise MalformedInputError(
            f"preference list of {agent!r} is not a permutation of all {other}s (missing {missing[0]!r})"
        )
    return [index[x] for x in row]


def market_from_dict(d: dict) -> Market:
    if not isinstance(d, dict):
        raise MalformedInputError("market file must hold a JSON object")
    for key in ("students", "colleges", "studentPrefs", "collegePrefs"):
        if key not in d:
            raise MalformedInputError(f"market file lacks '{key}'")
    students = _names(d["students"], "student")
    colleges_raw = d["colleges"]
    if not isinstance(colleges_raw, list) or not all(
        isinstance(c, dict) and "name" in c and "capacity" in c for c in colleges_raw
    ):
        raise MalformedInputError("'colleges' must be a list of {\"name\", \"capacity\"} objects")
    colleges = _names([c["name"] for c in colleges_raw], "college")
    caps = []
    for c in colleges_raw:
        q = c["capacity"]
        if isinstance(q, bool) or not isinstance(q, int) or q < 1:
            raise MalformedInputError(f"college {c['name']!r} needs a positive integer capacity")
        caps.append(q)
    s_idx = {n: i for i, n in enumerate(students)}
    c_idx = {n: i for i, n in enumerate(colleges)}
    sp, cp = d["studentPrefs"], d["collegePrefs"]
    for key, table, names in (("studentPrefs", sp, students), ("collegePrefs", cp, colleges)):
        if not isinstance(table, dict):
            raise MalformedInputError(f"'{key}' must map agent names to lists")
        extra = [k for k in table if k not in set(names)]
        if extra:
            raise MalformedInputError(f"'{key}' has an entry for unknown agent {extra[0]!r}")
        missing = [n for n in names if n not in table]
        if missing:
            raise MalformedInputError(f"'{key}' lacks a list for {missing[0]!r}")
    student_prefs = [_ranking(s, sp[s], c_idx, "college") for s in students]
    college_prefs = [_ranking(c, cp[c], s_idx, "student") for c in colleges]
    return Market.from_lists(student_prefs, college_prefs, caps, students, colleges)


def market_to_dict(market: Market) -> dict:
    sn, cn = market.student_names, market.college_names
    return {
        "students": list(sn),
        "colleges": [{"name": cn[c], "capacity": int(q)} for c, q in enumerate(market.capacities)],
        "studentPrefs": {sn[s]: [cn[c] for c in row] for s, row in enumerate(market.student_prefs.tolist())},
        "collegePrefs": {cn[c]: [sn[s] for s in row] for c, row in enumerate(market.college_prefs.tolist())},
    }


def load_market(path: str | Path) -> Market:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInputError(f"cannot read market file {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return market_from_dict(data)


def dump_market(market: Market, path: str | Path | None = None) -> str:
    text = json.dumps(market_to_dict(market), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def matching_from_dict(market: Market, d: dict) -> Matching:
    """Inverse of :meth:`Matching.to_dict` (only the ``students`` part is read)."""
    c_idx = {n: i for i, n in enumerate(market.college_names)}
    table = d.get("students", d)
    sm = np.full(market.n_students, -1, dtype=np.int64)
    for s, name in enumerate(market.student_names):
        c = table.get(name)
        if c is not None:
            if c not in c_idx:
                raise MalformedInputError(f"student {name!r} matched to unknown college {c!r}")
            sm[s] = c_idx[c]
    return Matching(sm, market.n_colleges)


def profile_digest(market: Market) -> str:
    """Short content hash of preferences and capacities."""
    h = hashlib.sha256()
    for arr in (market.capacities, market.student_prefs, market.college_prefs):
        h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]
