"""Monte-Carlo manipulability experiments.

A work unit is one ``(size, generator, trial)`` triple.  It draws a single
preference profile, and every capacity method and DAA variant requested is
evaluated on that profile, so comparisons between variants and between
capacity methods are always made on matched instances.  Capacities depend on
the trial seed only, which makes method 2 start from the method-1 draw.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .daa import KernelInputs, Variant
from .errors import ConfigurationError, EmptyInputError
from .io import load_market, profile_digest
from .manipulation import (
    DEFAULT_ORACLE_GUARD,
    SearchStats,
    brute_force_oracle,
    find_manipulation_by_subsets,
    find_manipulation_college_proposing,
    find_manipulation_student_proposing,
)
from .model import Market
from .prefgen import CapacityMethod, CapacitySpec, GeneratorConfig, Side, gen_capacities, gen_profile

CSV_COLUMNS = (
    "nStudents",
    "nColleges",
    "generator",
    "phi",
    "mixtureSize",
    "capacityMethod",
    "variant",
    "trial",
    "seed",
    "profileDigest",
    "nManipulableColleges",
    "nEligibleColleges",
    "instanceManipulable",
    "daaMicros",
    "finderMicros",
)

DEFAULT_SEED = 20140801
FIXTURE_METHOD = "fixed"
FIXTURE_LABEL = "fixture"


@dataclass(frozen=True)
class ExperimentConfig:
    sizes: tuple[tuple[int, int], ...] = ((20, 4), (30, 5))
    trials: int = 200
    generators: tuple[GeneratorConfig, ...] = (GeneratorConfig(),)
    capacity_methods: tuple[CapacityMethod, ...] = (CapacityMethod.METHOD1, CapacityMethod.METHOD2)
    variants: tuple[Variant, ...] = (Variant.STUDENT_PROPOSING, Variant.COLLEGE_PROPOSING)
    master_seed: int = DEFAULT_SEED
    oracle_cross_check: bool = False
    search: str = "exact"
    fixture_market: str | None = None
    workers: int = 1
    timing: bool = False
    verbose: bool = False
    csv_path: str | None = None
    summary_path: str | None = None
    witness_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple((int(a), int(b)) for a, b in self.sizes))
        object.__setattr__(self, "generators", tuple(self.generators))
        try:
            object.__setattr__(
                self, "capacity_methods", tuple(CapacityMethod(m) for m in self.capacity_methods)
            )
            object.__setattr__(self, "variants", tuple(Variant.parse(v) for v in self.variants))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.variants:
            raise ConfigurationError("at least one DAA variant is required")
        if not self.sizes and self.fixture_market is None:
            raise ConfigurationError("no market sizes and no fixture market given")
        if self.sizes and not self.capacity_methods:
            raise ConfigurationError("at least one capacity method is required")
        if self.sizes and not self.generators:
            raise ConfigurationError("at least one generator is required")
        for n_s, n_c in self.sizes:
            if n_s < 1 or n_c < 1:
                raise ConfigurationError(f"market size ({n_s}, {n_c}) must be positive")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigurationError("variants listed twice")
        if self.search not in ("exact", "subsets"):
            raise ConfigurationError("search must be 'exact' or 'subsets'")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {
            "sizes", "trials", "generators", "capacityMethods", "variants", "masterSeed",
            "oracleCrossCheck", "search", "fixtureMarket", "workers", "timing",
            "verbose", "output",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
        out = d.get("output", {}) or {}
        try:
            return cls(
                sizes=tuple(tuple(s) for s in d.get("sizes", cls.sizes)),
                trials=int(d.get("trials", cls.trials)),
                generators=tuple(
                    GeneratorConfig.from_dict(g) for g in d.get("generators", [{"kind": "impartialCulture"}])
                ),
                capacity_methods=tuple(d.get("capacityMethods", [m.value for m in cls.capacity_methods])),
                variants=tuple(d.get("variants", [v.value for v in cls.variants])),
                master_seed=int(d.get("masterSeed", DEFAULT_SEED)),
                oracle_cross_check=bool(d.get("oracleCrossCheck", False)),
                search=d.get("search", "exact"),
                fixture_market=d.get("fixtureMarket"),
                workers=int(d.get("workers", 1)),
                timing=bool(d.get("timing", False)),
                verbose=bool(d.get("verbose", False)),
                csv_path=out.get("csv"),
                summary_path=out.get("summary"),
                witness_path=out.get("witnesses"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = {
            "sizes": [list(s) for s in self.sizes],
            "trials": self.trials,
            "generators": [g.to_dict() for g in self.generators],
            "capacityMethods": [m.value for m in self.capacity_methods],
            "variants": [v.value for v in self.variants],
            "masterSeed": self.master_seed,
            "oracleCrossCheck": self.oracle_cross_check,
            "search": self.search,
            "fixtureMarket": self.fixture_market,
            "workers": self.workers,
            "timing": self.timing,
            "verbose": self.verbose,
        }
        out = {"csv": self.csv_path, "summary": self.summary_path, "witnesses": self.witness_path}
        d["output"] = {k: v for k, v in out.items() if v is not None}
        return d


@dataclass(frozen=True)
class TrialRecord:
    n_students: int
    n_colleges: int
    generator: str
    phi: float | None
    mixture_size: int
    capacity_method: str
    variant: str
    trial: int
    seed: int
    profile_digest: str
    per_college: tuple[bool, ...]
    n_eligible: int
    instance_manipulable: bool
    daa_micros: int = 0
    finder_micros: int = 0
    oracle_mismatches: int = field(default=0, compare=False)
    witnesses: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_manipulable(self) -> int:
        return sum(self.per_college)

    @property
    def cell(self) -> tuple:
        return (self.n_students, self.n_colleges, self.generator, self.capacity_method, self.variant)

    def csv_row(self) -> list:
        return [
            self.n_students,
            self.n_colleges,
            self.generator,
            "" if self.phi is None else repr(self.phi),
            self.mixture_size,
            self.capacity_method,
            self.variant,
            self.trial,
            self.seed,
            self.profile_digest,
            self.n_manipulable,
            self.n_eligible,
            "true" if self.instance_manipulable else "false",
            self.daa_micros,
            self.finder_micros,
        ]

    @classmethod
    def from_csv_row(cls, row: dict) -> "TrialRecord":
        n_manip = int(row["nManipulableColleges"])
        n_c = int(row["nColleges"])
        return cls(
            n_students=int(row["nStudents"]),
            n_colleges=n_c,
            generator=row["generator"],
            phi=float(row["phi"]) if row["phi"] else None,
            mixture_size=int(row["mixtureSize"]),
            capacity_method=row["capacityMethod"],
            variant=row["variant"],
            trial=int(row["trial"]),
            seed=int(row["seed"]),
            profile_digest=row["profileDigest"],
            # only the count survives in the CSV
            per_college=tuple(i < n_manip for i in range(n_c)),
            n_eligible=int(row["nEligibleColleges"]),
            instance_manipulable=row["instanceManipulable"] == "true",
            daa_micros=int(row["daaMicros"]),
            finder_micros=int(row["finderMicros"]),
        )


def trial_seed(master_seed: int, *key) -> int:
    """Stable 63-bit seed for a cell and trial, independent of Python's hash
    randomisation."""
    text = "|".join(str(k) for k in (master_seed, *key))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big") >> 1


# ---------------------------------------------------------------------------
# evaluation


def evaluate_market(
    market: Market,
    variant: Variant,
    search: str = "exact",
    timing: bool = False,
    oracle: bool = False,
    witnesses: bool = False,
) -> dict:
    """Run a finder for every college of ``market`` under ``variant``.

    ``search="exact"`` uses the finder of the variant; ``"subsets"`` uses the
    subset-withholding procedure for both variants.
    """
    daa_us = 0
    if timing:
        inputs = KernelInputs.build(market, variant)
        t0 = time.perf_counter_ns()
        inputs.run()
        daa_us = (time.perf_counter_ns() - t0) // 1000
    flags = []
    eligible = 0
    mismatches = 0
    found = []
    t0 = time.perf_counter_ns()
    for c in range(market.n_colleges):
        stats = SearchStats()
        if search == "subsets":
            rep = find_manipulation_by_subsets(market, c, variant, stats=stats)
        elif variant is Variant.STUDENT_PROPOSING:
            rep = find_manipulation_student_proposing(market, c, best=witnesses, stats=stats)
        else:
            rep = find_manipulation_college_proposing(market, c, stats=stats)
        flags.append(rep is not None)
        eligible += not stats.pruned
        if witnesses and rep is not None:
            found.append({k: v for k, v in rep.summary(market).items() if k != "matching"})
    finder_us = (time.perf_counter_ns() - t0) // 1000 if timing else 0
    if oracle and market.n_students <= DEFAULT_ORACLE_GUARD:
        for c in range(market.n_colleges):
            mismatches += brute_force_oracle(market, c, variant).decision != flags[c]
    return {
        "flags": tuple(flags),
        "eligible": eligible,
        "daa_us": int(daa_us),
        "finder_us": int(finder_us),
        "mismatches": mismatches,
        "witnesses": tuple(found),
    }


@dataclass(frozen=True)
class _Unit:
    order: tuple
    n_students: int
    n_colleges: int
    generator: GeneratorConfig | None
    trial: int


def _run_unit(config: ExperimentConfig, unit: _Unit, fixture: Market | None) -> list[tuple[tuple, TrialRecord]]:
    out = []
    if unit.generator is None:
        markets = [(FIXTURE_METHOD, fixture)]
        label, phi, k = FIXTURE_LABEL, None, 0
        seed = trial_seed(config.master_seed, FIXTURE_LABEL, unit.trial)
    else:
        gen = unit.generator
        label = gen.label
        phi = gen.phi if gen.kind.value == "mallowsMixture" else None
        k = gen.mixture_size if phi is not None else 0
        seed = trial_seed(config.master_seed, unit.n_students, unit.n_colleges, label, unit.trial)
        profile = gen_profile(
            unit.n_students,
            unit.n_colleges,
            gen.spec(unit.n_colleges, seed, Side.STUDENTS),
            gen.spec(unit.n_students, seed, Side.COLLEGES),
        )
        markets = []
        for method in config.capacity_methods:
            caps = gen_capacities(unit.n_students, unit.n_colleges, CapacitySpec(method, seed))
            markets.append((method.value, Market(caps, profile)))
    for mi, (method, market) in enumerate(markets):
        digest = profile_digest(market)
        for vi, variant in enumerate(config.variants):
            res = evaluate_market(
                market,
                variant,
                config.search,
                config.timing,
                config.oracle_cross_check,
                config.verbose,
            )
            rec = TrialRecord(
                n_students=market.n_students,
                n_colleges=market.n_colleges,
                generator=label,
                phi=phi,
                mixture_size=k,
                capacity_method=method,
                variant=variant.value,
                trial=unit.trial,
                seed=seed,
                profile_digest=digest,
                per_college=res["flags"],
                n_eligible=res["eligible"],
                instance_manipulable=any(res["flags"]),
                daa_micros=res["daa_us"],
                finder_micros=res["finder_us"],
                oracle_mismatches=res["mismatches"],
                witnesses=res["witnesses"],
            )
            out.append(((unit.order[0], unit.order[1], mi, vi, unit.trial), rec))
    return out


def _run_chunk(args) -> list[tuple[tuple, TrialRecord]]:
    config, units, fixture = args
    out = []
    for unit in units:
        out.extend(_run_unit(config, unit, fixture))
    return out


def _fixture(config: ExperimentConfig) -> Market | None:
    if config.fixture_market is None:
        return None
    if config.fixture_market == "example":
        from .fixtures import example_market

        return example_market()
    return load_market(config.fixture_market)


def _check_writable(path: str | None) -> None:
    if path is None:
        return
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise ConfigurationError(f"output directory {parent} does not exist")
    if (p.exists() and not os.access(p, os.W_OK)) or not os.access(parent, os.W_OK):
        raise ConfigurationError(f"output path {p} is not writable")


def run_experiment(
    config: ExperimentConfig, workers: int | None = None
) -> tuple[list[TrialRecord], "SummaryStats"]:
    """Run every cell and trial; records come back in canonical order
    (configuration order of cells, then trial index) whatever the number of
    worker processes."""
    for path in (config.csv_path, config.summary_path, config.witness_path):
        _check_writable(path)
    fixture = _fixture(config)
    units = []
    for si, (n_s, n_c) in enumerate(config.sizes):
        for gi, gen in enumerate(config.generators):
            for t in range(config.trials):
                units.append(_Unit((si, gi), n_s, n_c, gen, t))
    if fixture is not None:
        for t in range(config.trials):
            units.append(
                _Unit((len(config.sizes), 0), fixture.n_students, fixture.n_colleges, None, t)
            )
    workers = workers or config.workers
    if workers <= 1:
        pairs = _run_chunk((config, units, fixture))
    else:
        size = max(1, len(units) // (workers * 8))
        chunks = [(config, units[i : i + size], fixture) for i in range(0, len(units), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = [p for part in pool.map(_run_chunk, chunks) for p in part]
    pairs.sort(key=lambda p: p[0])
    records = [rec for _, rec in pairs]
    stats = summarize(records)
    if config.csv_path:
        Path(config.csv_path).write_text(records_to_csv(records), encoding="utf-8")
    if config.summary_path:
        Path(config.summary_path).write_text(stats.table() + "\n", encoding="utf-8")
    if config.witness_path:
        with open(config.witness_path, "w", encoding="utf-8") as fh:
            for rec in records:
                for w in rec.witnesses:
                    fh.write(json.dumps({"trial": rec.trial, "cell": list(rec.cell), **w}) + "\n")
    return records, stats


# ---------------------------------------------------------------------------
# aggregation


def records_to_csv(records: Iterable[TrialRecord]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()


def read_csv(path: str | Path) -> list[TrialRecord]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ConfigurationError(f"{path} lacks columns {sorted(missing)}")
            return [TrialRecord.from_csv_row(row) for row in reader]
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from exc


@dataclass(frozen=True)
class CellStats:
    n_students: int
    n_colleges: int
    generator: str
    capacity_method: str
    variant: str
    trials: int
    manipulable: int
    fraction: float
    # mean share of manipulable colleges over the manipulable instances
    conditional_college_fraction: float | None

    @property
    def key(self) -> tuple:
        return (self.n_students, self.n_colleges, self.generator, self.capacity_method, self.variant)


@dataclass(frozen=True)
class Delta:
    """Difference ``b - a`` of manipulable-instance fractions on matched trials."""

    group: tuple
    a: str
    b: str
    matched: int
    fraction_a: float
    fraction_b: float

    @property
    def delta(self) -> float:
        return self.fraction_b - self.fraction_a


@dataclass(frozen=True)
class PooledStats:
    variant: str
    cells: int
    min_fraction: float
    mean_fraction: float
    max_fraction: float
    mean_conditional: float | None


@dataclass(frozen=True)
class SummaryStats:
    cells: tuple[CellStats, ...]
    pooled: tuple[PooledStats, ...]
    variant_deltas: tuple[Delta, ...]
    method_deltas: tuple[Delta, ...]
    oracle_mismatches: int = 0

    def cell(self, n_students, n_colleges, capacity_method, variant, generator="IC") -> CellStats:
        key = (n_students, n_colleges, generator, capacity_method, Variant.parse(variant).value)
        for c in self.cells:
            if c.key == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "cells": [asdict(c) for c in self.cells],
            "pooled": [asdict(p) for p in self.pooled],
            "variantDeltas": [asdict(d) | {"delta": d.delta} for d in self.variant_deltas],
            "methodDeltas": [asdict(d) | {"delta": d.delta} for d in self.method_deltas],
            "oracleMismatches": self.oracle_mismatches,
        }

    def table(self) -> str:
        def pct(x):
            return "-" if x is None else f"{100 * x:6.2f}%"

        lines = [
            f"{'students':>8} {'colleges':>8} {'generator':<18} {'capacity':<8} {'variant':<17}"
            f" {'trials':>6} {'manip.':>8} {'cond.':>8}"
        ]
        for c in self.cells:
            lines.append(
                f"{c.n_students:>8} {c.n_colleges:>8} {c.generator:<18} {c.capacity_method:<8}"
                f" {c.variant:<17} {c.trials:>6} {pct(c.fraction):>8} {pct(c.conditional_college_fraction):>8}"
            )
        lines.append("")
        lines.append("pooled over cells (manipulable instances: min / mean / max; conditional mean)")
        for p in self.pooled:
            lines.append(
                f"  {p.variant:<17} {pct(p.min_fraction)} / {pct(p.mean_fraction)} / {pct(p.max_fraction)};"
                f" {pct(p.mean_conditional)}"
            )
        for title, deltas in (("variant", self.variant_deltas), ("capacity method", self.method_deltas)):
            if deltas:
                lines.append("")
                lines.append(f"matched {title} deltas")
                for d in deltas:
                    group = " ".join(str(g) for g in d.group)
                    lines.append(
                        f"  {group:<40} {d.b} - {d.a}: {100 * d.delta:+.2f} pts over {d.matched} trials"
                    )
        if self.oracle_mismatches:
            lines.append("")
            lines.append(f"oracle mismatches: {self.oracle_mismatches}")
        return "\n".join(lines)


def _cond(records: Sequence[TrialRecord]) -> float | None:
    shares = [r.n_manipulable / r.n_colleges for r in records if r.instance_manipulable]
    return statistics.fmean(shares) if shares else None


def _matched_delta(group, a_name, b_name, a_recs, b_recs) -> Delta | None:
    a_by = {r.trial: r for r in a_recs}
    b_by = {r.trial: r for r in b_recs}
    common = sorted(set(a_by) & set(b_by))
    if not common:
        return None
    fa = statistics.fmean(a_by[t].instance_manipulable for t in common)
    fb = statistics.fmean(b_by[t].instance_manipulable for t in common)
    return Delta(group, a_name, b_name, len(common), fa, fb)


def summarize(records: Sequence[TrialRecord]) -> SummaryStats:
    if not records:
        raise EmptyInputError("no trial records to summarise")
    by_cell: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        by_cell.setdefault(r.cell, []).append(r)
    cells = []
    for key, recs in by_cell.items():
        manip = sum(r.instance_manipulable for r in recs)
        cells.append(CellStats(*key, len(recs), manip, manip / len(recs), _cond(recs)))

    pooled = []
    for v in dict.fromkeys(c.variant for c in cells):
        fr = [c.fraction for c in cells if c.variant == v]
        conds = [c.conditional_college_fraction for c in cells if c.variant == v]
        conds = [x for x in conds if x is not None]
        pooled.append(
            PooledStats(v, len(fr), min(fr), statistics.fmean(fr), max(fr), statistics.fmean(conds) if conds else None)
        )

    sp, cp = Variant.STUDENT_PROPOSING.value, Variant.COLLEGE_PROPOSING.value
    variant_deltas = []
    method_deltas = []
    for key in dict.fromkeys(k[:4] for k in by_cell):
        if (*key, sp) in by_cell and (*key, cp) in by_cell:
            d = _matched_delta(key, sp, cp, by_cell[(*key, sp)], by_cell[(*key, cp)])
            if d:
                variant_deltas.append(d)
    m1, m2 = CapacityMethod.METHOD1.value, CapacityMethod.METHOD2.value
    for key in dict.fromkeys((k[0], k[1], k[2], k[4]) for k in by_cell):
        a = (key[0], key[1], key[2], m1, key[3])
        b = (key[0], key[1], key[2], m2, key[3])
        if a in by_cell and b in by_cell:
            d = _matched_delta(key, m1, m2, by_cell[a], by_cell[b])
            if d:
                method_deltas.append(d)
    return SummaryStats(
        tuple(cells),
        tuple(pooled),
        tuple(variant_deltas),
        tuple(method_deltas),
        sum(r.oracle_mismatches for r in records),
    )


def check_matched_profiles(records: Sequence[TrialRecord]) -> list[str]:
    """Problems with the matched-profile discipline: records of the same
    trial and capacity method must carry one profile digest across variants."""
    seen: dict[tuple, str] = {}
    problems = []
    for r in records:
        key = (r.n_students, r.n_colleges, r.generator, r.capacity_method, r.trial)
        if seen.setdefault(key, r.profile_digest) != r.profile_digest:
            problems.append(f"trial {key} ran variants on different profiles")
    return problems
