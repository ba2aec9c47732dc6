"""Command line interface: ``collegeda <command> ...``.

Exit status is 0 on success, 1 when the input is well-formed on the command
line but rejected by the library (bad market file, oracle guard, ...), and 2
for usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .daa import Variant, run_daa
from .errors import CollegeDAError
from .experiment import ExperimentConfig, read_csv, records_to_csv, run_experiment, summarize
from .io import dump_market, load_market
from .manipulation import (
    DEFAULT_ORACLE_GUARD,
    SearchStats,
    brute_force_oracle,
    find_manipulation_college_proposing,
    find_manipulation_student_proposing,
    find_optimal_manipulation_student_proposing,
    split_to_one_to_one,
)
from .model import Market, is_stable
from .prefgen import CapacitySpec, GeneratorConfig, Side, gen_capacities, gen_profile


class UsageError(Exception):
    pass


def _emit(obj, out: str | None = None) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2)
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _college(market: Market, name: str) -> int:
    if name in market.college_names:
        return market.college_names.index(name)
    if name.isdigit() and int(name) < market.n_colleges:
        return int(name)
    raise UsageError(f"unknown college {name!r}; known: {', '.join(market.college_names)}")


def _variant(value: str) -> Variant:
    try:
        return Variant.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _named(market: Market, students) -> list[str]:
    return [market.student_names[s] for s in sorted(students)]


def cmd_run(args) -> int:
    market = load_market(args.market)
    matching, trace = run_daa(market, args.variant)
    result = {"variant": args.variant.value, "matching": matching.to_dict(market), "rounds": trace.n_rounds}
    if args.check_stability:
        ok, pairs = is_stable(market, matching)
        result["stable"] = ok
        result["blockingPairs"] = [[market.student_names[s], market.college_names[c]] for s, c in pairs]
    _emit(result, args.out)
    return 0


def cmd_manipulate(args) -> int:
    market = load_market(args.market)
    c = _college(market, args.college)
    stats = SearchStats()
    if args.variant is Variant.STUDENT_PROPOSING:
        if args.optimal:
            rep = find_optimal_manipulation_student_proposing(market, c, stats=stats)
            rep = None if rep.is_truthful else rep
        else:
            rep = find_manipulation_student_proposing(market, c, family=args.family, stats=stats)
    else:
        rep = find_manipulation_college_proposing(
            market, c, optimal=args.optimal, complete=not args.subsets_only, stats=stats
        )
    result = {
        "college": market.college_names[c],
        "variant": args.variant.value,
        "manipulable": rep is not None,
        "daaRuns": stats.daa_runs,
        "pruned": stats.pruned,
    }
    if rep is not None:
        summary = rep.summary(market)
        if not args.witness:
            summary.pop("matching")
            summary.pop("reportedList")
        result.update(summary)
    _emit(result, args.out)
    return 0


def cmd_oracle(args) -> int:
    market = load_market(args.market)
    c = _college(market, args.college)
    res = brute_force_oracle(market, c, args.variant, max_students=args.max_students)
    _emit(
        {
            "college": market.college_names[c],
            "variant": args.variant.value,
            "manipulable": res.decision,
            "truthfulMatch": _named(market, res.truthful),
            "maximalOutcomes": sorted(_named(market, o) for o in res.maximal_outcomes),
            "distinctOutcomes": len(res.outcomes),
            "reportsTried": res.reports_tried,
        },
        args.out,
    )
    return 0


def cmd_split(args) -> int:
    market = load_market(args.market)
    derived, _ = split_to_one_to_one(market)
    _emit(dump_market(derived), args.out)
    return 0


def cmd_generate(args) -> int:
    gen = GeneratorConfig.from_dict(
        {"kind": args.generator, "phi": args.phi, "mixtureSize": args.mixture_size}
        if args.generator == "mallowsMixture"
        else {"kind": args.generator}
    )
    profile = gen_profile(
        args.students,
        args.colleges,
        gen.spec(args.colleges, args.seed, Side.STUDENTS),
        gen.spec(args.students, args.seed, Side.COLLEGES),
    )
    caps = gen_capacities(args.students, args.colleges, CapacitySpec(args.capacity_method, args.seed))
    _emit(dump_market(Market(caps, profile)), args.out)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    d = config.to_dict()
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["masterSeed"] = args.seed
    if args.workers is not None:
        d["workers"] = args.workers
    if args.csv is not None:
        d["output"]["csv"] = args.csv
    if args.summary is not None:
        d["output"]["summary"] = args.summary
    if args.timing:
        d["timing"] = True
    config = ExperimentConfig.from_dict(d)
    records, stats = run_experiment(config)
    if config.csv_path is None:
        _emit(records_to_csv(records))
    print(stats.table(), file=sys.stderr if config.csv_path is None else sys.stdout)
    return 0


def cmd_report(args) -> int:
    stats = summarize(read_csv(args.csv))
    _emit(stats.to_dict() if args.json else stats.table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collegeda", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def market_cmd(name, help_, func):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("market", help="market JSON file")
        sp.add_argument("-o", "--out", help="write the result here instead of stdout")
        sp.set_defaults(func=func)
        return sp

    def variant_arg(sp):
        sp.add_argument(
            "-v", "--variant", type=_variant, default=Variant.STUDENT_PROPOSING,
            help="student | college (default student)",
        )

    sp = market_cmd("run", "run deferred acceptance", cmd_run)
    variant_arg(sp)
    sp.add_argument("--check-stability", action="store_true", help="also list blocking pairs")

    sp = market_cmd("manipulate", "search a beneficial misreport for one college", cmd_manipulate)
    sp.add_argument("-c", "--college", required=True, help="college name or index")
    variant_arg(sp)
    sp.add_argument("--optimal", action="store_true", help="look for a dominance-maximal outcome")
    sp.add_argument("--witness", action="store_true", help="include the reported list and full matching")
    sp.add_argument("--family", choices=("helper", "demotion"), default="helper",
                    help="student-proposing report family (default helper)")
    sp.add_argument("--subsets-only", action="store_true",
                    help="college-proposing: only the bounded subset phase")

    sp = market_cmd("oracle", "try every list a college could report", cmd_oracle)
    sp.add_argument("-c", "--college", required=True, help="college name or index")
    variant_arg(sp)
    sp.add_argument("--max-students", type=int, default=DEFAULT_ORACLE_GUARD,
                    help=f"refuse larger markets (default {DEFAULT_ORACLE_GUARD})")

    market_cmd("split", "derive the one-to-one seat market", cmd_split)

    sp = sub.add_parser("generate", help="generate a random market")
    sp.add_argument("-s", "--students", type=int, required=True)
    sp.add_argument("-C", "--colleges", type=int, required=True)
    sp.add_argument("-g", "--generator", choices=("impartialCulture", "mallowsMixture"),
                    default="impartialCulture")
    sp.add_argument("--phi", type=float, default=0.5)
    sp.add_argument("--mixture-size", type=int, default=1)
    sp.add_argument("--capacity-method", choices=("method1", "method2"), default="method1")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--out")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("experiment", help="run a Monte-Carlo experiment from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("-j", "--workers", type=int)
    sp.add_argument("--csv", help="results CSV (overrides the config)")
    sp.add_argument("--summary", help="summary table file (overrides the config)")
    sp.add_argument("--timing", action="store_true", help="record microsecond timings")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="summarise a results CSV")
    sp.add_argument("csv")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except CollegeDAError as exc:
        print(f"collegeda: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
