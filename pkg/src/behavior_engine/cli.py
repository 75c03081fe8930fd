"""Command line: ``behavior-engine {eval,curate,gen,report}``.

Data goes to files or standard output; progress and errors go to standard
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .curation import CurationConfig, InteractivityScorer, NotEnoughScenarios, build_random_split, rank_reports, score_pool
from .harness import (
    EvalJob,
    aggregate_csv,
    load_scenario_set,
    read_results_csv,
    run_matrix,
    write_results,
)
from .registry import UnknownName, check_names
from .scenario import dump_scenario
from .synthetic import TEMPLATES, derive_seed, generate_synthetic

log = logging.getLogger("behavior_engine")


def _names(text: str) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of names")
    return names


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="behavior-engine", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="run the planner x traffic matrix and score every episode")
    ev.add_argument("--scenarios", required=True, help="directory of scenario JSONs or a split manifest")
    ev.add_argument("--planners", required=True, type=_names, help="e.g. idm,pdm,hybrid:heuristic")
    ev.add_argument("--traffic", required=True, type=_names, help="e.g. idm,expert,heuristic:mix")
    ev.add_argument("--seed", type=_seeds, default=(0,), help="comma-separated base seeds (default 0)")
    ev.add_argument("--workers", type=int, default=1, help="worker processes (env BEHAVIOR_ENGINE_WORKERS wins)")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--config", help="JSON or TOML run configuration")
    ev.add_argument("--record-timing", action="store_true", help="fill wall_time_ms (makes output nondeterministic)")

    cu = sub.add_parser("curate", help="build an interactive or random split manifest")
    cu.add_argument("--scenarios", required=True, help="directory of scenario JSONs")
    cu.add_argument("--mode", choices=("interactive", "random"), default="interactive")
    cu.add_argument("--k", type=int, required=True, help="split size")
    cu.add_argument("--seed", type=int, default=0, help="sampling seed for random mode")
    cu.add_argument("--name", help="split name (default: mode and k)")
    cu.add_argument("--fit-thresholds", action="store_true", help="also report per-component percentiles")
    cu.add_argument("--out", help="manifest path (default: stdout)")

    gen = sub.add_parser("gen", help="write synthetic scenarios")
    gen.add_argument("--template", required=True, help=f"one of {', '.join(TEMPLATES)}")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")

    rep = sub.add_parser("report", help="re-aggregate existing results CSVs")
    rep.add_argument("results", nargs="+", help="results.csv files")
    rep.add_argument("--out", help="aggregate CSV path (default: stdout)")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def cmd_eval(args, parser) -> int:
    try:
        check_names(args.planners, args.traffic)
    except UnknownName as exc:
        parser.error(str(exc.args[0]))
    try:
        engine, hybrid = load_config(args.config)
    except (ConfigError, OSError) as exc:
        parser.error(f"bad --config: {exc}")
    scenarios = load_scenario_set(args.scenarios)
    job = EvalJob(
        scenarios=scenarios,
        planners=args.planners,
        traffic=args.traffic,
        seeds=args.seed,
        workers=args.workers,
        engine=engine,
        hybrid=hybrid,
        record_timing=args.record_timing,
    )
    log.info("running %d episodes", len(job.tasks()))
    result = run_matrix(job)
    write_results(result, args.out)
    log.info("wrote %d rows to %s (%d failed)", len(result.rows), args.out, len(result.errors))
    return 1 if result.errors else 0


def cmd_curate(args, parser) -> int:
    if args.k < 0:
        parser.error("--k must be non-negative")
    scenarios = load_scenario_set(args.scenarios)
    cfg = CurationConfig()
    name = args.name or f"{args.mode}{args.k}"
    reports, excluded = score_pool(scenarios, cfg)
    try:
        if args.mode == "interactive":
            ids = rank_reports(reports, args.k)
            manifest = {"split_name": name}
        else:
            ids = build_random_split(scenarios, args.k, args.seed)
            manifest = {"split_name": name, "seed": args.seed}
    except NotEnoughScenarios as exc:
        log.error("%s", exc)
        return 1
    by_id = {r.scenario_id: r for r in reports}
    source = Path(args.scenarios)
    if args.out is not None:
        try:
            source = source.resolve().relative_to(Path(args.out).resolve().parent)
        except ValueError:
            source = source.resolve()
    manifest.update(
        source=str(source),
        ids=ids,
        reports=[by_id[i].to_dict() for i in ids if i in by_id],
        excluded=dict(sorted(excluded.items())),
    )
    if args.fit_thresholds:
        scorer = InteractivityScorer(cfg).fit(scenarios)
        manifest["percentiles"] = {c: {f"p{q:g}": v for q, v in qs.items()} for c, qs in scorer.percentiles_.items()}
    _emit(json.dumps(manifest, indent=1) + "\n", args.out)
    return 0


def cmd_gen(args, parser) -> int:
    if args.template not in TEMPLATES:
        parser.error(f"unknown template {args.template!r}; known: {', '.join(TEMPLATES)}")
    if args.count < 0:
        parser.error("--count must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        sid = f"{args.template}-{args.seed}-{i:04d}"
        sc = generate_synthetic(args.template, derive_seed(args.seed, i), scenario_id=sid)
        (out / f"{sid}.json").write_bytes(dump_scenario(sc))
    log.info("wrote %d scenarios to %s", args.count, out)
    return 0


def cmd_report(args, parser) -> int:
    rows = []
    for path in args.results:
        rows.extend(read_results_csv(path))
    _emit(aggregate_csv(rows), args.out)
    return 0


COMMANDS = {"eval": cmd_eval, "curate": cmd_curate, "gen": cmd_gen, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
