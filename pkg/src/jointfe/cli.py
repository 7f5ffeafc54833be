"""Command-line entry point: ``jointfe {run,schedule-sim,inspect,validate}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .scheduler import SchedulerError, p1_upper_bound, simulate_neutral, sweep_neutral
from .tabular import SchemaError, TabularError, load_csv, load_schema

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_ints(text: str) -> list[int]:
    """``"200"``, ``"2-400"`` or ``"10,20,30"``."""
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jointfe", description="Joint feature-engineering and hyperparameter search.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the joint search from a JSON config")
    r.add_argument("config")
    r.add_argument("--budget", type=int, help="override M")
    r.add_argument("--seed", type=int)
    r.add_argument("--learner")
    r.add_argument("--output-dir")
    r.add_argument("--c1", type=float)
    r.add_argument("--c2", type=float)
    r.add_argument("--p1", type=float)
    r.add_argument("--proposer", choices=("scripted", "llm"))
    r.add_argument("--script", help="scripted-proposer JSON file")

    s = sub.add_parser("schedule-sim", help="neutral-reward scheduler simulation as CSV")
    s.add_argument("--M", default="200", help="budget, a range like 2-400, or a comma list")
    s.add_argument("--p1", type=float, action="append", help="prior for FE (repeatable); default 0.9")
    s.add_argument("--c2", type=float, default=math.sqrt(2))
    s.add_argument("--sweep", type=int, metavar="K",
                   help="instead of --p1, use K evenly spaced p1 values in the admissible range")
    s.add_argument("--out", help="write CSV here instead of stdout")

    i = sub.add_parser("inspect", help="summarize a report.json")
    i.add_argument("report")

    v = sub.add_parser("validate", help="check a CSV against its schema without running")
    v.add_argument("data")
    v.add_argument("schema")
    return p


def _cmd_run(args) -> int:
    from .engine import RunConfig, run

    config = RunConfig.from_file(args.config)
    overrides = {k: getattr(args, k) for k in ("budget", "seed", "learner", "c1", "c2", "p1")
                 if getattr(args, k) is not None}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if overrides.get("p1") is not None:
        overrides["p2"] = 1.0 - overrides["p1"]
    d = config.to_dict()
    d.update(overrides)
    if args.proposer:
        d["proposer"]["backend"] = args.proposer
    if args.script:
        d["proposer"]["script"] = args.script
    config = RunConfig.from_dict(d)
    report = run(config)
    print(f"best node: {report.best_node}")
    print(f"best validation score: {report.best_val_score!r}")
    print(f"root validation score: {report.root_score!r}")
    print(f"test score after refit: {report.test_score!r}")
    if config.output_dir:
        print(f"outputs written to {config.output_dir}")
    return EXIT_OK


def _cmd_schedule_sim(args) -> int:
    Ms = _parse_ints(args.M)
    if args.sweep is not None and args.p1:
        raise UsageError("use either --p1 or --sweep, not both")
    rows = []
    if args.sweep is not None:
        for M, p1, res in sweep_neutral(Ms, args.sweep, args.c2):
            rows.append((M, p1, res))
    else:
        for M in Ms:
            for p1 in args.p1 or [0.9]:
                try:
                    rows.append((M, p1, simulate_neutral(M, p1, args.c2)))
                except SchedulerError as exc:
                    raise UsageError(f"{exc} (upper bound {float(p1_upper_bound(M)):.6g})") from None
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "p1", "N_FE", "N_HPO", "max_abs_Q"])
        for M, p1, res in rows:
            w.writerow([M, repr(p1), res.n_fe, res.n_hpo, repr(float(res.max_abs_q))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _cmd_inspect(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"no such report: {args.report}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"not a JSON report: {exc}") from None
    hist = report.get("history", [])
    counts = report.get("scheduler_counts", {})
    print(f"best validation score: {report['best_val_score']!r}")
    print(f"test score: {report['test_score']!r}")
    print(f"root validation score: {report.get('root_score')!r}")
    print(f"best node: {report['best_node']} of {report.get('n_nodes')}")
    print("best pipeline:")
    for step in report.get("best_pipeline", []) or [{"kind": "(none)"}]:
        ins = ", ".join(step.get("inputs", []))
        print(f"  - {step['kind']}({ins}) {step.get('params', {}) or ''}".rstrip())
    print(f"best config: {json.dumps(report.get('best_config'), sort_keys=True)}")
    print(f"steps: {len(hist)}  FE={counts.get('FE', 0)}  HPO={counts.get('HPO', 0)}  "
          f"failed={sum(h['score'] is None for h in hist)}  new-best={sum(h['new_best'] for h in hist)}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        schema = load_schema(args.schema)
        table = load_csv(args.data, schema)
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename or exc}") from None
    except (SchemaError, TabularError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid: {exc}") from None
    n_cat = sum(table.column(c).kind == "categorical" for c in table.feature_names)
    print(f"ok: {table.n_rows} rows, {len(table.feature_names)} features ({n_cat} categorical), "
          f"target {table.target!r} ({table.task})")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "schedule-sim": _cmd_schedule_sim, "inspect": _cmd_inspect,
            "validate": _cmd_validate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"jointfe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FileNotFoundError, KeyError) as exc:
        # bad config contents or paths count as usage problems
        print(f"jointfe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"jointfe: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
