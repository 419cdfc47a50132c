"""Command line entry point: ``physevo run|report|compare|list-problems``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .algorithms import InvalidVariantParameters
from .core import PhysevoError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="physevo", description="Seeded evolutionary runs on physics-based problems.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a TOML run configuration")
    r.add_argument("config")
    r.add_argument("--out", help="run directory (default: run.output from the config)")
    r.add_argument("--force", action="store_true", help="overwrite an existing or interrupted run directory")

    rep = sub.add_parser("report", help="write explainability reports for a run directory")
    rep.add_argument("run_dir")
    rep.add_argument("--kinds", default=",".join(harness.REPORT_KINDS),
                     help="comma-separated subset of " + ",".join(harness.REPORT_KINDS))
    rep.add_argument("--precision", type=int, default=2, help="STN rounding digits")
    rep.add_argument("--grid", type=int, default=10, help="coverage cells per dimension")
    rep.add_argument("--delta", type=float, default=0.01, help="robustness tolerance on the objective")

    c = sub.add_parser("compare", help="seed-paired statistics of two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--bootstrap", type=int, default=2000)

    sub.add_parser("list-problems", help="list registered problems")
    return p


def _run(args) -> int:
    spec = harness.load_config(args.config)
    out = harness.execute_run(spec, args.out, force=args.force)
    summary = json.loads((out / "summary.json").read_text())
    for rep in summary["repetitions"]:
        print(f"run {rep['run_id']}: best {rep['best_objective']:.6g} feasible={rep['feasible']} "
              f"({rep['termination']}, {rep['evaluations']} evals)")
    print(f"wrote {out}")
    return EXIT_OK


def _report(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    opts = harness.ReportOptions(precision=args.precision, grid=args.grid, delta=args.delta)
    for path in harness.export_reports(args.run_dir, kinds, opts):
        print(path)
    return EXIT_OK


def _compare(args) -> int:
    st = harness.compare_runs(args.run_a, args.run_b, args.bootstrap)
    doc = {"median_a": st.median_a, "median_b": st.median_b, "interval_a": list(st.interval_a),
           "interval_b": list(st.interval_b), "wins": st.wins, "ties": st.ties, "losses": st.losses,
           "win_probability_a": st.win_probability}
    print(json.dumps(doc, indent=1))
    return EXIT_OK


def _list(args) -> int:
    for name, entry in harness.PROBLEMS.items():
        print(f"{name:<12} {entry.description}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _run, "report": _report, "compare": _compare, "list-problems": _list}[args.command]
    try:
        return handler(args)
    except harness.ParseError as exc:
        where = f" (line {exc.line}, column {exc.column})" if exc.line is not None else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (harness.ConfigError, InvalidVariantParameters, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysevoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
