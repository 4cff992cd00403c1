"""``maxmart run --config PATH [--seed N] [--jobs N] [--out DIR]``.

Exit status: 0 when every check passes, 1 when some check fails, 2 on a
usage or configuration error.  ``summary.json`` is a pure function of the
configuration and seed; wall-clock time goes to ``timing.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Sequence

from .checks import CheckResult, RunConfig, run_checks
from .errors import ConfigError, MaxmartError, StructuralError
from .models import model_to_dict, resolve_jobs


def emit_report(results: Sequence[CheckResult], config: RunConfig) -> tuple[dict, str]:
    """Summary JSON document and the matching plain-text table."""
    if not results:
        raise StructuralError("no check results to report")
    summary = {"model": model_to_dict(config.model), "n_paths": config.n_paths,
               "seed": config.master_seed, "checks": [r.as_dict() for r in results]}
    rows = [("name", "metric", "value", "target", "tolerance", "pass")]
    for r in results:
        rows.append((r.name, r.metric, f"{r.value:.6g}", r.target, f"{r.tolerance:.3g}",
                     "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(6)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return summary, "\n".join(lines)


def exit_status(summary: dict) -> int:
    return 0 if all(c["pass"] for c in summary["checks"]) else 1


def dump_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def load_config(path: str, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if isinstance(raw, dict):
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["output_dir"] = out
    return RunConfig.from_dict(raw)


def run(config: RunConfig, out_dir: str | None = None, jobs: int | None = None,
        stream=None) -> int:
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    results = run_checks(config, out_dir, jobs)
    summary, table = emit_report(results, config)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(dump_summary(summary))
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump({"wall_time_s": time.perf_counter() - start}, fh)
        fh.write("\n")
    print(table, file=stream or sys.stdout)
    return exit_status(summary)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxmart", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate a batch and run the configured checks")
    r.add_argument("--config", required=True, help="JSON run configuration")
    r.add_argument("--seed", type=int, help="override the configured master seed")
    r.add_argument("--jobs", type=int, help="worker processes (default: $MAXMART_JOBS or 1)")
    r.add_argument("--out", help="output directory (default: output_dir from the config)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        config = load_config(args.config, args.seed, args.out)
        jobs = resolve_jobs(args.jobs)
    except MaxmartError as exc:
        print(f"maxmart: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"maxmart: error: MAXMART_JOBS: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config, args.out, jobs)
    except ConfigError as exc:
        print(f"maxmart: error: {exc}", file=sys.stderr)
        return 2
