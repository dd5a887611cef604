"""Command-line driver: ``ghp {validate,solve,simulate,sweep,fit-wind}``.

Exit codes: 0 success, 1 usage or schema error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .model import PlantConfig, config_from_dict, validate_config

log = logging.getLogger("ghp")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
WORKERS_ENV = "GHP_WORKERS"


class UsageError(Exception):
    pass


def _schema(name: str) -> dict:
    text = resources.files("ghp").joinpath(f"data/{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def schema_errors(instance, name: str) -> list[str]:
    """Schema violations as ``$.json.path: message`` strings."""
    validator = jsonschema.Draft202012Validator(_schema(name))
    out = []
    for err in sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path)):
        out.append(f"{err.json_path}: {err.message}")
    return out


def _read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def load_checked_config(path: str | Path) -> PlantConfig:
    """Read, schema-check and semantically validate a config file."""
    raw = _read_json(path)
    errors = schema_errors(raw, "config")
    if errors:
        raise UsageError("schema violations:\n  " + "\n  ".join(errors))
    try:
        cfg = config_from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    bad = validate_config(cfg)
    if bad:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(bad))
    return cfg


def _workers(args) -> int:
    if args.workers is not None:
        n = args.workers
    else:
        n = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if n < 1:
        raise UsageError("--workers must be >= 1")
    return n


def _set_threads(n: int) -> None:
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    load_checked_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_solve(args) -> int:
    from .solver import TableTooLarge, backward_induction, build_problem, save_table, table_cells

    cfg = load_checked_config(args.config)
    _set_threads(_workers(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    cells = table_cells(problem)
    log.info("table shape %s (%d cells, %.2f GiB)", problem.shape, cells, cells * 8 / 2**30)
    try:
        table = backward_induction(problem, fast=not args.reference)
    except TableTooLarge as exc:
        raise UsageError(str(exc)) from exc
    table_path = Path(args.table) if args.table else out / "value_table.bin"
    save_table(table, table_path)
    summary = {
        "tool_version": __version__,
        "config_hash": table.config_hash,
        "initial_value": table.initial_value(),
        "initial_state": dict(zip(("pe_idx", "ph_idx", "inventory", "obligation"), problem.initial_state())),
        "shape": list(problem.shape),
        "cells": cells,
        "wall_time_s": round(table.wall_time, 3),
        "table": str(table_path),
    }
    _write_json(summary, out / "solve_summary.json")
    print(f"V0 = {summary['initial_value']:.2f} EUR  shape={tuple(problem.shape)}  {table.wall_time:.1f}s")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import simulate, write_heatmap_csv, write_report_json, write_traces_csv
    from .solver import backward_induction, build_problem, load_table

    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if args.years < 1:
        raise UsageError("--years must be >= 1")
    cfg = load_checked_config(args.config)
    _set_threads(_workers(args))
    problem = build_problem(cfg)
    if args.table:
        table = load_table(args.table, problem)
    else:
        table = backward_induction(problem)
    report = simulate(
        table,
        seed=args.seed,
        replications=args.reps,
        years_per_replication=args.years,
        trace_replications=args.traces,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / "kpi.json")
    write_heatmap_csv(report.heatmap, out / "heatmap.csv", report.config_hash)
    if args.traces:
        write_traces_csv(report, out / "traces.csv")
    p = report.profit
    print(f"profit = {p.mean:.2f} +/- {p.half_width:.2f} EUR/yr over {report.replications} replications")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import ExperimentSpec, run_sweep, write_point_reports, write_sweep_csv

    raw = _read_json(args.config)
    errors = schema_errors(raw, "experiment")
    if errors:
        raise UsageError("schema violations:\n  " + "\n  ".join(errors))
    raw = dict(raw)
    raw["settings"] = tuple(raw["settings"])
    raw["grid"] = tuple(float(x) for x in raw.get("grid", ()))
    if args.reps is not None:
        raw["replications"] = args.reps
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = ExperimentSpec(**raw)
    bad = spec.problems()
    if bad:
        raise UsageError("invalid experiment:\n  " + "\n  ".join(bad))
    out = Path(args.out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(spec, workers=_workers(args), base_dir=Path(args.config).parent)
    write_sweep_csv(results, out / "sweep.csv")
    write_point_reports(results, out)
    failed = [r for r in results if not r.ok]
    for r in failed:
        log.error("%s %s=%s failed: %s", r.setting, r.axis, r.value, r.error)
    print(f"{len(results) - len(failed)}/{len(results)} points ok -> {out / 'sweep.csv'}")
    return EXIT_RUNTIME if len(failed) == len(results) else EXIT_OK


def cmd_fit_wind(args) -> int:
    from .stochastic import WeibullFitError, fit_monthly_weibull, read_wind_csv

    try:
        records = read_wind_csv(args.csv)
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc.strerror}") from exc
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{args.csv}: expected columns date,speed ({exc})") from exc
    try:
        params = fit_monthly_weibull(records)
    except WeibullFitError as exc:
        log.error("fit failed: %s", exc)
        return EXIT_RUNTIME
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "weibull_monthly.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "shape", "scale"])
        for m, (k, lam) in enumerate(params, start=1):
            w.writerow([m, f"{k:.6f}", f"{lam:.6f}"])
    print(f"wrote {path}")
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ghp {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_help="plant configuration (JSON)"):
        sp.add_argument("--config", required=True, help=config_help)
        sp.add_argument("--workers", type=int, default=None, help=f"parallel workers (default ${WORKERS_ENV} or 1)")
        sp.add_argument("--out-dir", default="out")

    sp = sub.add_parser("validate", help="check a config against the schema and model invariants")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="backward induction; writes the value table and a summary")
    common(sp)
    sp.add_argument("--table", help="value table output path (default OUT_DIR/value_table.bin)")
    sp.add_argument("--reference", action="store_true", help="plain enumeration kernel (slow)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="Monte Carlo KPIs of the optimal policy")
    common(sp)
    sp.add_argument("--table", help="value table from `solve` (solved on the fly if omitted)")
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--years", type=int, default=1, help="chained years per replication")
    sp.add_argument("--traces", type=int, default=0, help="replications to write full traces for")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="solve and simulate every setting x grid point")
    sp.add_argument("--config", required=True, help="experiment spec (JSON)")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fit-wind", help="fit monthly Weibull parameters to daily wind speeds")
    sp.add_argument("csv", help="CSV with columns date,speed")
    sp.add_argument("--out-dir", default="out")
    sp.set_defaults(func=cmd_fit_wind)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else is a runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
