"""Setting comparisons and one-dimensional parameter sweeps."""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .model import (
    BASE_UNIT_MWH,
    BENCHMARK_SETTINGS,
    FixedContract,
    PlantConfig,
    base_case,
    load_config,
    parse_setting,
    reduced_case,
)
from .simulate import KpiReport, simulate, write_report_json
from .solver import backward_induction, build_problem

__all__ = [
    "AXES",
    "ExperimentSpec",
    "PointResult",
    "point_config",
    "run_point",
    "run_sweep",
    "write_sweep_csv",
    "load_experiment",
    "resolve_base",
]

AXES = ("none", "fixed_h2_price", "h2_market_mean", "ppa_target", "round_trip_eff")


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of (setting, axis value) points, each solved then simulated.

    ``base`` is ``"base"``, ``"reduced"`` or a path to a config file.
    """

    base: str = "base"
    settings: tuple[str, ...] = BENCHMARK_SETTINGS
    axis: str = "none"
    grid: tuple[float, ...] = ()
    replications: int = 1000
    years_per_replication: int = 1
    seed: int = 0
    out_dir: str = "results"

    def problems(self) -> list[str]:
        out = []
        if not self.settings:
            out.append("settings must be nonempty")
        if self.axis not in AXES:
            out.append(f"unknown sweep axis {self.axis!r}")
        elif self.axis != "none":
            if not self.grid:
                out.append("sweep grid must be nonempty")
            elif list(self.grid) != sorted(set(self.grid)):
                out.append("sweep grid must be strictly increasing")
        if self.replications < 1:
            out.append("replications must be positive")
        if self.years_per_replication < 1:
            out.append("years_per_replication must be positive")
        for s in self.settings:
            try:
                parse_setting(s)
            except ValueError as exc:
                out.append(str(exc))
        return out

    def points(self) -> list[tuple[str, float | None]]:
        values = list(self.grid) if self.axis != "none" else [None]
        return [(s, v) for s in self.settings for v in values]


def resolve_base(base: str, relative_to: Path | None = None) -> PlantConfig:
    if base == "base":
        return base_case()
    if base == "reduced":
        return reduced_case()
    path = Path(base)
    if relative_to is not None and not path.is_absolute():
        path = relative_to / path
    return load_config(path)


def load_experiment(path: str | Path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d = dict(d)
    if "settings" in d:
        d["settings"] = tuple(d["settings"])
    if "grid" in d:
        d["grid"] = tuple(float(x) for x in d["grid"])
    return ExperimentSpec(**d)


def point_config(base: PlantConfig, setting: str, axis: str = "none", value: float | None = None) -> PlantConfig:
    """Configuration of one sweep point.

    Contract quantities in setting labels are read in base-case units
    (5.7 MWh) and rescaled to the configuration's energy unit.
    """
    scale = BASE_UNIT_MWH / base.system.unit_mwh
    cfg = parse_setting(setting, quantity_scale=scale, quantity_step=base.system.inventory_resolution).apply(base)
    if axis == "none" or value is None:
        return cfg
    if axis == "fixed_h2_price":
        if isinstance(cfg.policy, FixedContract):
            cfg = replace(cfg, policy=replace(cfg.policy, fixed_price=float(value)))
        return cfg
    if axis == "h2_market_mean":
        return replace(cfg, hydrogen=cfg.hydrogen.with_stationary_mean(float(value)))
    if axis == "ppa_target":
        return replace(cfg, system=replace(cfg.system, ppa_target=int(value)))
    if axis == "round_trip_eff":
        return replace(cfg, system=cfg.system.with_round_trip(float(value)))
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass
class PointResult:
    setting: str
    axis: str
    value: float | None
    config_hash: str = ""
    expected_profit: float = math.nan
    report: KpiReport | None = None
    wall_time: float = 0.0
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def run_point(
    config: PlantConfig,
    *,
    replications: int,
    seed: int = 0,
    years_per_replication: int = 1,
    setting: str = "",
    axis: str = "none",
    value: float | None = None,
) -> PointResult:
    """Solve and simulate one configuration, capturing any failure."""
    res = PointResult(setting, axis, value)
    start = time.perf_counter()
    try:
        problem = build_problem(config)
        res.config_hash = problem.config_hash
        table = backward_induction(problem)
        res.expected_profit = table.initial_value()
        res.report = simulate(
            table, seed=seed, replications=replications, years_per_replication=years_per_replication
        )
    except Exception as exc:  # recorded per point; the sweep goes on
        res.error = f"{type(exc).__name__}: {exc}"
        res.extra["traceback"] = traceback.format_exc()
    res.wall_time = time.perf_counter() - start
    return res


def _run_args(args):
    cfg, kw = args
    return run_point(cfg, **kw)


def run_sweep(spec: ExperimentSpec, *, workers: int = 1, base_dir: Path | None = None) -> list[PointResult]:
    """Run every point of ``spec``; results come back in grid order."""
    bad = spec.problems()
    if bad:
        raise ValueError("invalid experiment: " + "; ".join(bad))
    base = resolve_base(spec.base, base_dir)
    jobs = []
    for setting, value in spec.points():
        cfg = point_config(base, setting, spec.axis, value)
        kw = dict(
            replications=spec.replications,
            seed=spec.seed,
            years_per_replication=spec.years_per_replication,
            setting=setting,
            axis=spec.axis,
            value=value,
        )
        jobs.append((cfg, kw))
    if workers <= 1 or len(jobs) == 1:
        return [_run_args(j) for j in jobs]
    # fork is unsafe once the OpenMP runtime of the kernels is up
    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(_run_args, jobs))


_MONEY = ("expected_profit", "profit", "profit_ci95", "hydrogen_profit", "ppa_profit", "market_profit", "market_profit_ci95")
_ENERGY = ("h2_sold_mwh", "h2_sold_fuelcell_mwh", "energy_lost_mwh", "curtailed_mwh")
_PROBS = ("p_h2", "p_buy", "p_sell", "p_ppa", "ppa_shortfall_freq", "contract_shortfall_freq")
_PRICES = ("price_sell", "price_buy", "price_h2")
SWEEP_COLUMNS = ("setting", "axis", "value", "config_hash") + _MONEY + _ENERGY + _PROBS + _PRICES


def _fmt(name: str, x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if name in _PROBS:
        return f"{x:.4f}"
    if name in _PRICES or name in _MONEY:
        return f"{x:.2f}"
    if name in _ENERGY:
        return f"{x:.3f}"
    return str(x)


def sweep_rows(results: list[PointResult]) -> list[dict]:
    rows = []
    for r in results:
        if not r.ok:
            continue
        row = {"setting": r.setting, "axis": r.axis, "value": "" if r.value is None else f"{r.value:g}"}
        row["config_hash"] = r.config_hash
        row["expected_profit"] = r.expected_profit
        if r.report is not None:
            row.update(r.report.flat())
        rows.append(row)
    return rows


def write_sweep_csv(results: list[PointResult], path: str | Path) -> None:
    """Long format: one row per successful (setting, axis value); failures go to ``error_*.txt``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# tool_version", __version__])
        w.writerow(SWEEP_COLUMNS)
        for row in sweep_rows(results):
            w.writerow([_fmt(c, row.get(c)) if c not in ("setting", "axis", "value", "config_hash") else row[c] for c in SWEEP_COLUMNS])


def write_point_reports(results: list[PointResult], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        stem = r.setting.replace("(", "_").replace(")", "").replace(",", "_")
        if r.value is not None:
            stem += f"_{r.axis}_{r.value:g}"
        if r.report is not None:
            write_report_json(r.report, out / f"kpi_{stem}.json")
        else:
            with open(out / f"error_{stem}.txt", "w", encoding="utf-8") as fh:
                fh.write(r.error or "")
