"""Monte Carlo evaluation of the greedy policy and KPI aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from . import _kernels as K
from .model import FixedContract, SystemParams
from .solver import ConfigMismatch, Problem, ValueTable

__all__ = [
    "KpiReport",
    "Estimate",
    "Heatmap",
    "simulate",
    "trace_records",
    "energy_loss_accounting",
    "inventory_heatmap",
    "write_report_json",
    "write_traces_csv",
    "write_heatmap_csv",
    "replication_uniforms",
]

TRACE_FIELDS = K.TRACE_FIELDS
SEASONS = {"winter": (11, 0, 1), "summer": (5, 6, 7)}
_BATCH = 256


@dataclass(frozen=True)
class Estimate:
    """Sample mean with a normal-approximation 95% confidence half-width."""

    mean: float
    half_width: float
    std: float
    n: int

    @classmethod
    def of(cls, samples) -> "Estimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        mean = float(math.fsum(x) / n) if n else math.nan
        std = float(x.std(ddof=1)) if n > 1 else 0.0
        z = float(sps.norm.ppf(0.975))
        return cls(mean, z * std / math.sqrt(n) if n else math.nan, std, n)

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def above(self, other: "Estimate") -> bool:
        """Non-overlapping intervals with this one higher."""
        return self.low > other.high

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci95": self.half_width, "std": self.std, "n": self.n}


@dataclass(frozen=True, eq=False)
class Heatmap:
    """``distribution[t - 1, i]``: share of runs with post-decision inventory
    at grid point ``grid[i]`` after period ``t``."""

    grid: np.ndarray
    distribution: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.distribution @ self.grid


@dataclass(eq=False)
class KpiReport:
    """Yearly KPIs of a simulated policy; money in EUR, energy in MWh."""

    config_hash: str
    seed: int
    replications: int
    years_per_replication: int
    profit: Estimate
    decomposition: dict[str, Estimate]
    h2_sold_mwh: float
    h2_sold_fuelcell_mwh: float
    energy_lost_mwh: float
    curtailed_mwh: float
    p_h2: float
    p_buy: float
    p_sell: float
    p_ppa: float
    price_sell: float
    price_buy: float
    price_h2: float
    ppa_shortfall_freq: float
    contract_shortfall_freq: float
    season_inventory: dict[str, Estimate]
    heatmap: Heatmap
    yearly_profits: np.ndarray = field(repr=False)
    yearly_components: dict[str, np.ndarray] = field(repr=False)
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "tool_version": __version__,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "replications": self.replications,
            "years_per_replication": self.years_per_replication,
            "profit": self.profit.to_dict(),
            "decomposition": {k: v.to_dict() for k, v in self.decomposition.items()},
            "h2_sold_mwh": self.h2_sold_mwh,
            "h2_sold_fuelcell_mwh": self.h2_sold_fuelcell_mwh,
            "energy_lost_mwh": self.energy_lost_mwh,
            "curtailed_mwh": self.curtailed_mwh,
            "p_h2": self.p_h2,
            "p_buy": self.p_buy,
            "p_sell": self.p_sell,
            "p_ppa": self.p_ppa,
            "price_sell": _nan_to_none(self.price_sell),
            "price_buy": _nan_to_none(self.price_buy),
            "price_h2": _nan_to_none(self.price_h2),
            "ppa_shortfall_freq": self.ppa_shortfall_freq,
            "contract_shortfall_freq": _nan_to_none(self.contract_shortfall_freq),
            "season_inventory": {k: v.to_dict() for k, v in self.season_inventory.items()},
        }

    def flat(self) -> dict:
        """One-row summary for sweep tables."""
        d = self.decomposition
        return {
            "profit": self.profit.mean,
            "profit_ci95": self.profit.half_width,
            "hydrogen_profit": d["hydrogen"].mean,
            "ppa_profit": d["ppa"].mean,
            "market_profit": d["market"].mean,
            "market_profit_ci95": d["market"].half_width,
            "h2_sold_mwh": self.h2_sold_mwh,
            "h2_sold_fuelcell_mwh": self.h2_sold_fuelcell_mwh,
            "energy_lost_mwh": self.energy_lost_mwh,
            "curtailed_mwh": self.curtailed_mwh,
            "p_h2": self.p_h2,
            "p_buy": self.p_buy,
            "p_sell": self.p_sell,
            "p_ppa": self.p_ppa,
            "price_sell": self.price_sell,
            "price_buy": self.price_buy,
            "price_h2": self.price_h2,
            "ppa_shortfall_freq": self.ppa_shortfall_freq,
            "contract_shortfall_freq": self.contract_shortfall_freq,
        }


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def replication_uniforms(seed: int, replications: int, steps: int, start: int = 0, stop: int | None = None):
    """Uniform draws for replications ``start:stop``, one substream each.

    Substream ``r`` depends only on ``(seed, r)``, so any batching or
    ordering of the replications sees the same numbers.
    """
    stop = replications if stop is None else stop
    children = np.random.SeedSequence(seed).spawn(replications)[start:stop]
    out = np.empty((stop - start, steps, 3))
    for k, child in enumerate(children):
        out[k] = np.random.Generator(np.random.PCG64(child)).random((steps, 3))
    return out


def _cum(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return np.ascontiguousarray(c)


def simulate(
    table: ValueTable,
    problem: Problem | None = None,
    *,
    seed: int = 0,
    replications: int = 1000,
    years_per_replication: int = 1,
    trace_replications: int = 0,
) -> KpiReport:
    """Simulate the greedy policy of ``table`` from the configured initial state.

    Each replication runs ``years_per_replication`` consecutive years; the
    inventory and prices carry over between years and the PPA obligation
    restarts at its target. Reported money and energy figures are per year.
    """
    if problem is None:
        problem = table.problem
    elif problem.config_hash != table.config_hash:
        raise ConfigMismatch("value table was computed for a different configuration")
    if replications < 1:
        raise ValueError("replications must be positive")
    if years_per_replication < 1:
        raise ValueError("years_per_replication must be positive")

    p = problem.params
    T = p.horizon_days
    steps = T * years_per_replication
    prm, iprm = problem.packed()
    pe0, ph0, inv0, v0 = problem.initial_state()
    i0 = int(round(inv0 * p.steps_per_unit))
    pe_cum = _cum(problem.electricity.transition)
    ph_cum = _cum(problem.hydrogen.transition)
    prod_cum = _cum(problem.production.probs)
    pe_lv = np.asarray(problem.electricity.levels, dtype=np.float64)
    ph_lv = np.asarray(problem.hydrogen.levels, dtype=np.float64)
    months = np.ascontiguousarray(problem.production.months, dtype=np.int64)

    stats = np.zeros((replications, K.N_STATS))
    month_inv = np.zeros((replications, 12))
    heat = np.zeros((T, p.inventory_points))
    n_trace = min(trace_replications, replications)
    traces = np.zeros((n_trace, steps, K.N_TRACE))
    for start in range(0, replications, _BATCH):
        stop = min(start + _BATCH, replications)
        uni = replication_uniforms(seed, replications, steps, start, stop)
        tr = traces[start:stop] if start < n_trace else traces[:0]
        K.simulate_batch(
            table.values, pe_cum, ph_cum, prod_cum, pe_lv, ph_lv, uni, years_per_replication,
            pe0, ph0, i0, v0, prm, iprm, months,
            stats[start:stop], month_inv[start:stop], heat, tr,
        )

    return _report(problem, table.config_hash, seed, years_per_replication, stats, month_inv, heat, traces)


def _report(problem, config_hash, seed, years, stats, month_inv, heat, traces) -> KpiReport:
    p = problem.params
    u = p.unit_mwh
    reps = stats.shape[0]
    per_year = stats / years
    tot = stats.sum(axis=0)
    comps = {
        "hydrogen": per_year[:, K.S_H2],
        "ppa": per_year[:, K.S_PPA],
        "market": per_year[:, K.S_SELL] + per_year[:, K.S_BUY],
        "market_sell": per_year[:, K.S_SELL],
        "market_buy": per_year[:, K.S_BUY],
    }
    days = tot[K.S_DAYS]
    n_years = reps * years

    day_counts = np.bincount(problem.production.months, minlength=12) * years
    season = {}
    for name, ms in SEASONS.items():
        if day_counts[list(ms)].sum() == 0:
            continue
        season[name] = Estimate.of(month_inv[:, list(ms)].sum(axis=1) / day_counts[list(ms)].sum())

    grid = p.inventory_grid()
    dist = heat / heat.sum(axis=1, keepdims=True)
    return KpiReport(
        config_hash=config_hash,
        seed=seed,
        replications=reps,
        years_per_replication=years,
        profit=Estimate.of(per_year[:, K.S_TOTAL]),
        decomposition={k: Estimate.of(v) for k, v in comps.items()},
        h2_sold_mwh=tot[K.S_H2_UNITS] * u / n_years,
        h2_sold_fuelcell_mwh=tot[K.S_H2_UNITS] * u / p.eff_fuelcell / n_years,
        energy_lost_mwh=tot[K.S_LOSS_UNITS] * u / n_years,
        curtailed_mwh=tot[K.S_CURTAILED] * u / n_years,
        p_h2=tot[K.S_DAYS_H2] / days,
        p_buy=tot[K.S_DAYS_BUY] / days,
        p_sell=tot[K.S_DAYS_SELL] / days,
        p_ppa=tot[K.S_DAYS_PPA] / days,
        price_sell=_ratio(tot[K.S_SELL_PV], tot[K.S_SELL_UNITS]),
        price_buy=_ratio(tot[K.S_BUY_PV], tot[K.S_BUY_UNITS]),
        price_h2=_ratio(tot[K.S_H2_PV], tot[K.S_H2_UNITS]),
        ppa_shortfall_freq=_ratio(tot[K.S_PPA_SHORT], tot[K.S_DEADLINES]),
        contract_shortfall_freq=_ratio(tot[K.S_H2_SHORT], tot[K.S_DUES])
        if isinstance(problem.policy, FixedContract)
        else math.nan,
        season_inventory=season,
        heatmap=Heatmap(grid, dist),
        yearly_profits=per_year[:, K.S_TOTAL].copy(),
        yearly_components={k: v.copy() for k, v in comps.items()},
        traces=[trace_records(tr) for tr in traces],
    )


# --- traces ------------------------------------------------------------------


def trace_records(trace: np.ndarray) -> np.recarray:
    """View a raw (steps, fields) trace as a record array with named columns."""
    return np.rec.fromarrays(np.asarray(trace, dtype=float).T, names=list(TRACE_FIELDS))


def energy_loss_accounting(trace, params: SystemParams) -> float:
    """Conversion loss (MWh) of a trace, booked when energy enters storage."""
    x_in = np.asarray(trace["x_in"], dtype=float)
    alpha = params.round_trip
    return float(math.fsum(x_in * (1.0 - alpha) / alpha * params.unit_mwh))


def inventory_heatmap(traces, params: SystemParams) -> Heatmap:
    """Per-period distribution of the post-decision inventory over ``traces``."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    T = params.horizon_days
    spu = params.steps_per_unit
    counts = np.zeros((T, params.inventory_points))
    for tr in traces:
        t = np.asarray(tr["t"], dtype=np.int64)
        idx = np.rint(np.asarray(tr["I_star"]) * spu).astype(np.int64)
        np.add.at(counts, (t - 1, idx), 1.0)
    rows = counts.sum(axis=1, keepdims=True)
    return Heatmap(params.inventory_grid(), np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0))


# --- writers -----------------------------------------------------------------


def write_report_json(report: KpiReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


_TRACE_FMT = {
    "pe": "{:.2f}", "ph": "{:.2f}",
    "r_sell": "{:.2f}", "r_buy": "{:.2f}", "r_ppa": "{:.2f}", "r_h2": "{:.2f}", "r_total": "{:.2f}",
    "I": "{:g}", "I_star": "{:g}", "h2": "{:g}", "x_in": "{:g}", "curtailed": "{:.6g}",
}


def write_traces_csv(report: KpiReport, path: str | Path) -> None:
    """Columns: replication, then every trace field; prices and money to 2 decimals."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# config_hash", report.config_hash, "tool_version", __version__])
        w.writerow(["replication", *TRACE_FIELDS])
        for r, tr in enumerate(report.traces):
            for row in tr:
                w.writerow([r] + [_TRACE_FMT.get(f, "{:d}").format(_cast(f, row[f])) for f in TRACE_FIELDS])


def _cast(name, value):
    return float(value) + 0.0 if name in _TRACE_FMT else int(round(value))


def write_heatmap_csv(heatmap: Heatmap, path: str | Path, config_hash: str = "") -> None:
    """Columns: t, mean_inventory, then one probability column per grid point."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# config_hash", config_hash, "tool_version", __version__])
        w.writerow(["t", "mean_inventory", *(f"I={g:g}" for g in heatmap.grid)])
        for t, (m, row) in enumerate(zip(heatmap.mean, heatmap.distribution), start=1):
            w.writerow([t, f"{m:.4f}", *(f"{x:.4f}" for x in row)])
