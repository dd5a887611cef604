"""Exogenous information: price lattices and daily wind production."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .model import PriceProcessParams, SystemParams, TurbineSpec, WindModel

__all__ = [
    "PriceLattice",
    "ProductionDistribution",
    "WeibullFitError",
    "adjust_height",
    "power_output",
    "production_distribution",
    "month_of_day",
    "fit_weibull",
    "weibull_loglik_gradient",
    "discretize_ar1",
    "stationary_distribution",
    "read_wind_csv",
    "fit_monthly_weibull",
    "default_weibull_table",
]

_DAYS_IN_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_START = np.cumsum((0,) + _DAYS_IN_MONTH)


@dataclass(frozen=True, eq=False)
class PriceLattice:
    levels: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray

    @property
    def size(self) -> int:
        return len(self.levels)

    def nearest(self, price: float) -> int:
        return int(np.argmin(np.abs(self.levels - price)))

    @property
    def mean(self) -> float:
        return float(self.stationary @ self.levels)


@dataclass(frozen=True, eq=False)
class ProductionDistribution:
    """``probs[t - 1, k]`` is the probability of producing ``k`` units on day ``t``."""

    probs: np.ndarray
    months: np.ndarray

    @property
    def levels(self) -> int:
        return self.probs.shape[1]

    def expected(self) -> np.ndarray:
        return self.probs @ np.arange(self.levels)


# --- AR(1) lattice -------------------------------------------------------


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    n = transition.shape[0]
    a = np.vstack([transition.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    # polish with a few power steps
    for _ in range(50):
        pi = pi @ transition
    return pi / pi.sum()


def discretize_ar1(p: PriceProcessParams, levels: int, span: float = 3.0) -> PriceLattice:
    """Tauchen discretization of an AR(1) price process.

    Parameters
    ----------
    p : PriceProcessParams
        Process ``x' = mu + theta * x + eps``, ``eps ~ N(0, sigma)``.
    levels : int
        Number of lattice points.
    span : float
        Half-width of the lattice in stationary standard deviations.
    """
    if levels < 1:
        raise ValueError(f"need at least one price level, got {levels}")
    if span <= 0:
        raise ValueError("span must be positive")
    if not abs(p.theta) < 1:
        raise ValueError("stationarity violated: |theta| must be < 1")
    mean = p.stationary_mean
    if levels == 1:
        one = np.ones((1, 1))
        return PriceLattice(np.array([mean]), one, np.ones(1))
    if p.sigma <= 0:
        raise ValueError("sigma must be positive for a multi-level lattice")

    sd = p.stationary_std
    grid = np.linspace(mean - span * sd, mean + span * sd, levels)
    mids = 0.5 * (grid[1:] + grid[:-1])
    cond_mean = p.mu + p.theta * grid
    z = (mids[None, :] - cond_mean[:, None]) / p.sigma
    cdf = np.hstack([np.zeros((levels, 1)), ndtr(z), np.ones((levels, 1))])
    trans = np.diff(cdf, axis=1)
    trans = np.clip(trans, 0.0, None)
    trans /= trans.sum(axis=1, keepdims=True)
    return PriceLattice(grid, trans, stationary_distribution(trans))


# --- wind ------------------------------------------------------------------


def adjust_height(v10, wind: WindModel):
    """Power-law extrapolation of wind speed to hub height."""
    if wind.reference_height <= 0:
        raise ValueError("reference_height must be positive")
    return np.asarray(v10, dtype=float) * (wind.hub_height / wind.reference_height) ** wind.shear_exponent


def power_output(v, turbine: TurbineSpec):
    """Turbine power (MW) at hub wind speed ``v`` (m/s)."""
    v = np.asarray(v, dtype=float)
    vci, vr, vco, pr = turbine.cut_in, turbine.rated_speed, turbine.cut_out, turbine.rated_power
    denom = vr**3 - vci**3
    a = pr / denom
    b = vci**3 / denom
    cubic = a * v**3 - b * pr
    out = np.where(v < vci, 0.0, np.where(v <= vr, cubic, np.where(v <= vco, pr, 0.0)))
    return out if out.ndim else float(out)


def _inverse_power(power: float, turbine: TurbineSpec) -> float:
    vci, vr, pr = turbine.cut_in, turbine.rated_speed, turbine.rated_power
    denom = vr**3 - vci**3
    a = pr / denom
    b = vci**3 / denom
    return ((power + b * pr) / a) ** (1.0 / 3.0)


def month_of_day(t: int) -> int:
    """Calendar month (0-based) of day ``t`` (1-based, 365-day years)."""
    day = (t - 1) % 365
    return int(np.searchsorted(_MONTH_START, day, side="right") - 1)


def _weibull_cdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return 0.0
    return -math.expm1(-((x / scale) ** shape))


def _month_pmf(shape: float, scale: float, wind: WindModel, unit_mwh: float) -> np.ndarray:
    tb = wind.turbine
    factor = (wind.hub_height / wind.reference_height) ** wind.shear_exponent
    n = wind.production_levels
    top_energy = 24.0 * tb.rated_power
    upper = _weibull_cdf(tb.cut_out / factor, shape, scale)
    at_least = np.zeros(n + 1)
    for k in range(1, n):
        e_k = (k - 0.5) * unit_mwh
        if e_k > top_energy:
            break
        v_hub = max(tb.cut_in, _inverse_power(e_k / 24.0, tb))
        at_least[k] = max(0.0, upper - _weibull_cdf(v_hub / factor, shape, scale))
    pmf = at_least[:n] - at_least[1 : n + 1]
    pmf[0] = 1.0 - at_least[1]
    pmf = np.clip(pmf, 0.0, None)
    return pmf / pmf.sum()


def production_distribution(wind: WindModel, params: SystemParams) -> ProductionDistribution:
    """Daily production pmf over ``0..production_levels-1`` units.

    Daily energy is the hub-height power curve at the day's wind speed times
    24 h, rounded to the nearest unit; the top level absorbs any excess.
    Period ``t`` uses the month of calendar day ``1 + (t - 1) * calendar_stride``.
    """
    month_pmfs = np.array(
        [_month_pmf(shape, scale, wind, params.unit_mwh) for shape, scale in wind.monthly_weibull]
    )
    stride = wind.calendar_stride
    days = [1 + (t - 1) * stride for t in range(1, params.horizon_days + 1)]
    months = np.array([month_of_day(d) for d in days], dtype=np.int64)
    return ProductionDistribution(month_pmfs[months], months)


class WeibullFitError(ValueError):
    pass


def weibull_loglik_gradient(x: np.ndarray, shape: float, scale: float) -> tuple[float, float]:
    """Gradient of the mean Weibull log-likelihood wrt (shape, scale)."""
    x = np.asarray(x, dtype=float)
    z = x / scale
    zk = z**shape
    lz = np.log(z)
    d_shape = 1.0 / shape + np.mean(lz) - np.mean(zk * lz)
    d_scale = (shape / scale) * (np.mean(zk) - 1.0)
    return float(d_shape), float(d_scale)


def fit_weibull(daily_speeds: Sequence[float]) -> tuple[float, float]:
    """Maximum-likelihood (shape, scale) of a two-parameter Weibull."""
    x = np.asarray(daily_speeds, dtype=float)
    if x.size < 30:
        raise WeibullFitError(f"need at least 30 observations, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise WeibullFitError("observations must be strictly positive")
    if np.ptp(x) <= 1e-12 * x.max():
        raise WeibullFitError("degenerate sample: all observations equal")

    lx = np.log(x / x.max())
    mean_lx = lx.mean()

    def profile(k):
        w = np.exp(k * lx)
        return (w @ lx) / w.sum() - 1.0 / k - mean_lx

    lo, hi = 1e-3, 1.0
    while profile(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise WeibullFitError("shape estimate did not converge")
    shape = optimize.brentq(profile, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    scale = x.max() * np.mean(np.exp(shape * lx)) ** (1.0 / shape)
    grad = weibull_loglik_gradient(x, shape, scale)
    if max(abs(g) for g in grad) >= 1e-6:
        raise WeibullFitError(f"fit did not reach a stationary point, gradient {grad}")
    return float(shape), float(scale)


def read_wind_csv(path: str | Path) -> list[tuple[dt.date, float]]:
    """Read ``date,speed`` rows (ISO dates, m/s)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append((dt.date.fromisoformat(row["date"].strip()), float(row["speed"])))
    return out


def fit_monthly_weibull(records: Iterable[tuple[dt.date, float]]) -> tuple[tuple[float, float], ...]:
    by_month: list[list[float]] = [[] for _ in range(12)]
    for day, speed in records:
        by_month[day.month - 1].append(speed)
    return tuple(fit_weibull(speeds) for speeds in by_month)


def default_weibull_table() -> tuple[tuple[float, float], ...]:
    """Monthly (shape, scale) at 10 m shipped with the package."""
    text = resources.files("ghp").joinpath("data/weibull_monthly.csv").read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    return tuple((float(r["shape"]), float(r["scale"])) for r in rows)
