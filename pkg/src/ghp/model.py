"""Domain types and configuration for the wind + hydrogen-storage plant model.

All energy quantities are expressed in discretized energy units; ``unit_mwh``
converts them to MWh. Prices are in EUR/MWh, wind speeds in m/s.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Union

import numpy as np

__all__ = [
    "SystemParams",
    "PriceProcessParams",
    "TurbineSpec",
    "WindModel",
    "FreeEveryPeriod",
    "FreePeriodic",
    "FixedContract",
    "NoSale",
    "NoStorage",
    "HydrogenPolicy",
    "State",
    "Decision",
    "DerivedFlows",
    "PostDecisionState",
    "SolverOptions",
    "PlantConfig",
    "Setting",
    "ValidationReport",
    "validate",
    "validate_config",
    "effective_params",
    "parse_setting",
    "base_case",
    "reduced_case",
    "REDUCED_UNIT_MWH",
    "BASE_UNIT_MWH",
    "BENCHMARK_SETTINGS",
    "load_config",
    "save_config",
    "config_to_dict",
    "config_from_dict",
    "stable_hash",
]

BASE_UNIT_MWH = 5.7
# cable energy per day (5 MW * 24 h) spread over 11 production steps
REDUCED_UNIT_MWH = 120.0 / 11.0

# Appendix table of fitted daily wind-speed distributions at 10 m (shape, scale).
MONTHLY_WEIBULL_10M: tuple[tuple[float, float], ...] = (
    (2.514, 6.816),
    (2.483, 6.643),
    (2.566, 6.413),
    (3.027, 5.641),
    (3.388, 5.670),
    (3.107, 5.330),
    (3.144, 5.142),
    (3.097, 4.939),
    (2.641, 5.223),
    (2.702, 5.812),
    (2.695, 5.959),
    (2.547, 6.453),
)

BENCHMARK_SETTINGS = (
    "A",
    "B(7)",
    "B(14)",
    "C(1,35,3)",
    "C(1,35,4)",
    "C(7,35,20)",
    "C(14,35,30)",
    "D(H2)",
    "D(B)",
    "E",
)


@dataclass(frozen=True)
class SystemParams:
    """Plant, contract and capacity constants.

    Capacities are per period (day) in energy units; ``storage_capacity`` is
    in energy units of stored (post-conversion) energy.
    """

    horizon_days: int = 365
    ppa_interval: int = 7
    ppa_target: int = 5
    ppa_price: float = 35.0
    shortage_penalty: float = 200.0
    eff_electrolyzer: float = math.sqrt(0.5)
    eff_fuelcell: float = math.sqrt(0.5)
    cap_electrolyzer: float = 21.0
    cap_fuelcell: float = 21.0
    cap_transmission: int = 21
    cap_h2_sale: float = 200.0
    storage_capacity: float = 200.0
    buy_premium: float = 0.0
    unit_mwh: float = BASE_UNIT_MWH
    inventory_resolution: float = 0.5
    # hydrogen revenue counts the fuel-cell loss back in: one stored unit
    # sold as gas is 1 / eff_fuelcell units of hydrogen energy
    h2_fuelcell_adjusted: bool = True

    @property
    def h2_energy_per_unit(self) -> float:
        return 1.0 / self.eff_fuelcell if self.h2_fuelcell_adjusted else 1.0

    @property
    def round_trip(self) -> float:
        return self.eff_electrolyzer * self.eff_fuelcell

    @property
    def steps_per_unit(self) -> int:
        return int(round(1.0 / self.inventory_resolution))

    @property
    def inventory_points(self) -> int:
        return int(math.floor(self.storage_capacity * self.steps_per_unit + 1e-9)) + 1

    def inventory_grid(self) -> np.ndarray:
        return np.arange(self.inventory_points) * self.inventory_resolution

    def with_round_trip(self, alpha: float) -> "SystemParams":
        """Split ``alpha`` evenly over electrolyzer and fuel cell."""
        eff = math.sqrt(alpha)
        return replace(self, eff_electrolyzer=eff, eff_fuelcell=eff)


@dataclass(frozen=True)
class PriceProcessParams:
    """AR(1) price process ``p' = mu + theta * p + N(0, sigma)``."""

    mu: float
    theta: float
    sigma: float

    @property
    def stationary_mean(self) -> float:
        return self.mu / (1.0 - self.theta)

    @property
    def stationary_std(self) -> float:
        return self.sigma / math.sqrt(1.0 - self.theta**2)

    def with_stationary_mean(self, mean: float) -> "PriceProcessParams":
        return replace(self, mu=mean * (1.0 - self.theta))


@dataclass(frozen=True)
class TurbineSpec:
    rated_power: float = 4.5
    cut_in: float = 3.0
    rated_speed: float = 13.0
    cut_out: float = 25.0


@dataclass(frozen=True)
class WindModel:
    monthly_weibull: tuple[tuple[float, float], ...] = MONTHLY_WEIBULL_10M
    turbine: TurbineSpec = field(default_factory=TurbineSpec)
    hub_height: float = 125.0
    reference_height: float = 10.0
    shear_exponent: float = 1.0 / 7.0
    production_levels: int = 22
    # calendar days spanned by one period when picking the month's wind
    # distribution; > 1 lets a short horizon sweep a whole year
    calendar_stride: int = 1


# --- hydrogen trading settings -------------------------------------------


@dataclass(frozen=True)
class FreeEveryPeriod:
    """Setting A: hydrogen sold at the market price, any day."""


@dataclass(frozen=True)
class FreePeriodic:
    """Setting B(n_h): market sales only on days with ``t % n_h == 0``."""

    n_h: int


@dataclass(frozen=True)
class FixedContract:
    """Setting C(n_h, price, quantity): ``quantity`` due every n_h-th day."""

    n_h: int
    fixed_price: float
    quantity: float


@dataclass(frozen=True)
class NoSale:
    """Setting D: storage present, hydrogen never sold."""


@dataclass(frozen=True)
class NoStorage:
    """Setting E: no electrolyzer, tank or fuel cell."""


HydrogenPolicy = Union[FreeEveryPeriod, FreePeriodic, FixedContract, NoSale, NoStorage]

_POLICY_KINDS = {
    "free_every_period": FreeEveryPeriod,
    "free_periodic": FreePeriodic,
    "fixed_contract": FixedContract,
    "no_sale": NoSale,
    "no_storage": NoStorage,
}
_POLICY_NAMES = {cls: name for name, cls in _POLICY_KINDS.items()}


def uses_market_h2_price(policy: HydrogenPolicy) -> bool:
    return isinstance(policy, (FreeEveryPeriod, FreePeriodic))


def h2_sale_day(policy: HydrogenPolicy, t: int) -> bool:
    """True if hydrogen may (or must) be sold in period ``t``."""
    if isinstance(policy, FreeEveryPeriod):
        return True
    if isinstance(policy, (FreePeriodic, FixedContract)):
        return t % policy.n_h == 0
    return False


# --- MDP state and decisions ---------------------------------------------


@dataclass(frozen=True)
class State:
    t: int
    pe_idx: int
    ph_idx: int
    y: int
    I: float
    v: int


@dataclass(frozen=True, order=True)
class Decision:
    sell: int = 0
    buy: int = 0
    ppa: int = 0
    h2: float = 0

    def tiebreak_key(self) -> tuple:
        return (self.h2, self.sell, self.ppa, self.buy)


@dataclass(frozen=True)
class DerivedFlows:
    x_in: float
    x_out: float
    curtailed: float
    loss: float


@dataclass(frozen=True)
class PostDecisionState:
    t: int
    pe_idx: int
    ph_idx: int
    I_star: float
    v_star: int


@dataclass(frozen=True)
class SolverOptions:
    """Lattice sizes and initial state for a solve.

    ``initial_obligation=None`` means the full PPA target; ``None`` price
    indices select the level nearest the stationary mean.
    """

    price_levels_electricity: int = 11
    price_levels_hydrogen: int = 11
    span: float = 3.0
    initial_inventory: float = 0.0
    initial_obligation: int | None = None
    initial_pe_idx: int | None = None
    initial_ph_idx: int | None = None


@dataclass(frozen=True)
class PlantConfig:
    system: SystemParams = field(default_factory=SystemParams)
    electricity: PriceProcessParams = field(
        default_factory=lambda: PriceProcessParams(mu=5.23, theta=0.873, sigma=5.551)
    )
    hydrogen: PriceProcessParams = field(
        default_factory=lambda: PriceProcessParams(mu=5.23, theta=0.873, sigma=5.551)
    )
    wind: WindModel = field(default_factory=WindModel)
    policy: HydrogenPolicy = field(default_factory=FreeEveryPeriod)
    solver: SolverOptions = field(default_factory=SolverOptions)


# --- validation ----------------------------------------------------------


class ValidationReport(list):
    """List of violated invariants; empty means valid."""

    @property
    def ok(self) -> bool:
        return len(self) == 0


def _is_int(x) -> bool:
    return float(x) == int(x)


def validate(
    params: SystemParams, policy: HydrogenPolicy, wind: WindModel | None = None
) -> ValidationReport:
    report = ValidationReport()
    if not 0 < params.eff_electrolyzer <= 1:
        report.append("eff_electrolyzer out of range")
    if not 0 < params.eff_fuelcell <= 1:
        report.append("eff_fuelcell out of range")
    for name in ("cap_electrolyzer", "cap_fuelcell", "cap_transmission", "cap_h2_sale"):
        if getattr(params, name) < 0:
            report.append(f"{name} must be >= 0")
    if not _is_int(params.cap_transmission):
        report.append("cap_transmission must be a whole number of units")
    if params.storage_capacity < 0:
        report.append("storage_capacity must be >= 0")
    if params.horizon_days < 1:
        report.append("horizon_days must be >= 1")
    if params.ppa_interval < 1:
        report.append("ppa_interval must be >= 1")
    if params.ppa_target < 0 or not _is_int(params.ppa_target):
        report.append("ppa_target must be a non-negative integer")
    elif params.ppa_target > params.cap_transmission * params.ppa_interval:
        report.append("ppa_target exceeds deliverable transmission")
    if params.unit_mwh <= 0:
        report.append("unit_mwh must be > 0")
    res = params.inventory_resolution
    if res <= 0 or res > 1 or abs(1.0 / res - round(1.0 / res)) > 1e-9:
        report.append("inventory_resolution must be 1/k for a positive integer k")
    if params.shortage_penalty < 0:
        report.append("shortage_penalty must be >= 0")

    if isinstance(policy, (FreePeriodic, FixedContract)) and policy.n_h < 1:
        report.append("n_h must be >= 1")
    if isinstance(policy, FixedContract):
        if policy.quantity < 0:
            report.append("contract quantity must be >= 0")
        elif params.inventory_resolution > 0 and abs(policy.quantity / params.inventory_resolution - round(policy.quantity / params.inventory_resolution)) > 1e-9:
            report.append("contract quantity must lie on the inventory grid")
    if not isinstance(policy, tuple(_POLICY_NAMES)):
        report.append(f"unknown hydrogen policy {policy!r}")

    if wind is not None:
        tb = wind.turbine
        if not 0 < tb.cut_in:
            report.append("cut_in must be > 0")
        if not tb.cut_in < tb.rated_speed:
            report.append("cut_in < rated required")
        if not tb.rated_speed < tb.cut_out:
            report.append("rated < cut_out required")
        if tb.rated_power <= 0:
            report.append("rated_power must be > 0")
        if len(wind.monthly_weibull) != 12:
            report.append("monthly_weibull needs 12 (shape, scale) pairs")
        for i, (shape, scale) in enumerate(wind.monthly_weibull):
            if shape <= 0 or scale <= 0:
                report.append(f"month {i + 1}: weibull shape and scale must be > 0")
        if wind.calendar_stride < 1:
            report.append("calendar_stride must be >= 1")
        if wind.production_levels < 2:
            report.append("production_levels must be >= 2")
        if wind.reference_height <= 0 or wind.hub_height <= 0:
            report.append("heights must be > 0")
    return report


def _validate_process(name: str, p: PriceProcessParams) -> list[str]:
    out = []
    if not abs(p.theta) < 1:
        out.append(f"{name}: stationarity violated (|theta| must be < 1)")
    if p.sigma < 0:
        out.append(f"{name}: sigma must be >= 0")
    return out


def validate_config(config: PlantConfig) -> ValidationReport:
    report = validate(config.system, config.policy, config.wind)
    report.extend(_validate_process("electricity", config.electricity))
    report.extend(_validate_process("hydrogen", config.hydrogen))
    opts = config.solver
    if opts.price_levels_electricity < 1 or opts.price_levels_hydrogen < 1:
        report.append("price level counts must be >= 1")
    if opts.span <= 0:
        report.append("span must be > 0")
    if not 0 <= opts.initial_inventory <= config.system.storage_capacity:
        report.append("initial_inventory outside [0, storage_capacity]")
    if opts.initial_obligation is not None and not (
        0 <= opts.initial_obligation <= config.system.ppa_target
    ):
        report.append("initial_obligation outside [0, ppa_target]")
    return report


def effective_params(params: SystemParams, policy: HydrogenPolicy) -> SystemParams:
    """Parameters actually used by the optimizer under ``policy``.

    Without storage the electrolyzer, fuel cell and tank all vanish.
    """
    if isinstance(policy, NoStorage):
        return replace(params, cap_electrolyzer=0.0, cap_fuelcell=0.0, storage_capacity=0.0)
    return params


# --- named settings ------------------------------------------------------


@dataclass(frozen=True)
class Setting:
    label: str
    policy: HydrogenPolicy
    round_trip: float | None = None

    def apply(self, config: PlantConfig) -> PlantConfig:
        system = config.system
        if self.round_trip is not None:
            system = system.with_round_trip(self.round_trip)
        return replace(config, system=system, policy=self.policy)


_SETTING_RE = re.compile(r"^\s*([A-E])\s*(?:\(([^)]*)\))?\s*$")


def parse_setting(text: str, quantity_scale: float = 1.0, quantity_step: float = 0.5) -> Setting:
    """Parse a setting label such as ``"B(7)"`` or ``"C(1,35,3)"``.

    ``quantity_scale`` rescales contract quantities when the energy unit
    differs from the one the label was written in; scaled quantities are
    rounded to the nearest positive multiple of ``quantity_step``.
    """
    m = _SETTING_RE.match(text)
    if not m:
        raise ValueError(f"unrecognised setting {text!r}")
    letter, args = m.group(1), m.group(2)
    parts = [a.strip() for a in args.split(",")] if args else []
    if letter == "A" and not parts:
        return Setting(text, FreeEveryPeriod())
    if letter == "B" and len(parts) == 1:
        return Setting(text, FreePeriodic(int(parts[0])))
    if letter == "C" and len(parts) == 3:
        qty = float(parts[2])
        if quantity_scale != 1.0:
            qty = max(quantity_step, round(qty * quantity_scale / quantity_step) * quantity_step)
        return Setting(text, FixedContract(int(parts[0]), float(parts[1]), float(qty)))
    if letter == "D" and len(parts) == 1 and parts[0].upper() in ("H2", "B"):
        return Setting(text, NoSale(), 0.9 if parts[0].upper() == "B" else None)
    if letter == "E" and not parts:
        return Setting(text, NoStorage())
    raise ValueError(f"unrecognised setting {text!r}")


# --- benchmark configurations ----------------------------------------------


def base_case(policy: HydrogenPolicy | None = None) -> PlantConfig:
    """Benchmark plant: 4.5 MW turbine, 5 MW cable/electrolyzer/fuel cell,
    1140 MWh tank, weekly 5-unit PPA at 35 EUR/MWh."""
    return PlantConfig(policy=policy if policy is not None else FreeEveryPeriod())


def reduced_case(
    policy: HydrogenPolicy | None = None, horizon_days: int = 91, price_levels: int = 7
) -> PlantConfig:
    """Coarse-grained benchmark used for fast experiments.

    The energy unit is widened to 120/11 MWh so the 12 production levels
    cover the daily cable capacity; the tank is cut to 50 units (545 MWh)
    so the half-unit inventory grid has 101 points. Short horizons sample
    the calendar every ``round(365 / horizon_days)`` days, so the wind
    regime still runs through all four seasons.
    """
    u = REDUCED_UNIT_MWH
    system = SystemParams(
        horizon_days=horizon_days,
        ppa_target=max(1, round(5 * BASE_UNIT_MWH / u)),
        cap_electrolyzer=11.0,
        cap_fuelcell=11.0,
        cap_transmission=11,
        cap_h2_sale=50.0,
        storage_capacity=50.0,
        unit_mwh=u,
    )
    return PlantConfig(
        system=system,
        wind=WindModel(production_levels=12, calendar_stride=max(1, round(365 / horizon_days))),
        policy=policy if policy is not None else FreeEveryPeriod(),
        solver=SolverOptions(price_levels_electricity=price_levels, price_levels_hydrogen=price_levels),
    )


# --- (de)serialization ---------------------------------------------------


def _policy_to_dict(policy: HydrogenPolicy) -> dict:
    out = {"kind": _POLICY_NAMES[type(policy)]}
    out.update(dataclasses.asdict(policy))
    return out


def _policy_from_dict(d: dict) -> HydrogenPolicy:
    d = dict(d)
    if "setting" in d:
        return parse_setting(d["setting"]).policy
    cls = _POLICY_KINDS[d.pop("kind")]
    return cls(**d)


def config_to_dict(config: PlantConfig) -> dict:
    wind = dataclasses.asdict(config.wind)
    wind["monthly_weibull"] = [list(p) for p in config.wind.monthly_weibull]
    return {
        "system": dataclasses.asdict(config.system),
        "electricity": dataclasses.asdict(config.electricity),
        "hydrogen": dataclasses.asdict(config.hydrogen),
        "wind": wind,
        "policy": _policy_to_dict(config.policy),
        "solver": dataclasses.asdict(config.solver),
    }


def config_from_dict(d: dict) -> PlantConfig:
    """Inverse of :func:`config_to_dict`; missing fields take base-case defaults.

    A policy given as ``{"setting": "D(B)"}`` also applies the setting's
    round-trip efficiency, if it has one.
    """
    default = PlantConfig()
    wind_d = dict(d.get("wind", {}))
    if "turbine" in wind_d:
        wind_d["turbine"] = TurbineSpec(**wind_d["turbine"])
    if "monthly_weibull" in wind_d:
        wind_d["monthly_weibull"] = tuple(tuple(map(float, p)) for p in wind_d["monthly_weibull"])
    cfg = PlantConfig(
        system=replace(default.system, **d.get("system", {})),
        electricity=replace(default.electricity, **d.get("electricity", {})),
        hydrogen=replace(default.hydrogen, **d.get("hydrogen", {})),
        wind=replace(default.wind, **wind_d),
        policy=_policy_from_dict(d["policy"]) if "policy" in d else default.policy,
        solver=replace(default.solver, **d.get("solver", {})),
    )
    if "setting" in d.get("policy", {}):
        cfg = parse_setting(d["policy"]["setting"]).apply(cfg)
    return cfg


def load_config(path: str | Path) -> PlantConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(config: PlantConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def stable_hash(*parts: Any) -> str:
    """SHA-256 over JSON-able objects and numpy arrays, in order."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            arr = np.ascontiguousarray(part, dtype=np.float64)
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        else:
            if dataclasses.is_dataclass(part):
                part = {"type": type(part).__name__, **dataclasses.asdict(part)}
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()
