"""Exact finite-horizon backward induction over post-decision states."""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .action import snap_down
from .model import (
    Decision,
    FixedContract,
    FreeEveryPeriod,
    FreePeriodic,
    HydrogenPolicy,
    PlantConfig,
    State,
    SystemParams,
    effective_params,
    stable_hash,
    uses_market_h2_price,
    validate_config,
)
from .stochastic import PriceLattice, ProductionDistribution, discretize_ar1, production_distribution

__all__ = [
    "Problem",
    "ValueTable",
    "ConfigMismatch",
    "TableTooLarge",
    "build_problem",
    "backward_induction",
    "greedy_action",
    "save_table",
    "load_table",
    "table_cells",
    "TABLE_VERSION",
]

TABLE_VERSION = 1
_MAGIC = b"GHPVT\x00"
# refuse tables beyond this many float64 cells unless asked (~4 GB)
MAX_CELLS = 500_000_000


class ConfigMismatch(ValueError):
    pass


class TableTooLarge(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the solver and simulator need, already discretized."""

    params: SystemParams
    policy: HydrogenPolicy
    electricity: PriceLattice
    hydrogen: PriceLattice
    production: ProductionDistribution
    initial_inventory: float = 0.0
    initial_obligation: int | None = None
    initial_pe_idx: int | None = None
    initial_ph_idx: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", effective_params(self.params, self.policy))

    @property
    def config_hash(self) -> str:
        return stable_hash(
            self.params,
            self.policy,
            self.electricity.levels,
            self.electricity.transition,
            self.hydrogen.levels,
            self.hydrogen.transition,
            self.production.probs,
        )

    @property
    def shape(self) -> tuple[int, ...]:
        p = self.params
        return (
            p.horizon_days + 1,
            self.electricity.size,
            self.hydrogen.size,
            p.inventory_points,
            p.ppa_target + 1,
        )

    def initial_state(self) -> tuple[int, int, float, int]:
        """(pe_idx, ph_idx, inventory, obligation) of the post-decision state at t=0."""
        pe = self.initial_pe_idx
        if pe is None:
            pe = self.electricity.nearest(self.electricity.mean)
        ph = self.initial_ph_idx
        if ph is None:
            ph = self.hydrogen.nearest(self.hydrogen.mean)
        v = self.params.ppa_target if self.initial_obligation is None else self.initial_obligation
        inv = snap_down(min(self.initial_inventory, self.params.storage_capacity), self.params.inventory_resolution)
        return pe, ph, inv, v

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        pol = self.policy
        spu = p.steps_per_unit
        mode = K.MODE_NONE
        n_h = 1
        fixed_price = 0.0
        qty = 0.0
        if isinstance(pol, FreeEveryPeriod):
            mode = K.MODE_FREE
        elif isinstance(pol, FreePeriodic):
            mode, n_h = K.MODE_PERIODIC, pol.n_h
        elif isinstance(pol, FixedContract):
            mode, n_h, fixed_price, qty = K.MODE_FIXED, pol.n_h, pol.fixed_price, pol.quantity
        prm = np.zeros(K.N_PRM)
        prm[K.U] = p.unit_mwh
        prm[K.PREMIUM] = p.buy_premium
        prm[K.PPA_PRICE] = p.ppa_price
        prm[K.PEN] = p.shortage_penalty
        prm[K.ALPHA] = p.round_trip
        prm[K.H2_FIXED] = fixed_price
        prm[K.QH] = qty
        prm[K.H2_GAIN] = p.h2_energy_per_unit
        iprm = np.zeros(K.N_IPRM, dtype=np.int64)
        iprm[K.KC] = int(p.cap_transmission)
        iprm[K.KF] = math.floor(p.cap_fuelcell + 1e-9)
        iprm[K.KE_IDX] = math.floor(p.cap_electrolyzer * spu + 1e-9)
        iprm[K.KH_IDX] = math.floor(p.cap_h2_sale * spu + 1e-9)
        iprm[K.NI] = p.inventory_points
        iprm[K.SPU] = spu
        iprm[K.QPPA] = p.ppa_target
        iprm[K.NPPA] = p.ppa_interval
        iprm[K.MODE] = mode
        iprm[K.NH] = n_h
        iprm[K.QH_IDX] = math.floor(qty * spu + 1e-9)
        return prm, iprm

    def h2_price(self, ph_idx: int) -> float:
        if isinstance(self.policy, FixedContract):
            return self.policy.fixed_price
        return float(self.hydrogen.levels[ph_idx])


def build_problem(config: PlantConfig) -> Problem:
    """Discretize prices and wind for ``config``.

    Settings that never sell at the hydrogen market price get a one-level
    hydrogen lattice, since that price cannot affect them.
    """
    bad = validate_config(config)
    if bad:
        raise ValueError("invalid configuration: " + "; ".join(bad))
    opts = config.solver
    e_lat = discretize_ar1(config.electricity, opts.price_levels_electricity, opts.span)
    h_levels = opts.price_levels_hydrogen if uses_market_h2_price(config.policy) else 1
    h_lat = discretize_ar1(config.hydrogen, h_levels, opts.span)
    prod = production_distribution(config.wind, config.system)
    return Problem(
        params=config.system,
        policy=config.policy,
        electricity=e_lat,
        hydrogen=h_lat,
        production=prod,
        initial_inventory=opts.initial_inventory,
        initial_obligation=opts.initial_obligation,
        initial_pe_idx=opts.initial_pe_idx,
        initial_ph_idx=opts.initial_ph_idx,
    )


@dataclass(eq=False)
class ValueTable:
    """``values[t, pe, ph, i, v]``: expected reward-to-go from the
    post-decision state at the end of period ``t`` (inventory grid index
    ``i``, outstanding obligation ``v``)."""

    values: np.ndarray
    problem: Problem
    config_hash: str
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def value(self, t: int, pe_idx: int, ph_idx: int, inventory: float, v: int) -> float:
        """Post-decision value; inventories between grid points interpolate linearly."""
        p = self.problem.params
        x = inventory * p.steps_per_unit
        lo = min(int(math.floor(x + 1e-9)), p.inventory_points - 1)
        w = x - lo
        row = self.values[t, pe_idx, ph_idx, :, v]
        if w <= 1e-12 or lo + 1 >= p.inventory_points:
            return float(row[lo])
        return float((1 - w) * row[lo] + w * row[lo + 1])

    def initial_value(self) -> float:
        pe, ph, inv, v = self.problem.initial_state()
        return self.value(0, pe, ph, inv, v)


def table_cells(problem: Problem) -> int:
    return int(np.prod(problem.shape))


def backward_induction(problem: Problem, *, fast: bool = True, max_cells: int = MAX_CELLS) -> ValueTable:
    """Solve the Bellman recursion exactly by backward induction.

    ``fast=False`` runs the plain enumeration over every market action; the
    default kernel gives the same values with far fewer operations.
    """
    cells = table_cells(problem)
    if cells > max_cells:
        raise TableTooLarge(
            f"value table needs {cells:,} cells ({cells * 8 / 2**30:.1f} GiB) for shape {problem.shape}"
        )
    prm, iprm = problem.packed()
    values = np.zeros(problem.shape)
    start = time.perf_counter()
    K.backward(
        values,
        np.ascontiguousarray(problem.electricity.transition),
        np.ascontiguousarray(problem.hydrogen.transition),
        np.ascontiguousarray(problem.electricity.levels, dtype=np.float64),
        np.ascontiguousarray(problem.hydrogen.levels, dtype=np.float64),
        np.ascontiguousarray(problem.production.probs),
        prm,
        iprm,
        fast,
    )
    return ValueTable(values, problem, problem.config_hash, time.perf_counter() - start)


def _check(table: ValueTable, problem: Problem | None) -> Problem:
    if problem is None:
        return table.problem
    if problem.config_hash != table.config_hash:
        raise ConfigMismatch("value table was computed for a different configuration")
    return problem


def greedy_action(
    table: ValueTable,
    s: State,
    params: SystemParams | None = None,
    policy: HydrogenPolicy | None = None,
) -> Decision:
    """Decision maximizing immediate reward plus continuation value.

    Ties go to the smallest (h2, sell, ppa, buy).
    """
    problem = table.problem
    if params is not None or policy is not None:
        candidate = Problem(
            params=params if params is not None else problem.params,
            policy=policy if policy is not None else problem.policy,
            electricity=problem.electricity,
            hydrogen=problem.hydrogen,
            production=problem.production,
        )
        _check(table, candidate)
    p = problem.params
    prm, iprm = problem.packed()
    i_idx = int(round(s.I * p.steps_per_unit))
    G = np.empty((p.ppa_target + 1, p.inventory_points))
    sell, buy, ppa, m, _, _, _ = K.greedy(
        int(s.y),
        i_idx,
        int(s.v),
        int(s.t),
        float(problem.electricity.levels[s.pe_idx]),
        problem.h2_price(s.ph_idx),
        table.values[s.t, s.pe_idx, s.ph_idx],
        G,
        prm,
        iprm,
    )
    return Decision(sell=int(sell), buy=int(buy), ppa=int(ppa), h2=m / p.steps_per_unit)


# --- binary table files ----------------------------------------------------


def save_table(table: ValueTable, path: str | Path) -> None:
    """Write ``values`` with a JSON header (hash, shape, version)."""
    header = {
        "version": TABLE_VERSION,
        "config_hash": table.config_hash,
        "shape": list(table.values.shape),
        "dtype": "<f8",
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(table.values, dtype="<f8").tobytes())


def read_table_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a value table file")
        (n,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(n))


def load_table(path: str | Path, problem: Problem) -> ValueTable:
    """Read a table written by :func:`save_table`, checking it matches ``problem``."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a value table file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        if header["version"] != TABLE_VERSION:
            raise ValueError(f"unsupported table version {header['version']}")
        if header["config_hash"] != problem.config_hash:
            raise ConfigMismatch("value table was computed for a different configuration")
        shape = tuple(header["shape"])
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(shape).copy()
    if shape != problem.shape:
        raise ConfigMismatch(f"table shape {shape} does not match {problem.shape}")
    return ValueTable(values, problem, header["config_hash"])
