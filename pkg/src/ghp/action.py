"""Feasible decisions, induced storage flows, rewards and post-decision states.

This is the straightforward reference implementation; the solver kernels in
``ghp._kernels`` re-derive the same rules on integer grid indices and are
checked against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    Decision,
    DerivedFlows,
    FixedContract,
    FreeEveryPeriod,
    FreePeriodic,
    HydrogenPolicy,
    PostDecisionState,
    State,
    SystemParams,
    effective_params,
    h2_sale_day,
)

__all__ = [
    "RewardBreakdown",
    "InfeasibleDecision",
    "derive_flows",
    "feasibility_violations",
    "enumerate_actions",
    "reward",
    "transition_deterministic",
    "snap_down",
]

_EPS = 1e-9


class InfeasibleDecision(ValueError):
    pass


@dataclass(frozen=True)
class RewardBreakdown:
    market_sell: float
    market_buy: float
    ppa: float
    hydrogen: float
    total: float

    @classmethod
    def of(cls, market_sell, market_buy, ppa, hydrogen) -> "RewardBreakdown":
        return cls(market_sell, market_buy, ppa, hydrogen, market_sell + market_buy + ppa + hydrogen)


def snap_down(x, resolution):
    """Largest multiple of ``resolution`` not above ``x`` (float-noise tolerant)."""
    return math.floor(x / resolution + _EPS) * resolution


def _capacity(params: SystemParams):
    # tank size rounded down onto the inventory grid
    return snap_down(params.storage_capacity, params.inventory_resolution)


def derive_flows(s: State, x: Decision, params: SystemParams) -> DerivedFlows:
    """Storage flows induced by decision ``x`` in state ``s``.

    Leftover production (and anything bought) is forced into the
    electrolyzer; whatever exceeds its capacity or the tank headroom is
    curtailed. Conversion loss is booked on the way in.
    """
    if x.sell and x.buy:
        raise InfeasibleDecision("cannot buy and sell in the same period")
    alpha = params.round_trip
    if x.buy == 0:
        raw_in = max(0, s.y - x.sell - x.ppa)
        x_out = max(0, x.sell + x.ppa - s.y)
    else:
        raw_in = x.buy + max(0, s.y - x.ppa)
        x_out = max(0, x.ppa - s.y)
    headroom = _capacity(params) - s.I + x_out
    x_in = snap_down(min(alpha * raw_in, params.cap_electrolyzer, headroom), params.inventory_resolution)
    x_in = max(x_in, 0)
    curtailed = raw_in - x_in / alpha
    loss = x_in * (1 - alpha) / alpha * params.unit_mwh
    return DerivedFlows(x_in=x_in, x_out=x_out, curtailed=curtailed, loss=loss)


def _h2_cap(s: State, flows: DerivedFlows, params: SystemParams):
    available = s.I + flows.x_in - flows.x_out
    return snap_down(min(available, params.cap_h2_sale), params.inventory_resolution)


def _forced_h2(policy: FixedContract, cap):
    return min(policy.quantity, cap)


def feasibility_violations(
    s: State, x: Decision, params: SystemParams, policy: HydrogenPolicy
) -> list[str]:
    params = effective_params(params, policy)
    out = []
    for name in ("sell", "buy", "ppa"):
        val = getattr(x, name)
        if val < 0 or val != int(val):
            out.append(f"{name} must be a non-negative integer")
    if x.h2 < 0:
        out.append("h2 must be non-negative")
    if out:
        return out
    if x.sell * x.buy != 0:
        return ["sell and buy are mutually exclusive"]
    alpha = params.round_trip
    if x.sell + x.ppa > params.cap_transmission:
        out.append("sell + ppa exceeds transmission capacity")
    if x.buy > params.cap_transmission:
        out.append("buy exceeds transmission capacity")
    if x.buy > (_capacity(params) - s.I) / alpha + _EPS:
        out.append("buy does not fit in storage")
    if x.ppa > s.v:
        out.append("ppa exceeds outstanding obligation")
    flows = derive_flows(s, x, params)
    if flows.x_out > params.cap_fuelcell + _EPS:
        out.append("fuel cell capacity exceeded")
    if flows.x_out > s.I + flows.x_in + _EPS:
        out.append("not enough stored energy")
    cap = _h2_cap(s, flows, params)
    if x.h2 > cap + _EPS:
        out.append("h2 exceeds available hydrogen or sale capacity")
    if abs(snap_down(x.h2, params.inventory_resolution) - x.h2) > _EPS:
        out.append("h2 off the inventory grid")
    if not h2_sale_day(policy, s.t):
        if x.h2 != 0:
            out.append("hydrogen sale not allowed in this period")
    elif isinstance(policy, FixedContract) and abs(x.h2 - _forced_h2(policy, cap)) > _EPS:
        out.append("contract quantity must be shipped")
    return out


def _h2_options(s: State, flows: DerivedFlows, params: SystemParams, policy: HydrogenPolicy):
    if not h2_sale_day(policy, s.t):
        return [0]
    cap = _h2_cap(s, flows, params)
    if isinstance(policy, FixedContract):
        return [_forced_h2(policy, cap)]
    if isinstance(policy, (FreeEveryPeriod, FreePeriodic)):
        steps = int(round(cap / params.inventory_resolution))
        return [k * params.inventory_resolution for k in range(steps + 1)]
    return [0]


def enumerate_actions(s: State, params: SystemParams, policy: HydrogenPolicy) -> list[Decision]:
    """All feasible decisions in ``s``, sorted by (h2, sell, ppa, buy)."""
    params = effective_params(params, policy)
    kc = int(params.cap_transmission)
    alpha = params.round_trip
    max_buy = min(kc, math.floor((_capacity(params) - s.I) / alpha + _EPS))
    market = [(sell, 0, ppa) for sell in range(kc + 1) for ppa in range(min(s.v, kc - sell) + 1)]
    market += [(0, buy, ppa) for buy in range(1, max_buy + 1) for ppa in range(min(s.v, kc) + 1)]

    out = []
    for sell, buy, ppa in market:
        base = Decision(sell=sell, buy=buy, ppa=ppa)
        flows = derive_flows(s, base, params)
        if flows.x_out > params.cap_fuelcell + _EPS or flows.x_out > s.I + flows.x_in + _EPS:
            continue
        for h2 in _h2_options(s, flows, params, policy):
            out.append(Decision(sell=sell, buy=buy, ppa=ppa, h2=h2))
    out.sort(key=Decision.tiebreak_key)
    return out


def reward(
    s: State,
    x: Decision,
    params: SystemParams,
    policy: HydrogenPolicy,
    electricity_price: float,
    hydrogen_price: float = 0.0,
    check: bool = True,
) -> RewardBreakdown:
    """Direct reward of ``x`` in ``s``, split into its components (EUR)."""
    if check:
        bad = feasibility_violations(s, x, params, policy)
        if bad:
            raise InfeasibleDecision("; ".join(bad))
    u = params.unit_mwh
    market_sell = electricity_price * x.sell * u
    market_buy = -(electricity_price + params.buy_premium) * x.buy * u
    ppa = params.ppa_price * x.ppa * u
    if s.t % params.ppa_interval == 0:
        ppa -= params.shortage_penalty * max(0, s.v - x.ppa) * u
    gain = params.h2_energy_per_unit
    if isinstance(policy, FixedContract):
        hydrogen = policy.fixed_price * x.h2 * u * gain
        if s.t % policy.n_h == 0:
            hydrogen -= params.shortage_penalty * max(0, policy.quantity - x.h2) * u
    else:
        hydrogen = hydrogen_price * x.h2 * u * gain
    return RewardBreakdown.of(market_sell, market_buy, ppa, hydrogen)


def transition_deterministic(
    s: State, x: Decision, params: SystemParams, policy: HydrogenPolicy | None = None
) -> PostDecisionState:
    if policy is not None:
        params = effective_params(params, policy)
    flows = derive_flows(s, x, params)
    i_star = snap_down(s.I + flows.x_in - flows.x_out - x.h2, params.inventory_resolution)
    if s.t % params.ppa_interval == 0:
        v_star = params.ppa_target
    else:
        v_star = s.v - x.ppa
    return PostDecisionState(t=s.t, pe_idx=s.pe_idx, ph_idx=s.ph_idx, I_star=i_star, v_star=v_star)
