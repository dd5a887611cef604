from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghp.action import (
    InfeasibleDecision,
    derive_flows,
    enumerate_actions,
    feasibility_violations,
    reward,
    transition_deterministic,
)
from ghp.model import (
    Decision,
    FixedContract,
    FreeEveryPeriod,
    FreePeriodic,
    NoSale,
    NoStorage,
    State,
    SystemParams,
    effective_params,
)

BASE = SystemParams()
HALF = SystemParams(eff_electrolyzer=0.5, eff_fuelcell=1.0)  # alpha = 0.5 exactly


def st_(t=1, y=0, I=0.0, v=0, pe=0, ph=0):
    return State(t=t, pe_idx=pe, ph_idx=ph, y=y, I=I, v=v)


# --- flows ---------------------------------------------------------------------


def test_flows_leftover_production_goes_to_storage():
    f = derive_flows(st_(y=10), Decision(sell=4, ppa=5), HALF)
    assert (f.x_in, f.x_out) == (0.5, 0)
    assert f.curtailed == pytest.approx(0.0)


def test_flows_obligation_from_storage():
    f = derive_flows(st_(y=0, I=10), Decision(ppa=5), HALF)
    assert (f.x_in, f.x_out) == (0, 5)


def test_flows_buying_branch():
    f = derive_flows(st_(y=3, I=10), Decision(buy=2, ppa=5), HALF)
    assert (f.x_out, f.x_in) == (2, 1.0)


def test_flows_reject_buy_and_sell():
    with pytest.raises(InfeasibleDecision):
        derive_flows(st_(y=3), Decision(sell=1, buy=1), HALF)


def test_flows_curtail_beyond_electrolyzer():
    p = SystemParams(eff_electrolyzer=0.5, eff_fuelcell=1.0, cap_electrolyzer=2.0)
    f = derive_flows(st_(y=10), Decision(), p)
    assert f.x_in == 2.0
    assert f.curtailed == pytest.approx(6.0)
    assert f.loss == pytest.approx(2.0 * 5.7)


def test_flows_curtail_at_full_tank():
    f = derive_flows(st_(y=10, I=199.5), Decision(), HALF)
    assert f.x_in == 0.5
    assert f.curtailed == pytest.approx(9.0)


# --- action sets -------------------------------------------------------------------


def test_no_storage_nothing_to_trade():
    acts = enumerate_actions(st_(y=0, I=0, v=0), BASE, NoStorage())
    assert acts == [Decision()]


def test_transmission_capacity():
    acts = set(enumerate_actions(st_(y=21, I=0, v=5), BASE, NoSale()))
    assert Decision(sell=16, ppa=5) in acts
    assert Decision(sell=17, ppa=5) not in acts
    assert "sell + ppa exceeds transmission capacity" in feasibility_violations(
        st_(y=21, v=5), Decision(sell=17, ppa=5), BASE, NoSale()
    )


def test_contract_forces_available_quantity():
    p = SystemParams(eff_electrolyzer=1.0, eff_fuelcell=1.0)
    pol = FixedContract(n_h=1, fixed_price=35.0, quantity=3.0)
    s = st_(y=0, I=2.0)
    acts = enumerate_actions(s, p, pol)
    assert {a.h2 for a in acts if a.sell == a.buy == a.ppa == 0} == {2.0}
    r = reward(s, Decision(h2=2.0), p, pol, electricity_price=40.0)
    assert r.hydrogen == pytest.approx(35 * 2 * 5.7 - 200 * 1 * 5.7)


def test_periodic_sales_only_on_due_days():
    s_off = st_(t=3, I=5.0)
    s_on = st_(t=7, I=5.0)
    assert {a.h2 for a in enumerate_actions(s_off, BASE, FreePeriodic(7))} == {0}
    idle = [a for a in enumerate_actions(s_on, BASE, FreePeriodic(7)) if a.sell == a.buy == a.ppa == 0]
    assert max(a.h2 for a in idle) == 5.0


def test_actions_sorted_by_tiebreak():
    acts = enumerate_actions(st_(y=3, I=2.0, v=2), SystemParams(cap_transmission=4), FreeEveryPeriod())
    keys = [a.tiebreak_key() for a in acts]
    assert keys == sorted(keys)
    assert len(set(acts)) == len(acts)


# --- reward ----------------------------------------------------------------------------


def test_reward_market_sale():
    r = reward(st_(y=10, v=0, t=1), Decision(sell=10), BASE, NoSale(), electricity_price=40.0)
    assert r.market_sell == pytest.approx(2280.0)


def test_reward_deadline_penalty():
    r = reward(st_(t=7, y=3, v=5), Decision(ppa=3), BASE, NoSale(), electricity_price=40.0)
    assert r.ppa == pytest.approx(35 * 3 * 5.7 - 200 * 2 * 5.7)
    assert r.ppa == pytest.approx(-1681.5)


def test_reward_zero_action_off_deadline():
    r = reward(st_(t=3, v=5), Decision(), BASE, NoSale(), electricity_price=40.0)
    assert r.total == 0.0


def test_reward_hydrogen_counts_fuel_cell_loss_back():
    s = st_(t=1, I=4.0)
    r = reward(s, Decision(h2=2.0), BASE, FreeEveryPeriod(), electricity_price=40.0, hydrogen_price=50.0)
    assert r.hydrogen == pytest.approx(50 * 2 * 5.7 / BASE.eff_fuelcell)
    plain = SystemParams(h2_fuelcell_adjusted=False)
    r = reward(s, Decision(h2=2.0), plain, FreeEveryPeriod(), electricity_price=40.0, hydrogen_price=50.0)
    assert r.hydrogen == pytest.approx(50 * 2 * 5.7)


def test_reward_rejects_infeasible():
    with pytest.raises(InfeasibleDecision):
        reward(st_(y=0, I=0, v=5), Decision(ppa=5), BASE, NoSale(), electricity_price=40.0)


# --- transition -----------------------------------------------------------------------


def test_transition_inventory_arithmetic():
    s = st_(t=1, y=4, I=100.0)
    x = Decision(h2=3.0)
    assert derive_flows(s, x, HALF).x_in == 2.0
    assert transition_deterministic(s, x, HALF).I_star == 99.0


def test_transition_resets_obligation_at_deadline():
    post = transition_deterministic(st_(t=7, y=5, v=5), Decision(ppa=2), BASE)
    assert post.v_star == 5
    post = transition_deterministic(st_(t=6, y=5, v=5), Decision(ppa=2), BASE)
    assert post.v_star == 3


def test_transition_half_unit():
    post = transition_deterministic(st_(t=1, y=1), Decision(), HALF)
    assert post.I_star == 0.5


# --- exhaustive invariants on a small plant -----------------------------------------------

SMALL = dict(
    cap_transmission=3,
    cap_electrolyzer=2.0,
    cap_fuelcell=2.0,
    cap_h2_sale=2.0,
    storage_capacity=3.0,
    ppa_target=2,
    ppa_interval=3,
)
POLICIES = [FreeEveryPeriod(), FreePeriodic(2), FixedContract(2, 30.0, 1.5), NoSale(), NoStorage()]
ALPHAS = [(0.5, 1.0), (0.9, 0.9), (1.0, 1.0), (0.8, 0.5)]


def _small_states(p):
    grid = [k * p.inventory_resolution for k in range(int(p.storage_capacity / p.inventory_resolution) + 1)]
    for t in (1, 2, 3):
        for y in range(5):
            for inv in grid:
                for v in range(p.ppa_target + 1):
                    yield st_(t=t, y=y, I=inv, v=v)


@pytest.mark.parametrize("ae, af", ALPHAS)
@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: type(p).__name__)
def test_exhaustive_invariants(policy, ae, af):
    p = SystemParams(eff_electrolyzer=ae, eff_fuelcell=af, **SMALL)
    eff = effective_params(p, policy)
    # 0.5 and 1.0 are exact binary fractions, so the balance must hold exactly
    exact = eff.round_trip in (0.5, 1.0)
    for s in _small_states(eff):
        acts = enumerate_actions(s, p, policy)
        assert acts, s
        zero = [a for a in acts if a.sell == a.buy == a.ppa == 0]
        assert zero, s
        for x in acts:
            assert feasibility_violations(s, x, p, policy) == []
            f = derive_flows(s, x, eff)
            # energy balance in units, exact up to float noise
            lhs = s.y
            rhs = (x.sell + x.ppa - f.x_out) + f.x_in / eff.round_trip - x.buy + f.curtailed
            assert abs(lhs - rhs) <= 1e-9
            assert f.curtailed >= -1e-12
            assert 0 <= f.x_in <= eff.cap_electrolyzer + 1e-12
            assert 0 <= f.x_out <= eff.cap_fuelcell + 1e-12
            if exact:
                alpha = Fraction(eff.round_trip)
                balance = Fraction(s.y) - (x.sell + x.ppa - f.x_out) + x.buy - Fraction(f.x_in) / alpha
                assert balance == Fraction(f.curtailed)
            post = transition_deterministic(s, x, eff)
            assert 0 <= post.I_star <= eff.storage_capacity
            assert 0 <= post.v_star <= eff.ppa_target
            r = reward(s, x, p, policy, electricity_price=37.0, hydrogen_price=44.0, check=False)
            assert r.total == r.market_sell + r.market_buy + r.ppa + r.hydrogen
            if s.t % p.ppa_interval != 0:
                assert r.ppa == pytest.approx(p.ppa_price * x.ppa * p.unit_mwh)


@settings(max_examples=60, deadline=None)
@given(
    t=st.integers(1, 6),
    y=st.integers(0, 6),
    k=st.integers(0, 6),
    v=st.integers(0, 2),
    ph=st.integers(0, 5),
    policy=st.sampled_from(POLICIES),
)
def test_action_set_ignores_hydrogen_price(t, y, k, v, ph, policy):
    p = SystemParams(**SMALL)
    s = st_(t=t, y=y, I=min(k * 0.5, p.storage_capacity), v=v)
    other = State(t=s.t, pe_idx=s.pe_idx, ph_idx=ph, y=s.y, I=s.I, v=s.v)
    assert enumerate_actions(s, p, policy) == enumerate_actions(other, p, policy)


def test_action_sets_nest_across_settings():
    p = SystemParams(**SMALL)
    for s in _small_states(p):
        a = set(enumerate_actions(s, p, FreeEveryPeriod()))
        b = set(enumerate_actions(s, p, FreePeriodic(2)))
        d = set(enumerate_actions(s, p, NoSale()))
        e = set(enumerate_actions(s, p, NoStorage()))
        assert e <= d <= b <= a, s
