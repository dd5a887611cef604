import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghp.model import MONTHLY_WEIBULL_10M, PriceProcessParams, SystemParams, TurbineSpec, WindModel
from ghp.stochastic import (
    WeibullFitError,
    adjust_height,
    default_weibull_table,
    discretize_ar1,
    fit_monthly_weibull,
    fit_weibull,
    month_of_day,
    power_output,
    production_distribution,
    read_wind_csv,
    weibull_loglik_gradient,
)

TURBINE = TurbineSpec()
BASE_E = PriceProcessParams(mu=5.23, theta=0.873, sigma=5.551)


# --- height and power curve --------------------------------------------------


def test_adjust_height_examples():
    same = WindModel(hub_height=10.0, reference_height=10.0)
    assert adjust_height(5.0, same) == pytest.approx(5.0)
    assert adjust_height(0.0, WindModel()) == 0.0
    assert adjust_height(6.0, WindModel()) == pytest.approx(6 * 12.5 ** (1 / 7))
    assert adjust_height(6.0, WindModel()) == pytest.approx(8.60, abs=0.01)


def test_adjust_height_rejects_bad_reference():
    with pytest.raises(ValueError):
        adjust_height(5.0, WindModel(reference_height=0.0))


def test_power_curve_examples():
    assert power_output(2.0, TURBINE) == 0.0
    assert power_output(20.0, TURBINE) == 4.5
    assert power_output(8.0, TURBINE) == pytest.approx(4.5 * (512 - 27) / (2197 - 27))
    # 4.5 * 485 / 2170 = 1.00576, quoted to three decimals as 1.0059
    assert power_output(8.0, TURBINE) == pytest.approx(1.0059, abs=2e-4)


def test_power_curve_boundaries():
    assert power_output(3.0, TURBINE) == pytest.approx(0.0, abs=1e-12)
    assert power_output(13.0, TURBINE) == pytest.approx(4.5)
    assert power_output(25.0, TURBINE) == 4.5
    assert power_output(25.0 + 1e-9, TURBINE) == 0.0


@given(st.floats(0, 40), st.floats(0, 40))
def test_power_curve_shape(v1, v2):
    lo, hi = sorted((v1, v2))
    p_lo, p_hi = power_output(lo, TURBINE), power_output(hi, TURBINE)
    if hi <= TURBINE.rated_speed:
        assert p_lo <= p_hi + 1e-12
    if TURBINE.rated_speed <= lo and hi <= TURBINE.cut_out:
        assert p_lo == p_hi == TURBINE.rated_power
    if hi < TURBINE.cut_in or lo > TURBINE.cut_out:
        assert p_lo == p_hi == 0.0
    assert 0.0 <= p_lo <= TURBINE.rated_power


# --- price lattices ----------------------------------------------------------


def test_single_level_lattice():
    lat = discretize_ar1(BASE_E, 1)
    assert lat.levels.tolist() == pytest.approx([BASE_E.stationary_mean])
    assert lat.transition.tolist() == [[1.0]]


def test_lattice_rejects_zero_levels():
    with pytest.raises(ValueError):
        discretize_ar1(BASE_E, 0)


def test_base_electricity_lattice_mean():
    lat = discretize_ar1(BASE_E, 11)
    assert lat.mean == pytest.approx(41.2, abs=0.1)
    assert np.all(np.diff(lat.levels) > 0)
    sd = BASE_E.stationary_std
    assert lat.levels[0] == pytest.approx(BASE_E.stationary_mean - 3 * sd)
    assert lat.levels[-1] == pytest.approx(BASE_E.stationary_mean + 3 * sd)


def test_lattice_rows_match_gaussian_cells():
    from scipy.stats import norm

    lat = discretize_ar1(BASE_E, 5)
    g = lat.levels
    mids = (g[1:] + g[:-1]) / 2
    i = 2
    m = BASE_E.mu + BASE_E.theta * g[i]
    expect = np.diff(np.concatenate([[0.0], norm.cdf(mids, m, BASE_E.sigma), [1.0]]))
    assert lat.transition[i] == pytest.approx(expect, abs=1e-12)


processes = st.builds(
    PriceProcessParams,
    mu=st.floats(-20, 60),
    theta=st.floats(-0.95, 0.95),
    sigma=st.floats(0.1, 30),
)


@settings(max_examples=150)
@given(p=processes, levels=st.integers(1, 25), span=st.floats(0.5, 5))
def test_lattice_is_row_stochastic(p, levels, span):
    lat = discretize_ar1(p, levels, span)
    assert np.all(lat.transition >= 0)
    assert np.abs(lat.transition.sum(axis=1) - 1).max() <= 1e-12
    assert np.abs(lat.stationary @ lat.transition - lat.stationary).max() <= 1e-9
    assert lat.stationary.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60)
@given(p=processes.filter(lambda p: abs(p.theta) <= 0.9), levels=st.integers(9, 25), span=st.floats(3, 4))
def test_lattice_mean_close_to_process_mean(p, levels, span):
    lat = discretize_ar1(p, levels, span)
    target = p.stationary_mean
    assert abs(lat.mean - target) <= 0.02 * max(abs(target), p.stationary_std)


# --- production ---------------------------------------------------------------


def test_month_of_day():
    assert [month_of_day(t) for t in (1, 31, 32, 59, 60, 365)] == [0, 0, 1, 1, 2, 11]
    assert month_of_day(366) == 0


def test_default_weibull_table_matches_constants():
    np.testing.assert_allclose(default_weibull_table(), MONTHLY_WEIBULL_10M)


def _pmf_for(shape, scale, levels=22, unit=5.7):
    wind = WindModel(monthly_weibull=((shape, scale),) * 12, production_levels=levels)
    return production_distribution(wind, SystemParams(horizon_days=1, unit_mwh=unit)).probs[0]


def test_production_rows_sum_to_one():
    prod = production_distribution(WindModel(), SystemParams())
    assert prod.probs.shape == (365, 22)
    assert np.abs(prod.probs.sum(axis=1) - 1).max() <= 1e-12
    # 4.5 MW for 24 h is 108 MWh, i.e. at most 19 units of 5.7 MWh
    assert np.all(prod.probs[:, 20:] == 0)


def test_degenerate_calm_gives_zero_production():
    assert _pmf_for(2.0, 1e-3)[0] == pytest.approx(1.0)


def test_rated_plateau_is_a_point_mass():
    # hub speed concentrated near 18 m/s, well inside [13, 25]
    scale = 18.0 / 12.5 ** (1 / 7)
    pmf = _pmf_for(400.0, scale)
    assert pmf[round(24 * 4.5 / 5.7)] == pytest.approx(1.0, abs=1e-9)


def test_january_matches_monte_carlo():
    shape, scale = MONTHLY_WEIBULL_10M[0]
    assert (shape, scale) == (2.514, 6.816)
    pmf = _pmf_for(shape, scale)
    rng = np.random.default_rng(7)
    v10 = scale * rng.weibull(shape, 10**6)
    energy = power_output(adjust_height(v10, WindModel()), TURBINE) * 24 / 5.7
    k = np.minimum(np.floor(energy + 0.5).astype(int), 21)
    hist = np.bincount(k, minlength=22) / k.size
    assert 0.5 * np.abs(hist - pmf).sum() < 0.01


def test_winter_windier_than_summer():
    prod = production_distribution(WindModel(), SystemParams())
    e = prod.expected()
    winter = e[np.isin(prod.months, [11, 0, 1])].mean()
    summer = e[np.isin(prod.months, [5, 6, 7])].mean()
    assert winter > summer


def test_calendar_stride_samples_whole_year():
    prod = production_distribution(WindModel(calendar_stride=4), SystemParams(horizon_days=91))
    assert set(prod.months.tolist()) == set(range(12))


# --- Weibull fitting ------------------------------------------------------------


@pytest.mark.parametrize("shape, scale", [(2.5, 6.8), (3.0, 5.0)])
def test_fit_recovers_generator(shape, scale):
    rng = np.random.default_rng(int(shape * 10))
    x = scale * rng.weibull(shape, 10**5)
    k, lam = fit_weibull(x)
    assert k == pytest.approx(shape, rel=0.02)
    assert lam == pytest.approx(scale, rel=0.02)
    assert max(abs(g) for g in weibull_loglik_gradient(x, k, lam)) < 1e-6


def test_fit_rejects_constant_sample():
    with pytest.raises(WeibullFitError):
        fit_weibull([5.0] * 50)


@pytest.mark.parametrize("bad", [[0.0] + [1.0] * 40, [-1.0] + [2.0] * 40, [1.0] * 10])
def test_fit_rejects_bad_input(bad):
    with pytest.raises(WeibullFitError):
        fit_weibull(bad)


def test_fit_monthly_from_csv(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "wind.csv"
    day = dt.date(2019, 1, 1)
    with open(path, "w") as fh:
        fh.write("date,speed\n")
        for _ in range(3 * 365):
            m = day.month - 1
            fh.write(f"{day.isoformat()},{MONTHLY_WEIBULL_10M[m][1] * rng.weibull(MONTHLY_WEIBULL_10M[m][0]):.4f}\n")
            day += dt.timedelta(days=1)
    fitted = fit_monthly_weibull(read_wind_csv(path))
    assert len(fitted) == 12
    for (k, lam), (k0, lam0) in zip(fitted, MONTHLY_WEIBULL_10M):
        assert lam == pytest.approx(lam0, rel=0.1)
        assert k == pytest.approx(k0, rel=0.35)
