import itertools
import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from kiteupset.errors import ConfigError
from kiteupset.losseval import (
    ONE_WEEK_MIN,
    LossModelParams,
    fn_rate,
    fp_prob_counts,
    fp_prob_from_cdf,
    fp_prob_threshold,
    hours_to_minutes,
    kw_min_to_kwh,
    kwh_to_kw_min,
    loss_breakdown,
    loss_rate,
    minutes_to_hours,
    rank_predictors,
)


def test_no_predictor_weekly_downtime():
    params = LossModelParams(p_f=2e-7, fn_conditional=1.0, downtime=ONE_WEEK_MIN)
    b = loss_breakdown(params)
    assert b["n_pc"] == pytest.approx(5e6)
    assert b["n_mpc"] == pytest.approx(4032.0)
    assert loss_rate(params) == pytest.approx(4032.0 / (5e6 + 4032.0))
    assert loss_rate(params) == pytest.approx(8.06e-4, rel=1e-3)


def test_zero_false_negative_limit():
    params = LossModelParams(p_f=2e-7, fn_conditional=0.0, fp_probability=0.0048)
    assert loss_rate(params) == pytest.approx(0.0048 * 0.4 / 3.9)
    assert loss_rate(params) == pytest.approx(4.92e-4, rel=1e-3)
    assert math.isinf(loss_breakdown(params)["n_pc"])


def test_perfect_predictor_has_no_loss():
    assert loss_rate(LossModelParams(fn_conditional=0.0, fp_probability=0.0, e_misc=0.0)) == 0.0


def test_loss_is_monotone():
    base = LossModelParams(p_f=1e-5, fn_conditional=0.5, fp_probability=0.01, downtime=600.0, e_misc=1.0)
    steps = {"fp_probability": 0.005, "fn_conditional": 0.1, "downtime": 300.0, "e_misc": 2.0}
    for name, step in steps.items():
        values = [loss_rate(replace(base, **{name: getattr(base, name) + k * step})) for k in range(5)]
        assert all(b >= a for a, b in zip(values, values[1:])), name


def test_fn_rate():
    assert fn_rate(0, 50, 2e-7) == 0.0
    assert fn_rate(1, 99, 2e-7) == pytest.approx(2e-9)
    with pytest.raises(ValueError):
        fn_rate(0, 0, 2e-7)
    assert LossModelParams(p_f=2e-7).lambda_fn == 2e-7


def test_fp_probability_from_cdf():
    assert fp_prob_from_cdf(0.99, 0.002) == pytest.approx(0.008)
    assert fp_prob_from_cdf(1.0, 0.002) == 0.0


def test_fp_probability_threshold_quantile():
    values = np.arange(1000.0)
    assert fp_prob_threshold(values, float(np.quantile(values, 0.99)), 0.0) == pytest.approx(0.01, abs=1e-3)
    assert fp_prob_threshold(values, 2000.0, 1e-4) == 0.0


def test_fp_probability_warns_on_low_threshold(caplog):
    with caplog.at_level(logging.WARNING, logger="kiteupset.losseval"):
        fp_prob_threshold(np.arange(1000.0), 10.0, 0.0)
    assert "below the median" in caplog.text
    with pytest.raises(ValueError):
        fp_prob_threshold([], 1.0, 0.0)


def test_fp_probability_counts():
    assert fp_prob_counts(3, 200) == pytest.approx(0.015)
    with pytest.raises(ValueError):
        fp_prob_counts(0, 0)


def test_unit_conversions_round_trip():
    for value in (0.0, 1.0, 2.5, 10080.0, 1e-7):
        assert hours_to_minutes(minutes_to_hours(value)) == pytest.approx(value, rel=1e-15, abs=0.0)
        assert kwh_to_kw_min(kw_min_to_kwh(value)) == pytest.approx(value, rel=1e-15, abs=0.0)
    assert LossModelParams().e_pc == pytest.approx(3.9 * 2.5 / 60.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        LossModelParams(p_f=1.5)
    with pytest.raises(ConfigError):
        LossModelParams(downtime=math.inf)
    with pytest.raises(ConfigError):
        LossModelParams(p_pc=0.0)


def test_single_predictor_ranked_first():
    rows = rank_predictors([("only", LossModelParams())], [60.0])
    assert rows[0]["rank"] == 1
    assert rows[0]["name"] == "only"


def test_ties_keep_name_order():
    params = LossModelParams(fn_conditional=0.5)
    rows = rank_predictors([("b", params), ("a", params)], [60.0])
    assert [r["name"] for r in rows] == ["a", "b"]


def test_ranking_sorted_per_downtime():
    entries = [
        ("none", LossModelParams(p_f=2e-7)),
        ("thr+8%", LossModelParams(p_f=2e-7, fn_conditional=0.0, fp_probability=0.0048)),
        ("thr+16%", LossModelParams(p_f=2e-7, fn_conditional=0.0, fp_probability=0.0001)),
        ("leaky", LossModelParams(p_f=2e-7, fn_conditional=0.2, fp_probability=0.0)),
    ]
    downtimes = [60.0, 1440.0, 10080.0, 43200.0]
    rows = rank_predictors(entries, downtimes)
    assert len(rows) == len(entries) * len(downtimes)
    for downtime, group in itertools.groupby(rows, key=lambda r: r["downtime_min"]):
        values = [r["loss_rate"] for r in group]
        assert values == sorted(values)
    # zero-FN thresholds give flat loss curves
    for name in ("thr+8%", "thr+16%"):
        curve = {r["loss_rate"] for r in rows if r["name"] == name}
        assert len(curve) == 1
    none_curve = [r["loss_rate"] for r in rows if r["name"] == "none"]
    assert none_curve == sorted(none_curve) and none_curve[0] < none_curve[-1]
