import math
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from conftest import FixtureBuilder, daily_row, month_ends
from quantseed.config import DEFAULT_CONFIG
from quantseed.features_engine import (
    ALL_FEATURE_COLUMNS,
    BUFFETT_COLUMNS,
    QV_BASIC_COLUMNS,
    QV_FULL_COLUMNS,
    REMOVED_FROM_QV_FULL,
    FeatureSet,
    compute_features,
    feature_columns,
    select_features,
)
from quantseed.panel import build_panel, impute, ingest


def _add_daily(builder, sid, start, end, close=20.0):
    d = start
    while d <= end:
        if d.weekday() < 5:
            builder.daily.append(daily_row(sid, d, close=close))
        d += timedelta(days=1)


def _fixture(builder, n_years=13, companies=("A", "B")):
    months = month_ends(1990, 1, n_years * 12)
    for k, sid in enumerate(companies):
        builder.add_company_years(
            sid, 1990, n_years,
            cogs=lambda y, base=48.0 + 2.0 * k: base + 0.5 * (y % 3),
            sale=lambda y: 80.0 + y,
        )
        builder.add_monthly_prices(sid, months, close=20.0 + 4.0 * k)
        _add_daily(builder, sid, months[0], months[-1], close=20.0 + 4.0 * k)
    builder.set_reference(months)
    return builder


def _panel(paths):
    store = ingest(
        paths["statements_annual"], paths["statements_quarterly"], paths["prices_daily"],
        paths["prices_monthly"], paths["reference"], DEFAULT_CONFIG,
    )
    return build_panel(impute(store, DEFAULT_CONFIG), DEFAULT_CONFIG)


@pytest.fixture(scope="module")
def matrix_and_panel(tmp_path_factory):
    builder = FixtureBuilder(tmp_path_factory.mktemp("engine"))
    paths = _fixture(builder).write()
    panel = _panel(paths)
    return compute_features(panel), panel


def test_feature_set_lengths():
    assert len(feature_columns(FeatureSet.QV_BASIC)) == 5
    assert len(feature_columns(FeatureSet.QV_FULL_PLUS_BUFFETT)) == \
        len(feature_columns(FeatureSet.QV_FULL)) + 18
    assert len(BUFFETT_COLUMNS) == 18
    assert "sta_pct" not in QV_FULL_COLUMNS
    assert set(REMOVED_FROM_QV_FULL).isdisjoint(QV_FULL_COLUMNS)


def test_matrix_has_all_columns(matrix_and_panel):
    matrix, panel = matrix_and_panel
    assert list(matrix.columns[:2]) == ["security_id", "as_of"]
    for col in ALL_FEATURE_COLUMNS:
        assert col in matrix.columns
    assert len(matrix) == len(panel.observations)


def test_constant_history_fixed_points(matrix_and_panel):
    matrix, _ = matrix_and_panel
    rows = matrix[matrix["security_id"] == "A"]
    # per-year return on assets is 6/100 in every statement year
    assert rows["roa_8_gmean"].dropna().iloc[-1] == pytest.approx(0.06, abs=1e-9)
    # sta with flat balance sheet: (0 - 0 - dp) / at
    assert rows["sta"].iloc[-1] == pytest.approx(-0.04, abs=1e-12)
    assert rows["tata"].iloc[-1] == pytest.approx(-0.04, abs=1e-12)
    # last reachable statement at the final month is fiscal 2001 (180-day lag):
    # receivables flat while sales grow, so dsri is the inverted sales ratio
    assert rows["dsri"].iloc[-1] == pytest.approx(90.0 / 91.0, rel=1e-9)
    assert rows["sgi"].iloc[-1] == pytest.approx(91.0 / 90.0, rel=1e-9)


def test_manipulation_probability_value(matrix_and_panel):
    matrix, _ = matrix_and_panel
    row = matrix[matrix["security_id"] == "A"].iloc[-1]
    from quantseed.features_qv import manipulation_probability, manipulation_score

    expected = manipulation_probability(
        manipulation_score(row["dsri"], row["gmi"], row["aqi"], row["sgi"],
                           row["depi"], row["sgai"], row["lvgi"], row["tata"])
    )
    assert row["pman"] == pytest.approx(expected, abs=1e-12)


def test_percentile_outputs_in_unit_interval(matrix_and_panel):
    matrix, _ = matrix_and_panel
    pct_cols = [c for c in ALL_FEATURE_COLUMNS if c.endswith("_pct")] + [
        "comboaccrual", "fran_power", "margin_max", "price_cheap", "quality",
        "pman", "pfd", "fin_strength",
    ]
    for col in pct_cols:
        vals = matrix[col].dropna()
        assert ((vals >= 0) & (vals <= 1)).all(), col


def test_indicators_binary(matrix_and_panel):
    matrix, _ = matrix_and_panel
    for col in [c for c in ALL_FEATURE_COLUMNS if c.startswith("fs_")]:
        vals = matrix[col].dropna()
        assert set(np.unique(vals)).issubset({0.0, 1.0}), col


def test_fin_strength_grid(matrix_and_panel):
    matrix, _ = matrix_and_panel
    vals = matrix["fin_strength"].dropna().to_numpy()
    assert np.allclose(np.round(vals * 10), vals * 10)


def test_pfd_computes_and_lags(matrix_and_panel):
    matrix, _ = matrix_and_panel
    rows = matrix[matrix["security_id"] == "A"].reset_index(drop=True)
    pfd = rows["pfd"]
    assert pfd.notna().sum() > 0
    finite = pfd.dropna()
    assert ((finite > 0) & (finite < 1)).all()
    lagged = rows["pfd_lag12"]
    for i in range(len(rows)):
        if pd.notna(lagged.iloc[i]):
            assert lagged.iloc[i] == pytest.approx(pfd.iloc[i - 12])


def test_tev_and_price_cheap(matrix_and_panel):
    matrix, _ = matrix_and_panel
    row = matrix[matrix["security_id"] == "A"].iloc[-1]
    # mktcap 200, debt 20, excess cash 8 + 40 - 20 = 28
    assert row["tev"] == pytest.approx(200.0 + 20.0 - 28.0, abs=1e-9)
    assert 0.0 <= row["price_cheap"] <= 1.0


def test_quality_is_mean_of_blocks(matrix_and_panel):
    matrix, _ = matrix_and_panel
    sub = matrix.dropna(subset=["quality"])
    assert len(sub) > 0
    np.testing.assert_allclose(
        sub["quality"], sub["fran_power"] / 2 + sub["fin_strength"] / 2, atol=1e-12
    )


def test_select_features_projection(matrix_and_panel):
    matrix, _ = matrix_and_panel
    basic = select_features(matrix, FeatureSet.QV_BASIC)
    assert list(basic.columns) == list(QV_BASIC_COLUMNS)
    with pytest.raises(ValueError, match="not computed"):
        select_features(matrix.drop(columns=["pman"]), FeatureSet.QV_BASIC)


def test_point_in_time_stability(tmp_path_factory):
    # feature values at t must not change when later data is appended
    long_b = FixtureBuilder(tmp_path_factory.mktemp("long"))
    long_paths = _fixture(long_b, n_years=13).write()
    short_b = FixtureBuilder(tmp_path_factory.mktemp("short"))
    short_paths = _fixture(short_b, n_years=11).write()

    full = compute_features(_panel(long_paths))
    trunc = compute_features(_panel(short_paths))

    cutoff = date(2000, 12, 31)
    full_cut = full[full["as_of"] <= cutoff].reset_index(drop=True)
    trunc_cut = trunc[trunc["as_of"] <= cutoff].reset_index(drop=True)
    assert len(full_cut) == len(trunc_cut) > 0
    for col in ALL_FEATURE_COLUMNS:
        a = full_cut[col].to_numpy()
        b = trunc_cut[col].to_numpy()
        both = np.isfinite(a) & np.isfinite(b)
        assert (np.isfinite(a) == np.isfinite(b)).all(), col
        np.testing.assert_allclose(a[both], b[both], atol=1e-12, err_msg=col)
