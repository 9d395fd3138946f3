import itertools
import math
import random

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantseed.inference import (
    benjamini_hochberg,
    bonferroni,
    infer_false_positive_count,
    sak_ratios,
    strategy_uniqueness,
    wilcoxon_signed_rank,
)

# published backtest p-values, model order 6, 8, 9, 10, 11, 12
FF_PVALUES = [0.552, 0.183, 0.597, 0.045, 0.001, 0.022]
CARHART_PVALUES = [0.161, 0.043, 0.186, 0.007, 0.000, 0.014]
MODEL_LABELS = ["model6", "model8", "model9", "model10", "model11", "model12"]
Q = 0.095


# ---------------------------------------------------------------------------
# Benjamini-Hochberg
# ---------------------------------------------------------------------------

def test_bh_ff_panel():
    res = benjamini_hochberg(FF_PVALUES, Q, labels=MODEL_LABELS)
    assert res.n_significant == 3
    assert sorted(h.label for h in res.significant()) == ["model10", "model11", "model12"]
    assert res.expected_false_positives == pytest.approx(0.29, abs=0.005)
    thresholds = sorted(h.threshold for h in res.hypotheses)
    for got, want in zip(thresholds, [0.016, 0.032, 0.048, 0.063, 0.079, 0.095]):
        assert got == pytest.approx(want, abs=5e-4)


def test_bh_carhart_panel():
    res = benjamini_hochberg(CARHART_PVALUES, Q, labels=MODEL_LABELS)
    assert res.n_significant == 4
    assert sorted(h.label for h in res.significant()) == [
        "model10",
        "model11",
        "model12",
        "model8",
    ]
    assert res.expected_false_positives == pytest.approx(0.38, abs=0.005)


def test_bh_all_ones_none_significant():
    res = benjamini_hochberg([1.0, 1.0, 1.0], 0.095)
    assert res.n_significant == 0


def test_bh_empty_input():
    res = benjamini_hochberg([], 0.1)
    assert res.hypotheses == [] and res.n_significant == 0


def test_bh_step_up_pulls_in_larger_p():
    # rank-2 p fails its own threshold but rank 3 passes, so all three are in
    res = benjamini_hochberg([0.01, 0.14, 0.145, 0.9], 0.2)
    assert res.n_significant == 3


def test_bh_expected_false_positives_exact():
    res = benjamini_hochberg(FF_PVALUES, Q)
    assert res.expected_false_positives == Q * res.n_significant


@given(
    st.lists(st.floats(min_value=0, max_value=1, allow_nan=False), min_size=1, max_size=12),
    st.floats(min_value=0.01, max_value=0.5),
    st.floats(min_value=0.01, max_value=0.49),
)
def test_bh_significant_set_monotone_in_q(ps, q_lo, bump):
    q_hi = min(0.99, q_lo + bump)
    lo = benjamini_hochberg(ps, q_lo)
    hi = benjamini_hochberg(ps, q_hi)
    lo_set = {i for i, h in enumerate(lo.hypotheses) if h.significant}
    hi_set = {i for i, h in enumerate(hi.hypotheses) if h.significant}
    assert lo_set <= hi_set


def test_bh_pivot_ratio_at_least_one():
    res = benjamini_hochberg(FF_PVALUES, Q)
    sig = res.significant()
    pivot = max(sig, key=lambda h: h.rank)
    assert pivot.threshold / pivot.p_value >= 1.0


# ---------------------------------------------------------------------------
# binomial false-positive inference
# ---------------------------------------------------------------------------

def test_inference_ff_panel():
    res = infer_false_positive_count(3, Q)
    table = dict(res.tail_table)
    assert table[0] == pytest.approx(0.259, abs=1e-3)
    assert table[1] == pytest.approx(0.025, abs=1e-3)
    assert table[2] == pytest.approx(0.001, abs=1e-3)
    assert res.inferred_count == 1


def test_inference_carhart_panel():
    res = infer_false_positive_count(4, Q)
    table = dict(res.tail_table)
    assert table[0] == pytest.approx(0.329, abs=1e-3)
    assert table[1] == pytest.approx(0.048, abs=1e-3)
    assert res.inferred_count == 1


def test_inference_zero_trials():
    assert infer_false_positive_count(0, Q).inferred_count == 0


def test_inference_zero_q():
    assert infer_false_positive_count(5, 0.0).inferred_count == 0


# ---------------------------------------------------------------------------
# threshold-to-p ratios
# ---------------------------------------------------------------------------

def test_sak_ff_flags_model10():
    bh = benjamini_hochberg(FF_PVALUES, Q, labels=MODEL_LABELS)
    res = sak_ratios(bh, k=1)
    flagged = [e.label for e in res.entries if e.likely_false_positive]
    survivors = [e.label for e in res.entries if not e.likely_false_positive]
    assert flagged == ["model10"]
    assert set(survivors) == {"model11", "model12"}


def test_sak_carhart_flags_model8():
    bh = benjamini_hochberg(CARHART_PVALUES, Q, labels=MODEL_LABELS)
    res = sak_ratios(bh, k=1)
    flagged = [e.label for e in res.entries if e.likely_false_positive]
    survivors = [e.label for e in res.entries if not e.likely_false_positive]
    assert flagged == ["model8"]
    assert {"model11", "model12"} <= set(survivors)


def test_sak_zero_pvalue_ranks_safest():
    bh = benjamini_hochberg(CARHART_PVALUES, Q, labels=MODEL_LABELS)
    res = sak_ratios(bh, k=1)
    assert res.entries[-1].label == "model11"
    assert math.isinf(res.entries[-1].ratio)


def test_sak_ratio_one_when_threshold_equals_p():
    bh = benjamini_hochberg([0.05, 0.9], 0.2)
    res = sak_ratios(bh, k=0)
    assert res.entries[0].ratio == pytest.approx(0.2 * 1 / 2 / 0.05)


# ---------------------------------------------------------------------------
# bonferroni
# ---------------------------------------------------------------------------

def test_bonferroni_three():
    assert bonferroni([0.01, 0.02, 0.03]) == [True, False, False]


def test_bonferroni_single_reduces_to_alpha():
    assert bonferroni([0.049]) == [True]
    assert bonferroni([0.051]) == [False]


def test_bonferroni_all_ones():
    assert bonferroni([1.0, 1.0, 1.0, 1.0]) == [False] * 4


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------

def oracle_wilcoxon_exact(d):
    """Brute-force enumeration over all 2^n sign assignments."""
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    n = len(d)
    abs_d = np.abs(d)
    # midranks
    order = np.argsort(abs_d, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and abs_d[order[j + 1]] == abs_d[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    w_obs = ranks[d > 0].sum()
    sums = []
    for signs in itertools.product([0, 1], repeat=n):
        sums.append(sum(r for r, s in zip(ranks, signs) if s))
    sums = np.asarray(sums)
    lower = (sums <= w_obs + 1e-12).mean()
    upper = (sums >= w_obs - 1e-12).mean()
    return w_obs, min(1.0, 2.0 * min(lower, upper))


def test_wilcoxon_identical_series():
    a = np.arange(10.0)
    stat, p = wilcoxon_signed_rank(a, a)
    assert p == 1.0


def test_wilcoxon_large_shift_significant():
    rng = np.random.default_rng(0)
    a = rng.normal(size=30)
    stat, p = wilcoxon_signed_rank(a, a + 100.0)
    assert p < 0.01


def test_wilcoxon_hand_fixture_matches_enumeration():
    a = np.array([1.0, 2.5, 3.0, 1.5, 6.0, 2.0, 4.0, 5.5])
    b = np.array([0.5, 3.0, 1.0, 1.0, 2.0, 2.5, 3.0, 5.0])
    stat, p = wilcoxon_signed_rank(a, b)
    w_oracle, p_oracle = oracle_wilcoxon_exact(a - b)
    assert stat == pytest.approx(w_oracle)
    assert p == pytest.approx(p_oracle, abs=1e-12)


def test_wilcoxon_exact_oracle_equivalence_random():
    rng = random.Random(23)
    for trial in range(120):
        n = rng.randint(6, 12)
        # small integer grid forces ties and zero differences
        a = [rng.randint(-4, 6) for _ in range(n)]
        b = [rng.randint(-4, 6) for _ in range(n)]
        d = np.asarray(a, dtype=float) - np.asarray(b)
        if not np.any(d != 0):
            continue
        stat, p = wilcoxon_signed_rank(np.asarray(a, float), np.asarray(b, float))
        w_oracle, p_oracle = oracle_wilcoxon_exact(d)
        assert stat == pytest.approx(w_oracle), (a, b)
        assert p == pytest.approx(p_oracle, abs=1e-12), (a, b)


def test_wilcoxon_all_zero_differences():
    a = np.ones(8)
    stat, p = wilcoxon_signed_rank(a, a.copy())
    assert (stat, p) == (0.0, 1.0)


def test_wilcoxon_normal_approx_reasonable():
    rng = np.random.default_rng(5)
    a = rng.normal(size=200)
    b = a + rng.normal(scale=1.0, size=200)
    _, p = wilcoxon_signed_rank(a, b)
    assert 0.0 <= p <= 1.0
    _, p_shift = wilcoxon_signed_rank(a, a + 10.0)
    assert p_shift < 1e-6


def test_wilcoxon_length_checks():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [1, 2, 3])


# ---------------------------------------------------------------------------
# strategy uniqueness
# ---------------------------------------------------------------------------

def _factor_frame(n, rng):
    idx = pd.date_range("1995-01-31", periods=n, freq="ME")
    return pd.DataFrame(
        {
            "mkt_rf": rng.normal(0.005, 0.04, n),
            "smb": rng.normal(0, 0.02, n),
            "hml": rng.normal(0, 0.02, n),
            "mom": rng.normal(0, 0.03, n),
            "rf": np.full(n, 0.002),
        },
        index=idx,
    )


def test_uniqueness_ledger_vs_itself_all_p_one():
    rng = np.random.default_rng(7)
    factors = _factor_frame(100, rng)
    returns = pd.Series(rng.normal(0.01, 0.05, 100), index=factors.index)
    grid = strategy_uniqueness(returns, returns.copy(), factors, windows=(12, 60))
    for cell in grid.cells.values():
        assert cell is not None
        assert cell.p_value == 1.0


def test_uniqueness_grid_matches_cellwise_oracle():
    rng = np.random.default_rng(8)
    factors = _factor_frame(90, rng)
    ra = pd.Series(rng.normal(0.01, 0.05, 90), index=factors.index)
    rb = pd.Series(rng.normal(0.002, 0.05, 90), index=factors.index)
    grid = strategy_uniqueness(ra, rb, factors, windows=(12,))
    from quantseed.perfmetrics import rolling_alpha_series, FF3_COLUMNS

    sa = rolling_alpha_series(ra, factors, 12, FF3_COLUMNS)
    sb = rolling_alpha_series(rb, factors, 12, FF3_COLUMNS)
    _, p_expected = wilcoxon_signed_rank(sa.to_numpy(), sb.to_numpy())
    assert grid.p_value("ff3", 12) == pytest.approx(p_expected)


def test_uniqueness_insufficient_windows_missing():
    rng = np.random.default_rng(9)
    factors = _factor_frame(30, rng)
    ra = pd.Series(rng.normal(0.01, 0.05, 30), index=factors.index)
    rb = pd.Series(rng.normal(0.0, 0.05, 30), index=factors.index)
    grid = strategy_uniqueness(ra, rb, factors, windows=(120,))
    assert grid.cells[("ff3", 120)] is None
    assert math.isnan(grid.p_value("ff3", 120))
