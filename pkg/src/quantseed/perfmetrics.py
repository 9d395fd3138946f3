"""Predictive and financial performance metrics for backtest assessment.

Predictive metrics (precision, false negative rate, AUC) score binary
stock-selection models from a confusion matrix.  Financial metrics score a
monthly post-fee return series: CAGR, volatility, downside risk, drawdowns
and multi-factor regression alphas with rolling-window positive-alpha
fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .mathkit import ols

MAR_ANNUAL = 0.05  # minimum acceptable return for the Sortino ratio

FF3_COLUMNS = ("mkt_rf", "smb", "hml")
CARHART_COLUMNS = ("mkt_rf", "smb", "hml", "mom")
ROLLING_WINDOWS = (12, 60, 120)


# ---------------------------------------------------------------------------
# predictive metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, predicted, actual) -> "ConfusionMatrix":
        predicted = np.asarray(predicted, dtype=int)
        actual = np.asarray(actual, dtype=int)
        if predicted.shape != actual.shape:
            raise ValueError("prediction and label lengths differ")
        tp = int(((predicted == 1) & (actual == 1)).sum())
        fp = int(((predicted == 1) & (actual == 0)).sum())
        fn = int(((predicted == 0) & (actual == 1)).sum())
        tn = int(((predicted == 0) & (actual == 0)).sum())
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)


def precision(cm: ConfusionMatrix) -> float:
    """TP / (TP + FP); NaN when nothing was predicted positive."""
    denom = cm.tp + cm.fp
    return cm.tp / denom if denom > 0 else math.nan


def false_negative_rate(cm: ConfusionMatrix) -> float:
    """FN / (FN + FP), the definition used throughout the reports.

    This is not the textbook miss rate; the conventional FN / (FN + TP)
    variant is exported separately as a sanity check.
    """
    denom = cm.fn + cm.fp
    # both error counts zero: no misses, rate is 0 by convention
    return cm.fn / denom if denom > 0 else 0.0


def false_negative_rate_conventional(cm: ConfusionMatrix) -> float:
    """Textbook miss rate FN / (FN + TP)."""
    denom = cm.fn + cm.tp
    return cm.fn / denom if denom > 0 else math.nan


def auc(scores, labels) -> float:
    """Area under the ROC curve by the Hanley-McNeil rank statistic.

    Ties count one half.  Returns NaN when only one class is present.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    rank_pos = 1
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        midrank = (rank_pos + rank_pos + (j - i)) / 2.0
        ranks[order[i : j + 1]] = midrank
        rank_pos += j - i + 1
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# financial metrics
# ---------------------------------------------------------------------------

def cagr(returns) -> float:
    """Annualized growth rate: 12 * mean(r) - annualized variance / 2.

    This arithmetic-minus-variance-drag estimator is what reproduces the
    published backtest tables; the plain compounded form is available as
    :func:`cagr_compound`.
    """
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        return math.nan
    var = r.var(ddof=1) if r.size > 1 else 0.0
    return 12.0 * r.mean() - 12.0 * var / 2.0


def cagr_compound(returns) -> float:
    """Compounded annual growth rate (prod(1 + r)) ** (12 / n) - 1."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        return math.nan
    return float(np.prod(1.0 + r) ** (12.0 / r.size) - 1.0)


def annualized_std(returns) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        return math.nan
    return float(r.std(ddof=1) * math.sqrt(12.0))


def downside_deviation(returns) -> float:
    """Monthly standard deviation of the negative months only."""
    r = np.asarray(returns, dtype=float)
    neg = r[r < 0]
    if neg.size < 2:
        return math.nan
    return float(neg.std(ddof=1))


def sortino_ratio(returns, mar_annual: float = MAR_ANNUAL) -> float:
    """(mean monthly return - MAR/12) / monthly downside deviation."""
    r = np.asarray(returns, dtype=float)
    dd = downside_deviation(r)
    if r.size == 0 or not math.isfinite(dd) or dd == 0:
        return math.nan
    return float((r.mean() - mar_annual / 12.0) / dd)


def information_ratio(returns, benchmark) -> float:
    """Annualized mean active return over its standard deviation."""
    r = np.asarray(returns, dtype=float)
    b = np.asarray(benchmark, dtype=float)
    if r.shape != b.shape:
        raise ValueError("return and benchmark lengths differ")
    active = r - b
    sd = active.std(ddof=1)
    if active.size < 2 or sd == 0:
        return math.nan
    return float(active.mean() / sd * math.sqrt(12.0))


def value_path(returns) -> np.ndarray:
    return np.cumprod(1.0 + np.asarray(returns, dtype=float))


def worst_drawdown(returns) -> float:
    """Worst peak-to-trough decline of the compounded value path."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        return math.nan
    v = np.concatenate([[1.0], np.cumprod(1.0 + r)])  # path starts at 1 before the first return
    running_max = np.maximum.accumulate(v)
    return float((v / running_max - 1.0).min())


def cumulative_drawdown(returns, window: int = 60) -> float:
    """Sum of the worst drawdowns over all rolling ``window``-month windows."""
    r = np.asarray(returns, dtype=float)
    if r.size < window:
        return math.nan
    total = 0.0
    for start in range(r.size - window + 1):
        total += worst_drawdown(r[start : start + window])
    return total


def profitable_months(returns) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        return math.nan
    return float((r > 0).mean())


# ---------------------------------------------------------------------------
# factor regressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorModelStats:
    name: str
    alpha_monthly: float
    alpha_annualized: float
    alpha_pvalue: float
    adj_r_squared: float
    f_stat: float
    f_pvalue: float
    rolling_fractions: dict = field(default_factory=dict)  # window -> fraction


def _aligned_frame(returns: pd.Series, factors: pd.DataFrame, columns) -> pd.DataFrame:
    missing = [c for c in columns if c not in factors.columns] + (
        ["rf"] if "rf" not in factors.columns else []
    )
    if missing:
        raise ValueError(f"factor series missing columns: {', '.join(missing)}")
    frame = pd.concat([returns.rename("ret"), factors[list(columns) + ["rf"]]], axis=1)
    frame = frame.loc[returns.index]
    if frame.isna().any().any():
        bad = frame.index[frame.isna().any(axis=1)]
        raise ValueError(f"factor/benchmark series missing inside window at {bad[0].date()}")
    return frame


def factor_alpha(returns: pd.Series, factors: pd.DataFrame, columns=FF3_COLUMNS):
    """OLS of excess returns on the factor columns; returns the mathkit fit."""
    frame = _aligned_frame(returns, factors, columns)
    y = frame["ret"].to_numpy() - frame["rf"].to_numpy()
    X = frame[list(columns)].to_numpy()
    return ols(y, X, column_names=list(columns))


def rolling_alpha_series(
    returns: pd.Series, factors: pd.DataFrame, window: int, columns=FF3_COLUMNS
) -> pd.Series:
    """Intercept of the factor regression over each rolling window.

    Indexed by window-end date; empty when fewer than ``window`` months.
    """
    frame = _aligned_frame(returns, factors, columns)
    y = frame["ret"].to_numpy() - frame["rf"].to_numpy()
    X = frame[list(columns)].to_numpy()
    n = len(frame)
    if n < window:
        return pd.Series(dtype=float)
    alphas = []
    idx = []
    for start in range(n - window + 1):
        fit = ols(y[start : start + window], X[start : start + window], column_names=list(columns))
        alphas.append(fit.intercept)
        idx.append(frame.index[start + window - 1])
    return pd.Series(alphas, index=idx, name=f"alpha_{window}m")


def _factor_block(returns, factors, columns, name) -> FactorModelStats:
    fit = factor_alpha(returns, factors, columns)
    fractions = {}
    for w in ROLLING_WINDOWS:
        series = rolling_alpha_series(returns, factors, w, columns)
        fractions[w] = float((series > 0).mean()) if len(series) else math.nan
    return FactorModelStats(
        name=name,
        alpha_monthly=fit.intercept,
        alpha_annualized=(1.0 + fit.intercept) ** 12 - 1.0,
        alpha_pvalue=fit.intercept_p,
        adj_r_squared=fit.adj_r_squared,
        f_stat=fit.f_stat,
        f_pvalue=fit.f_pvalue,
        rolling_fractions=fractions,
    )


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FinancialReport:
    n_months: int
    start: object
    end: object
    cagr: float
    cagr_compound: float
    std_dev: float
    downside_deviation_monthly: float
    downside_deviation_annualized: float
    information_ratio: float
    sortino: float
    profitable_months: float
    best_month: float
    worst_month: float
    worst_drawdown: float
    cumulative_drawdown: float
    factor_models: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[str, float]]:
        """Flat (metric, value) rows mirroring the published report layout."""
        out = [
            ("cagr", self.cagr),
            ("std_dev", self.std_dev),
            ("downside_deviation", self.downside_deviation_monthly),
            ("information_ratio", self.information_ratio),
            ("sortino_ratio", self.sortino),
            ("profitable_months", self.profitable_months),
            ("best_month", self.best_month),
            ("worst_month", self.worst_month),
            ("worst_drawdown", self.worst_drawdown),
            ("cumulative_drawdown", self.cumulative_drawdown),
        ]
        for name, block in self.factor_models.items():
            out.append((f"{name}_alpha_annualized", block.alpha_annualized))
            out.append((f"{name}_alpha_pvalue", block.alpha_pvalue))
            out.append((f"{name}_adj_r_squared", block.adj_r_squared))
            out.append((f"{name}_f_pvalue", block.f_pvalue))
            for w, frac in sorted(block.rolling_fractions.items()):
                out.append((f"{name}_alpha_windows_{w}m", frac))
        return out


def financial_report(
    returns: pd.Series,
    benchmark: pd.Series | None = None,
    factors: pd.DataFrame | None = None,
    mar_annual: float = MAR_ANNUAL,
) -> FinancialReport:
    """Full financial report for one monthly post-fee return series.

    ``benchmark`` (index monthly returns) feeds the information ratio and
    ``factors`` (mkt_rf/smb/hml/mom/rf columns) the factor-model blocks;
    both are optional and must cover the return dates when given.
    """
    if len(returns) < 12:
        raise ValueError("need at least 12 monthly returns")
    r = returns.to_numpy(dtype=float)

    ir = math.nan
    if benchmark is not None:
        b = benchmark.reindex(returns.index)
        if b.isna().any():
            raise ValueError("benchmark series missing months inside the report window")
        ir = information_ratio(r, b.to_numpy(dtype=float))

    blocks = {}
    if factors is not None:
        blocks["ff3"] = _factor_block(returns, factors, FF3_COLUMNS, "ff3")
        if "mom" in factors.columns:
            blocks["carhart"] = _factor_block(returns, factors, CARHART_COLUMNS, "carhart")

    dd_m = downside_deviation(r)
    return FinancialReport(
        n_months=len(returns),
        start=returns.index[0],
        end=returns.index[-1],
        cagr=cagr(r),
        cagr_compound=cagr_compound(r),
        std_dev=annualized_std(r),
        downside_deviation_monthly=dd_m,
        downside_deviation_annualized=dd_m * math.sqrt(12.0) if math.isfinite(dd_m) else math.nan,
        information_ratio=ir,
        sortino=sortino_ratio(r, mar_annual),
        profitable_months=profitable_months(r),
        best_month=float(r.max()),
        worst_month=float(r.min()),
        worst_drawdown=worst_drawdown(r),
        cumulative_drawdown=cumulative_drawdown(r),
        factor_models=blocks,
    )


def load_golden_returns() -> pd.DataFrame:
    """Shipped 1985-2016 monthly post-fee return fixture for two models.

    Columns ``model11``/``model12`` indexed by month-end date; values carry
    the 3-decimal rounding of the published table.
    """
    from importlib import resources

    with resources.files("quantseed.data").joinpath("golden_monthly_returns.csv").open() as f:
        frame = pd.read_csv(f, parse_dates=["date"], index_col="date")
    return frame
