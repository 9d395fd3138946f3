"""Multiple-comparisons and strategy-uniqueness statistics.

Backtesting several models on the same observations inflates the chance of
a falsely significant alpha.  This module controls that with the
Benjamini-Hochberg step-up procedure, infers how many of the significant
results are likely false positives from the binomial tail, ranks the
survivors by their threshold-to-p ratio, and compares whole strategies with
the Wilcoxon signed-rank test on rolling alpha windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .mathkit import binomial_tail, normal_cdf
from .perfmetrics import CARHART_COLUMNS, FF3_COLUMNS, rolling_alpha_series

FALSE_POSITIVE_CONFIDENCE = 0.05


# ---------------------------------------------------------------------------
# Benjamini-Hochberg
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BhHypothesis:
    label: str
    p_value: float
    rank: int
    threshold: float
    significant: bool


@dataclass(frozen=True)
class BhResult:
    q: float
    hypotheses: list  # input order
    n_significant: int
    expected_false_positives: float

    def significant(self) -> list:
        return [h for h in self.hypotheses if h.significant]


def benjamini_hochberg(p_values, q: float, labels=None) -> BhResult:
    """Step-up false-discovery-rate control at level ``q``.

    Hypotheses are ranked by p-value (ties keep input order); rank k gets
    threshold q*k/m and every hypothesis at or below the largest rank whose
    p-value clears its threshold is significant.  Expected false positives
    is q times the significant count.
    """
    p_values = [float(p) for p in p_values]
    if any(not 0.0 <= p <= 1.0 for p in p_values):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    m = len(p_values)
    if labels is None:
        labels = [f"h{i + 1}" for i in range(m)]
    if m == 0:
        return BhResult(q=q, hypotheses=[], n_significant=0, expected_false_positives=0.0)

    order = sorted(range(m), key=lambda i: (p_values[i], i))
    pivot = 0
    for rank, i in enumerate(order, start=1):
        if p_values[i] <= q * rank / m:
            pivot = rank
    hypotheses: list[BhHypothesis | None] = [None] * m
    for rank, i in enumerate(order, start=1):
        hypotheses[i] = BhHypothesis(
            label=labels[i],
            p_value=p_values[i],
            rank=rank,
            threshold=q * rank / m,
            significant=rank <= pivot,
        )
    n_sig = pivot
    return BhResult(
        q=q,
        hypotheses=hypotheses,
        n_significant=n_sig,
        expected_false_positives=q * n_sig,
    )


def bonferroni(p_values, alpha: float = 0.05) -> list[bool]:
    """Flag p-values below alpha / n."""
    p_values = list(p_values)
    n = len(p_values)
    if n == 0:
        return []
    return [p < alpha / n for p in p_values]


# ---------------------------------------------------------------------------
# binomial false-positive inference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FalsePositiveInference:
    n_trials: int
    q: float
    tail_table: list   # (k, P(X > k))
    inferred_count: int


def infer_false_positive_count(n_significant: int, q: float) -> FalsePositiveInference:
    """Infer the false-positive count among significant results.

    Treats each significant result as a Bernoulli(q) false-positive trial
    and returns the smallest k whose upper-tail probability P(X > k) drops
    below 0.05, i.e. the largest count that cannot be ruled out.
    """
    if n_significant < 0:
        raise ValueError("n_significant must be non-negative")
    table = [(k, binomial_tail(n_significant, q, k)) for k in range(n_significant + 1)]
    inferred = n_significant
    for k, tail in table:
        if tail < FALSE_POSITIVE_CONFIDENCE:
            inferred = k
            break
    return FalsePositiveInference(
        n_trials=n_significant, q=q, tail_table=table, inferred_count=inferred
    )


# ---------------------------------------------------------------------------
# threshold-to-p ("Sak") ratios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SakEntry:
    label: str
    p_value: float
    threshold: float
    ratio: float
    likely_false_positive: bool


@dataclass(frozen=True)
class SakResult:
    entries: list  # ascending by ratio
    inferred_false_positives: int


def sak_ratios(bh: BhResult, k: int) -> SakResult:
    """Ratio of BH threshold to p-value for each significant hypothesis.

    Lower ratios mean the hypothesis cleared its threshold by less, so the
    ``k`` smallest ratios are flagged as the likely false positives.  A
    p-value of exactly zero gets an infinite ratio and ranks safest.
    """
    significant = bh.significant()
    if k > len(significant):
        raise ValueError("k cannot exceed the significant count")
    scored = []
    for h in significant:
        ratio = math.inf if h.p_value == 0.0 else h.threshold / h.p_value
        scored.append((ratio, h))
    scored.sort(key=lambda pair: pair[0])
    entries = [
        SakEntry(
            label=h.label,
            p_value=h.p_value,
            threshold=h.threshold,
            ratio=ratio,
            likely_false_positive=i < k,
        )
        for i, (ratio, h) in enumerate(scored)
    ]
    return SakResult(entries=entries, inferred_false_positives=k)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------

EXACT_LIMIT = 25


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    pos = 1
    sorted_vals = values[order]
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (2 * pos + (j - i)) / 2.0
        pos += j - i + 1
        i = j + 1
    return ranks


def _exact_two_sided_p(doubled_ranks: list[int], w2: int) -> float:
    """Exact p over all sign assignments via the rank generating function."""
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        counts[r:] = counts[r:] + counts[: total + 1 - r]
    denom = counts.sum()
    lower = counts[: w2 + 1].sum() / denom
    upper = counts[w2:].sum() / denom
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped, ties share midranks.  The p-value is
    exact (full enumeration over sign assignments) up to 25 non-zero pairs,
    and a normal approximation with continuity and tie corrections above.
    Returns (W+, p).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.size < 6:
        raise ValueError("need at least 6 pairs")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 0.0, 1.0

    abs_d = np.abs(d)
    ranks = _midranks(abs_d)
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_LIMIT:
        doubled = [int(round(2.0 * r)) for r in ranks]
        return w_plus, _exact_two_sided_p(doubled, int(round(2.0 * w_plus)))

    mu = n * (n + 1) / 4.0
    tie_term = 0.0
    _, tie_counts = np.unique(abs_d, return_counts=True)
    for t in tie_counts:
        tie_term += t**3 - t
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    if sigma2 <= 0:
        return w_plus, 1.0
    z = (abs(w_plus - mu) - 0.5) / math.sqrt(sigma2)
    if z < 0:
        z = 0.0
    return w_plus, min(1.0, 2.0 * (1.0 - normal_cdf(z)))


# ---------------------------------------------------------------------------
# strategy uniqueness grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessCell:
    factor_model: str
    window: int
    n_windows: int
    statistic: float
    p_value: float


@dataclass(frozen=True)
class UniquenessGrid:
    cells: dict = field(default_factory=dict)  # (factor_model, window) -> cell or None

    def p_value(self, factor_model: str, window: int):
        cell = self.cells.get((factor_model, window))
        return cell.p_value if cell is not None else math.nan


def strategy_uniqueness(
    returns_a: pd.Series,
    returns_b: pd.Series,
    factors: pd.DataFrame,
    windows=(12, 60, 120),
) -> UniquenessGrid:
    """Wilcoxon comparison of two strategies' rolling factor alphas.

    For each factor model and horizon the rolling-window alpha series of
    both return streams are paired on their common window-end dates and
    tested for a shift.  Cells with fewer than 6 common windows are left
    missing.
    """
    models = {"ff3": FF3_COLUMNS}
    if "mom" in factors.columns:
        models["carhart"] = CARHART_COLUMNS
    cells = {}
    for name, cols in models.items():
        for w in windows:
            sa = rolling_alpha_series(returns_a, factors, w, cols)
            sb = rolling_alpha_series(returns_b, factors, w, cols)
            common = sa.index.intersection(sb.index)
            if len(common) < 6:
                cells[(name, w)] = None
                continue
            stat, p = wilcoxon_signed_rank(sa.loc[common].to_numpy(), sb.loc[common].to_numpy())
            cells[(name, w)] = UniquenessCell(
                factor_model=name, window=w, n_windows=len(common), statistic=stat, p_value=p
            )
    return UniquenessGrid(cells=cells)
