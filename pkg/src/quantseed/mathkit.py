"""Shared numerical primitives used by the feature, metric and inference layers.

Everything here is deliberately small and testable against brute-force
oracles: shifted geometric means, pooled cumulative percentile ranks,
rolling winsorization, normal/binomial tails and classical OLS.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

__all__ = [
    "shifted_gmean",
    "CumulativePercentileState",
    "winsorize_rolling",
    "normal_cdf",
    "binomial_tail",
    "student_t_sf",
    "OlsFit",
    "ols",
]


def shifted_gmean(values) -> float:
    """Geometric mean of a (typically 8-year) series made positive by shifting.

    The series is shifted by ``abs(min)`` when its minimum is negative and by
    0.1 otherwise, 1 is added, the geometric mean of the shifted series is
    taken, and the shift plus 1 is subtracted again.  A constant series is a
    fixed point of the whole procedure.  Inputs are never mutated.
    """
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("shifted_gmean needs at least one value")
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"shifted_gmean requires finite inputs, got {v!r}")
    m = min(vals)
    shift = abs(m) if m < 0 else 0.1
    # fsum makes the result exactly permutation invariant
    log_mean = math.fsum(math.log(v + shift + 1.0) for v in vals) / len(vals)
    return math.exp(log_mean) - (shift + 1.0)


class CumulativePercentileState:
    """Running pooled sample supporting percentile-rank and quantile queries.

    Single-writer: the panel coordinator inserts values in chronological
    order, so a query at date t never sees values observed after t.  Within
    a date the coordinator inserts every cross-sectional value before
    querying, which makes percentile ranks independent of company order.
    """

    __slots__ = ("_sorted",)

    def __init__(self, values=None):
        self._sorted: list[float] = []
        if values is not None:
            for v in values:
                self.add(v)

    def __len__(self) -> int:
        return len(self._sorted)

    def add(self, value: float) -> None:
        """Insert one observation; non-finite values are ignored."""
        v = float(value)
        if math.isfinite(v):
            insort(self._sorted, v)

    def percentile(self, value: float) -> float:
        """Rank fraction: share of stored values <= ``value``.

        An empty state returns the uninformative 0.5; it only occurs during
        the warm-up months that never reach a training set.
        """
        if not self._sorted:
            return 0.5
        if not math.isfinite(value):
            return math.nan
        return bisect_right(self._sorted, value) / len(self._sorted)

    def quantile(self, q: float) -> float:
        """Linearly interpolated sample quantile, numpy 'linear' convention."""
        if not self._sorted:
            return math.nan
        if not 0.0 <= q <= 1.0:
            raise ValueError("quantile level must be in [0, 1]")
        pos = q * (len(self._sorted) - 1)
        lo = int(math.floor(pos))
        hi = int(math.ceil(pos))
        if lo == hi:
            return self._sorted[lo]
        frac = pos - lo
        return self._sorted[lo] * (1.0 - frac) + self._sorted[hi] * frac

    def clamp(self, value: float, low: float = 0.10, high: float = 0.90) -> float:
        """Winsorize ``value`` against the current cumulative quantiles."""
        if not self._sorted or not math.isfinite(value):
            return value
        lo = self.quantile(low)
        hi = self.quantile(high)
        return min(max(value, lo), hi)


def winsorize_rolling(series, low: float = 0.10, high: float = 0.90) -> list[float]:
    """Clamp each value to the [P10, P90] of values observed up to its date.

    The cumulative sample includes the current value itself; clamped outputs
    always lie inside their own date's bounds, so re-applying the same
    bounds is a no-op.
    """
    state = CumulativePercentileState()
    out = []
    for v in series:
        state.add(v)
        out.append(state.clamp(v, low, high))
    return out


def normal_cdf(x: float) -> float:
    """Standard normal CDF, absolute error well below 1e-10."""
    if not math.isfinite(x):
        if math.isnan(x):
            return math.nan
        return 0.0 if x < 0 else 1.0
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def binomial_tail(n: int, p: float, k: int) -> float:
    """Exact upper tail P(X > k) for X ~ Binomial(n, p) by direct summation."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if not 0 <= k <= n:
        raise ValueError("k must satisfy 0 <= k <= n")
    total = 0.0
    for j in range(k + 1, n + 1):
        total += math.comb(n, j) * p**j * (1.0 - p) ** (n - j)
    return min(total, 1.0)


def student_t_sf(t: float, df: float) -> float:
    """One-sided survival P(T > t) of Student's t via the incomplete beta."""
    if df <= 0:
        raise ValueError("df must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    half_two_sided = 0.5 * betainc(df / 2.0, 0.5, x)
    return half_two_sided if t > 0 else 1.0 - half_two_sided


def _f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail of the F distribution via the incomplete beta."""
    if f <= 0:
        return 1.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)))


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit with an intercept and classical standard errors."""

    coef: np.ndarray        # [intercept, beta_1, ..., beta_k]
    stderr: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray    # two-sided
    r_squared: float
    adj_r_squared: float
    f_stat: float
    f_pvalue: float
    n_obs: int
    df_resid: int

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def intercept_p(self) -> float:
        return float(self.p_values[0])


def ols(y, X, column_names=None) -> OlsFit:
    """OLS of ``y`` on ``X`` plus an intercept.

    Returns coefficients, classical standard errors, two-sided t-test
    p-values, adjusted R-squared and the regression F statistic.  A
    rank-deficient design raises ``ValueError`` naming the offending
    columns.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape[0] != n:
        raise ValueError("y and X row counts differ")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValueError("ols requires finite inputs")
    if n <= k + 1:
        raise ValueError(f"need more than {k + 1} rows, got {n}")
    names = ["intercept"] + (
        list(column_names) if column_names is not None else [f"x{i}" for i in range(k)]
    )
    design = np.column_stack([np.ones(n), X])

    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    tol = max(n, k + 1) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    bad = [names[i] for i in range(k + 1) if diag[i] <= tol]
    if bad:
        raise ValueError(f"rank-deficient design, offending columns: {', '.join(bad)}")

    coef = np.linalg.solve(r, q.T @ y)
    resid = y - design @ coef
    df_resid = n - (k + 1)
    sigma2 = float(resid @ resid) / df_resid
    rinv = np.linalg.solve(r, np.eye(k + 1))
    cov = sigma2 * (rinv @ rinv.T)
    stderr = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(stderr > 0, coef / stderr, np.inf * np.sign(coef))
    p_values = np.array(
        [2.0 * student_t_sf(abs(t), df_resid) if math.isfinite(t) else 0.0 for t in t_stats]
    )

    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(resid @ resid)
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    if k > 0 and ss_res > 0 and r2 < 1.0:
        f_stat = (r2 / k) / ((1.0 - r2) / df_resid)
        f_pvalue = _f_sf(f_stat, k, df_resid)
    else:
        f_stat = math.inf if ss_tot > 0 else 0.0
        f_pvalue = 0.0 if f_stat == math.inf else 1.0
    return OlsFit(
        coef=coef,
        stderr=stderr,
        t_stats=t_stats,
        p_values=p_values,
        r_squared=r2,
        adj_r_squared=adj_r2,
        f_stat=f_stat,
        f_pvalue=f_pvalue,
        n_obs=n,
        df_resid=df_resid,
    )
