"""Point-in-time monthly observation panel.

Raw statement, price and reference CSVs go through three stages: ``ingest``
(strict parsing, industry exclusion, duplicate-entity resolution),
``impute`` (articulation identities, zero defaults, forward fill, bid/ask
midpoints) and ``build_panel`` (monthly grid with availability lags,
consecutive-history requirements and the liquidity eligibility flag).

Look-ahead safety is structural: a statement is reachable from an
observation only when its period end plus the configured lag is on or
before the observation date, and per-company forward fills only ever read
older values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .config import DEFAULT_CONFIG, EngineConfig
from .schemas import (
    ANNUAL_COLUMNS,
    PRICES_DAILY_COLUMNS,
    PRICES_MONTHLY_COLUMNS,
    QUARTERLY_COLUMNS,
    REFERENCE_COLUMNS,
    STATEMENT_ITEMS,
    QUARTERLY_ITEMS,
    SchemaError,
    read_rows,
)

# a company is dropped when one of these is missing across its whole history
REQUIRED_ITEMS = ("at", "sale", "ni", "act", "lct", "che")


def month_period(d: date) -> pd.Period:
    return pd.Period(freq="M", year=d.year, month=d.month)


def months_between(earlier: date, later: date) -> int:
    return (later.year - earlier.year) * 12 + (later.month - earlier.month)


# ---------------------------------------------------------------------------
# reference series
# ---------------------------------------------------------------------------

@dataclass
class ReferenceSeries:
    sp500: pd.Series          # value-weighted index monthly return
    usdval: pd.Series         # total market value, USD millions
    breakpoints: pd.Series    # market-equity liquidity floor, USD millions
    cpi: pd.Series
    treasury: pd.Series       # 10-year yield, decimal
    factors: pd.DataFrame     # mkt_rf, smb, hml, mom, rf

    def factor_frame_by_date(self, dates) -> pd.DataFrame:
        """Factors re-indexed onto observation month-end dates."""
        periods = pd.PeriodIndex([month_period(d) for d in dates], freq="M")
        frame = self.factors.reindex(periods)
        frame.index = pd.DatetimeIndex(pd.to_datetime(list(dates)))
        return frame


def _monthly_series(rows, value_column, path) -> pd.Series:
    periods = []
    values = []
    prev = None
    for rec in rows:
        per = month_period(rec["date"])
        if prev is not None and (per - prev).n != 1:
            raise SchemaError(path, f"monthly grid has a gap before {rec['date']}", rec["_row"])
        prev = per
        periods.append(per)
        values.append(rec[value_column])
    return pd.Series(values, index=pd.PeriodIndex(periods, freq="M"), dtype=float)


def load_reference(paths: dict) -> ReferenceSeries:
    """Load the five reference CSVs; every series must be a gap-free grid."""
    missing = [k for k in REFERENCE_COLUMNS if k not in paths]
    if missing:
        raise SchemaError(",".join(str(paths.get(k, k)) for k in missing),
                          f"missing reference files: {', '.join(missing)}")
    sp_rows = read_rows(paths["sp500"], REFERENCE_COLUMNS["sp500"])
    sp500 = _monthly_series(sp_rows, "vwretd", paths["sp500"])
    usdval = _monthly_series(sp_rows, "usdval", paths["sp500"]) / 1000.0  # thousands -> millions
    breakpoints = _monthly_series(
        read_rows(paths["breakpoints"], REFERENCE_COLUMNS["breakpoints"]),
        "me_breakpoint", paths["breakpoints"],
    )
    cpi = _monthly_series(read_rows(paths["cpi"], REFERENCE_COLUMNS["cpi"]), "cpiind", paths["cpi"])
    treasury = _monthly_series(
        read_rows(paths["treasury"], REFERENCE_COLUMNS["treasury"]),
        "tsy_10y_yield", paths["treasury"],
    )
    factor_rows = read_rows(paths["factors"], REFERENCE_COLUMNS["factors"])
    periods = pd.PeriodIndex([month_period(r["date"]) for r in factor_rows], freq="M")
    if any((b - a).n != 1 for a, b in zip(periods[:-1], periods[1:])):
        raise SchemaError(paths["factors"], "monthly grid has a gap")
    factors = pd.DataFrame(
        {c: [r[c] for r in factor_rows] for c in ("mkt_rf", "smb", "hml", "mom", "rf")},
        index=periods, dtype=float,
    )
    return ReferenceSeries(
        sp500=sp500, usdval=usdval, breakpoints=breakpoints,
        cpi=cpi, treasury=treasury, factors=factors,
    )


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

@dataclass
class RawStore:
    annual: dict            # security_id -> [statement dict], period_end ascending
    quarterly: dict
    monthly: dict           # security_id -> [price row dict]
    daily: dict
    entity_of: dict         # security_id -> entity_id (latest mapping)
    reference: ReferenceSeries
    counters: dict = field(default_factory=dict)


def _dedup_statements(rows, path, counters, excluded_gics):
    """Industry exclusion, duplicate-entity resolution and exact dedup."""
    kept = [r for r in rows if r["gics"] not in excluded_gics]
    counters["rows_excluded_gics"] = counters.get("rows_excluded_gics", 0) + len(rows) - len(kept)

    # one entity per security per fiscal year: most recent publish date wins
    winners: dict = {}
    for r in kept:
        key = (r["security_id"], r["period_end"].year)
        cur = winners.get(key)
        if cur is None or (r["publish_date"], r["entity_id"]) > cur:
            winners[key] = (r["publish_date"], r["entity_id"])
    resolved = [
        r for r in kept
        if r["entity_id"] == winners[(r["security_id"], r["period_end"].year)][1]
    ]
    counters["rows_dropped_duplicate_entity"] = (
        counters.get("rows_dropped_duplicate_entity", 0) + len(kept) - len(resolved)
    )

    # exact key dedup: latest publish date wins, a full tie is a data error
    by_key: dict = {}
    for r in resolved:
        key = (r["security_id"], r["period_end"])
        cur = by_key.get(key)
        if cur is None or r["publish_date"] > cur["publish_date"]:
            by_key[key] = r
        elif r["publish_date"] == cur["publish_date"]:
            raise SchemaError(path, f"duplicate statement for {key[0]} at {key[1]}", r["_row"])
    out: dict = {}
    for (sid, _), r in sorted(by_key.items(), key=lambda kv: kv[0]):
        out.setdefault(sid, []).append(r)
    return out


def ingest(
    statements_annual,
    statements_quarterly,
    prices_daily,
    prices_monthly,
    reference_paths: dict,
    config: EngineConfig = DEFAULT_CONFIG,
) -> RawStore:
    """Parse and validate all input CSVs into a raw store.

    Rejects malformed rows and schema violations with ``SchemaError``;
    drops excluded industries and resolves duplicate entity mappings.
    """
    counters: dict = {}
    excluded = set(config.panel.excluded_gics)
    annual = _dedup_statements(
        read_rows(statements_annual, ANNUAL_COLUMNS), statements_annual, counters, excluded
    )
    quarterly = _dedup_statements(
        read_rows(statements_quarterly, QUARTERLY_COLUMNS), statements_quarterly, counters, excluded
    )

    monthly: dict = {}
    seen = set()
    for r in read_rows(prices_monthly, PRICES_MONTHLY_COLUMNS):
        for col in ("close", "bid", "ask", "dividend", "shrout", "dlprc", "dlamt"):
            if r[col] is not None and r[col] < 0:
                raise SchemaError(prices_monthly, f"negative {col} ({r[col]})", r["_row"])
        key = (r["security_id"], r["date"])
        if key in seen:
            raise SchemaError(prices_monthly, f"duplicate price row for {key}", r["_row"])
        seen.add(key)
        monthly.setdefault(r["security_id"], []).append(r)
    for rows in monthly.values():
        rows.sort(key=lambda r: r["date"])

    daily: dict = {}
    seen = set()
    for r in read_rows(prices_daily, PRICES_DAILY_COLUMNS):
        if r["close"] is not None and r["close"] < 0:
            raise SchemaError(prices_daily, f"negative close ({r['close']})", r["_row"])
        key = (r["security_id"], r["date"])
        if key in seen:
            raise SchemaError(prices_daily, f"duplicate price row for {key}", r["_row"])
        seen.add(key)
        daily.setdefault(r["security_id"], []).append(r)
    for rows in daily.values():
        rows.sort(key=lambda r: r["date"])

    entity_of = {}
    for sid, rows in annual.items():
        entity_of[sid] = rows[-1]["entity_id"]

    counters["companies_with_statements"] = len(annual)
    counters["companies_with_prices"] = len(monthly)
    return RawStore(
        annual=annual, quarterly=quarterly, monthly=monthly, daily=daily,
        entity_of=entity_of, reference=load_reference(reference_paths), counters=counters,
    )


# ---------------------------------------------------------------------------
# impute
# ---------------------------------------------------------------------------

def impute(store: RawStore, config: EngineConfig = DEFAULT_CONFIG) -> RawStore:
    """Fill missing data in place of the raw store.

    R&D and dividends default to zero; retained earnings, current
    assets/liabilities and adjusted net income articulate from related
    items; everything else forward-fills from the company's last
    non-missing value.  Price rows without a close take the bid/ask
    midpoint or are dropped.
    """
    c = store.counters

    for sid in sorted(store.annual):
        last: dict = {}
        prev_re = None
        for rec in store.annual[sid]:
            if rec["xrd"] is None:
                rec["xrd"] = 0.0
                c["xrd_zeroed"] = c.get("xrd_zeroed", 0) + 1
            if rec["dvt"] is None:
                rec["dvt"] = 0.0
                c["dvt_zeroed"] = c.get("dvt_zeroed", 0) + 1
            if rec["niadj"] is None and rec["ni"] is not None:
                rec["niadj"] = rec["ni"]
            if rec["re"] is None and prev_re is not None and rec["niadj"] is not None:
                rec["re"] = prev_re + rec["niadj"] - rec["dvt"]
            if rec["act"] is None:
                parts = [rec[k] for k in ("che", "rect") if rec[k] is not None]
                if parts:
                    rec["act"] = float(sum(parts))
            if rec["lct"] is None:
                parts = [rec[k] for k in ("dd1", "txp") if rec[k] is not None]
                if parts:
                    rec["lct"] = float(sum(parts))
            for item in STATEMENT_ITEMS:
                if rec[item] is None and item in last:
                    rec[item] = last[item]
                    c["values_forward_filled"] = c.get("values_forward_filled", 0) + 1
                if rec[item] is not None:
                    last[item] = rec[item]
            prev_re = rec["re"] if rec["re"] is not None else prev_re

    excluded = []
    for sid, rows in store.annual.items():
        for item in REQUIRED_ITEMS:
            if all(r[item] is None for r in rows):
                excluded.append(sid)
                break
    for sid in excluded:
        del store.annual[sid]
        store.quarterly.pop(sid, None)
    c["companies_excluded_missing_required"] = len(excluded)

    for sid in sorted(store.quarterly):
        last = {}
        for rec in store.quarterly[sid]:
            for item in QUARTERLY_ITEMS:
                if rec[item] is None and item in last:
                    rec[item] = last[item]
                if rec[item] is not None:
                    last[item] = rec[item]

    for sid in sorted(store.monthly):
        rows = store.monthly[sid]
        kept = []
        last_quote_date = None
        for rec in rows:
            if rec["close"] is None and rec["bid"] is not None and rec["ask"] is not None:
                rec["close"] = (rec["bid"] + rec["ask"]) / 2.0
                c["close_from_bid_ask"] = c.get("close_from_bid_ask", 0) + 1
            if rec["dividend"] is None:
                rec["dividend"] = 0.0
            if rec["close"] is not None:
                last_quote_date = rec["date"]
        for rec in rows:
            if rec["close"] is not None:
                kept.append(rec)
            elif rec["dlprc"] is not None or rec["dlamt"] is not None:
                kept.append(rec)  # delisting event row
            elif last_quote_date is not None and rec["date"] > last_quote_date:
                kept.append(rec)  # post-quote marker: company is delisted
            else:
                c["price_rows_dropped"] = c.get("price_rows_dropped", 0) + 1
        ffill = {"cfacpr": 1.0, "cfacshr": 1.0, "shrout": None}
        cleaned = []
        for rec in kept:
            for col, default in (("cfacpr", 1.0), ("cfacshr", 1.0)):
                if rec[col] is None:
                    rec[col] = ffill[col]
                ffill[col] = rec[col]
            if rec["shrout"] is None:
                rec["shrout"] = ffill["shrout"]
            else:
                ffill["shrout"] = rec["shrout"]
            if rec["close"] is not None and rec["shrout"] is None:
                c["price_rows_dropped"] = c.get("price_rows_dropped", 0) + 1
                continue
            cleaned.append(rec)
        store.monthly[sid] = cleaned

    for sid in sorted(store.daily):
        rows = [r for r in store.daily[sid] if r["close"] is not None]
        prev_fac = 1.0
        for rec in rows:
            if rec["dividend"] is None:
                rec["dividend"] = 0.0
            if rec["cfacpr"] is None:
                rec["cfacpr"] = prev_fac
            prev_fac = rec["cfacpr"]
        store.daily[sid] = rows
    return store


# ---------------------------------------------------------------------------
# company history + panel
# ---------------------------------------------------------------------------

@dataclass
class Delisting:
    is_delisted: bool
    last_quote: date | None
    events: list  # (date, dlprc, dlamt) after the last quote


@dataclass
class CompanyHistory:
    security_id: str
    entity_id: str
    annual: list                 # item dicts, period_end ascending
    annual_period_ends: list
    annual_available: list       # period_end + lag
    annual_chain_ok: list        # [i] true when i-7..i are consecutive
    quarterly: list
    quarterly_available: list
    month_dates: list
    adj_close: np.ndarray
    div_adj: np.ndarray
    close_raw: np.ndarray
    shrout: np.ndarray
    cfacpr: np.ndarray
    cfacshr: np.ndarray
    market_equity: np.ndarray
    month_run: np.ndarray        # consecutive-quote counter
    daily_dates: list
    daily_returns: np.ndarray    # aligned with daily_dates[1:]
    delisting: Delisting

    def latest_annual_index(self, as_of: date) -> int:
        """Largest statement index whose availability date is <= as_of, else -1."""
        lo, hi = 0, len(self.annual_available)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.annual_available[mid] <= as_of:
                lo = mid + 1
            else:
                hi = mid
        return lo - 1

    def latest_quarterly_index(self, as_of: date) -> int:
        lo, hi = 0, len(self.quarterly_available)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.quarterly_available[mid] <= as_of:
                lo = mid + 1
            else:
                hi = mid
        return lo - 1

    def month_index(self, as_of: date) -> int:
        """Index of the quote at as_of, or -1."""
        lo, hi = 0, len(self.month_dates)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.month_dates[mid] < as_of:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.month_dates) and self.month_dates[lo] == as_of:
            return lo
        return -1

    def daily_window(self, as_of: date, size: int, max_span_days: int):
        """Last ``size`` daily returns at dates <= as_of, or None.

        None when fewer than ``size`` returns exist or the window spans
        more than ``max_span_days`` calendar days.
        """
        lo, hi = 0, len(self.daily_returns)
        dates = self.daily_dates
        while lo < hi:
            mid = (lo + hi) // 2
            if dates[mid + 1] <= as_of:   # return i is dated daily_dates[i + 1]
                lo = mid + 1
            else:
                hi = mid
        if lo < size:
            return None
        first = dates[lo - size + 1]
        last = dates[lo]
        if (last - first).days > max_span_days:
            return None
        return self.daily_returns[lo - size : lo]


def _daily_return(close_t, close_prev, div_t) -> float:
    from .features_qv import daily_total_return

    return daily_total_return(close_t, close_prev, div_t)


def _build_company(
    sid: str,
    entity_id: str,
    annual_rows: list,
    quarterly_rows: list,
    monthly_rows: list,
    daily_rows: list,
    config: EngineConfig,
) -> CompanyHistory:
    lag = timedelta(days=config.panel.lag_days)
    lo_gap, hi_gap = config.panel.annual_gap_months

    period_ends = [r["period_end"] for r in annual_rows]
    available = [pe + lag for pe in period_ends]
    depth = config.panel.min_history_years - 1
    chain_ok = []
    for i in range(len(period_ends)):
        ok = i >= depth
        if ok:
            for j in range(i - depth + 1, i + 1):
                gap = months_between(period_ends[j - 1], period_ends[j])
                if not lo_gap <= gap <= hi_gap:
                    ok = False
                    break
        chain_ok.append(ok)

    q_available = [r["period_end"] + lag for r in quarterly_rows]

    quotes = [r for r in monthly_rows if r["close"] is not None]
    post = [r for r in monthly_rows if r["close"] is None]
    month_dates = [r["date"] for r in quotes]
    close_raw = np.array([r["close"] for r in quotes], dtype=float)
    cfacpr = np.array([r["cfacpr"] for r in quotes], dtype=float)
    cfacshr = np.array([r["cfacshr"] for r in quotes], dtype=float)
    shrout = np.array([r["shrout"] for r in quotes], dtype=float)
    div = np.array([r["dividend"] for r in quotes], dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        adj_close = np.where(cfacpr != 0, close_raw / cfacpr, close_raw)
        div_adj = np.where(cfacpr != 0, div / cfacpr, div)
    market_equity = close_raw * shrout / 1000.0

    run = np.ones(len(month_dates), dtype=int)
    for i in range(1, len(month_dates)):
        if (month_dates[i] - month_dates[i - 1]).days <= config.panel.price_gap_days:
            run[i] = run[i - 1] + 1

    last_quote = month_dates[-1] if month_dates else None
    events = [
        (r["date"], r["dlprc"], r["dlamt"])
        for r in post
        if last_quote is not None and r["date"] > last_quote
    ]
    delisting = Delisting(is_delisted=bool(events), last_quote=last_quote, events=events)

    d_dates = [r["date"] for r in daily_rows]
    d_close = [r["close"] for r in daily_rows]
    d_div = [r["dividend"] / (r["cfacpr"] or 1.0) for r in daily_rows]
    d_adj = [
        (c / f if (f := daily_rows[i]["cfacpr"]) else c) for i, c in enumerate(d_close)
    ]
    returns = np.array(
        [_daily_return(d_adj[i], d_adj[i - 1], d_div[i]) for i in range(1, len(d_adj))],
        dtype=float,
    )

    return CompanyHistory(
        security_id=sid,
        entity_id=entity_id,
        annual=[{k: r[k] for k in STATEMENT_ITEMS} for r in annual_rows],
        annual_period_ends=period_ends,
        annual_available=available,
        annual_chain_ok=chain_ok,
        quarterly=[{k: r[k] for k in QUARTERLY_ITEMS} for r in quarterly_rows],
        quarterly_available=q_available,
        month_dates=month_dates,
        adj_close=adj_close,
        div_adj=div_adj,
        close_raw=close_raw,
        shrout=shrout,
        cfacpr=cfacpr,
        cfacshr=cfacshr,
        market_equity=market_equity,
        month_run=run,
        daily_dates=d_dates,
        daily_returns=returns,
        delisting=delisting,
    )


@dataclass
class Panel:
    observations: pd.DataFrame
    companies: dict
    reference: ReferenceSeries
    config: EngineConfig
    report: dict = field(default_factory=dict)

    def export_csv(self, path) -> None:
        """Deterministic columnar export for audit."""
        out = self.observations.copy()
        out["as_of"] = out["as_of"].astype(str)
        out.to_csv(path, index=False, float_format="%.10g")


def build_panel(store: RawStore, config: EngineConfig = DEFAULT_CONFIG) -> Panel:
    """Materialize the monthly observation panel from an imputed store.

    Emits one row per (company, quote month) once the company has the
    minimum consecutive statement and price history; earlier months are
    silently dropped with counters in the build report.
    """
    companies: dict = {}
    rows = []
    counters = dict(store.counters)
    counters.setdefault("obs_no_statement_chain", 0)
    counters.setdefault("obs_short_price_history", 0)
    min_run = config.panel.min_price_months + 1  # prior months plus the current one

    for sid in sorted(store.annual):
        monthly = store.monthly.get(sid)
        if not monthly:
            continue
        hist = _build_company(
            sid,
            store.entity_of.get(sid, ""),
            store.annual[sid],
            store.quarterly.get(sid, []),
            monthly,
            store.daily.get(sid, []),
            config,
        )
        if len(hist.annual) < config.panel.min_history_years:
            counters["companies_too_short"] = counters.get("companies_too_short", 0) + 1
            continue
        companies[sid] = hist

        for mi, as_of in enumerate(hist.month_dates):
            if hist.month_run[mi] < min_run:
                counters["obs_short_price_history"] += 1
                continue
            ai = hist.latest_annual_index(as_of)
            if ai < 0 or not hist.annual_chain_ok[ai]:
                counters["obs_no_statement_chain"] += 1
                continue
            qi = hist.latest_quarterly_index(as_of)
            rows.append(
                (sid, as_of, mi, ai, qi, float(hist.adj_close[mi]), float(hist.market_equity[mi]))
            )

    observations = pd.DataFrame(
        rows,
        columns=["security_id", "as_of", "month_idx", "annual_idx", "quarterly_idx",
                 "adj_close", "market_equity"],
    )
    if len(observations):
        observations.sort_values(["as_of", "security_id"], inplace=True, kind="mergesort")
        observations.reset_index(drop=True, inplace=True)

    eligible = liquidity_filter(observations, store.reference.breakpoints)
    observations["eligible"] = eligible
    counters["observations"] = len(observations)
    return Panel(
        observations=observations,
        companies=companies,
        reference=store.reference,
        config=config,
        report=counters,
    )


def liquidity_filter(observations: pd.DataFrame, breakpoints: pd.Series) -> np.ndarray:
    """Purchase eligibility: market equity at or above the month's breakpoint.

    Never deletes rows; ineligible observations still train and label.
    Missing breakpoint months are a hard error.
    """
    if not len(observations):
        return np.zeros(0, dtype=bool)
    flags = np.zeros(len(observations), dtype=bool)
    for i, (as_of, me) in enumerate(zip(observations["as_of"], observations["market_equity"])):
        per = month_period(as_of)
        if per not in breakpoints.index or not math.isfinite(breakpoints.loc[per]):
            raise ValueError(f"no liquidity breakpoint for month {per}")
        flags[i] = me >= breakpoints.loc[per]
    return flags
