"""Chronological feature sweep over the observation panel.

Walks panel observations date by date, computing the quantitative-value
and Buffett-checklist variables with their cross-sectional cumulative
percentile ranks and rolling winsorization.  Within a date every company's
raw value is inserted into the shared states before any rank is queried,
so results are independent of company order; across dates the states only
ever grow, which is what makes feature values at time t invariant to data
arriving after t.

Per-company, per-variable forward-fill replaces a non-finite computation
with the company's last finite value, mirroring the most-recently-available
imputation used for raw statement items.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np
import pandas as pd

from . import features_buffett as fb
from . import features_qv as fq
from .config import EngineConfig
from .mathkit import CumulativePercentileState
from .panel import Panel, month_period

NAN = math.nan

QV_BASIC_COLUMNS = ("comboaccrual", "pman", "pfd_lag12", "price_cheap", "quality")

QV_FULL_COLUMNS = (
    "snoa", "comboaccrual",
    "dsri", "gmi", "aqi", "sgi", "depi", "sgai", "lvgi", "tata", "pman",
    "nimtaavg", "tlmta", "cashmta", "exretavg", "return_3mos_sd", "rsize", "mb",
    "price_log", "pfd",
    "price_cheap",
    "roa", "roa_8_gmean", "roc_8_gmean", "fcfa", "fcfa_pct", "gm_8_gmean", "gms_pct",
    "fs_roa", "fcfta", "fs_fcfta", "accrual", "fs_accrual",
    "lever", "fs_lever", "liquid", "fs_liquid", "neqiss", "fs_neqiss",
    "roa_change", "fs_roa_change", "fcfta_change", "fs_fcfta_change",
    "gm_change", "fs_gm", "fs_turnover",
    "quality",
)

# dropped from QV full for collinearity; still computed and exported
REMOVED_FROM_QV_FULL = (
    "fin_strength", "fran_power", "gm_8_gmean_pct", "gms", "margin_max",
    "roa_8_gmean_pct", "snoa_pct", "sta", "sta_pct", "turnover_change",
)

BUFFETT_COLUMNS = (
    "epsfi_8_cagr_pct",
    "fin_con1_8_gmean_pct", "fin_con2_8_gmean_pct", "fin_con3_8_gmean_pct",
    "roe_8_gmean_pct", "re_use_8_gmean_pct", "re_maintain_8_gmean_pct",
    "re_perc_8_gmean", "dvt_perc_8_gmean", "re_return_pct",
    "neqiss_8_gmean_pct", "rev_inf_8_gmean_pct",
    "price_cagr", "tot_cagr", "price_roe_pv", "price_roe_ms",
    "price_tsy_implied", "price_tsy_implied_ms",
)

ALL_FEATURE_COLUMNS = (
    QV_FULL_COLUMNS
    + REMOVED_FROM_QV_FULL
    + ("tev", "pfd_lag12")
    + BUFFETT_COLUMNS
)


class FeatureSet(str, Enum):
    QV_BASIC = "qv_basic"
    QV_FULL = "qv_full"
    BUFFETTOLOGY = "buffettology"
    QV_FULL_PLUS_BUFFETT = "qv_full_plus_buffett"


def feature_columns(selector: FeatureSet) -> tuple:
    """Published, deterministic column order for each predictor set."""
    if selector == FeatureSet.QV_BASIC:
        return QV_BASIC_COLUMNS
    if selector == FeatureSet.QV_FULL:
        return QV_FULL_COLUMNS
    if selector == FeatureSet.BUFFETTOLOGY:
        return BUFFETT_COLUMNS
    if selector == FeatureSet.QV_FULL_PLUS_BUFFETT:
        return QV_FULL_COLUMNS + BUFFETT_COLUMNS
    raise ValueError(f"unknown feature set {selector!r}")


def select_features(matrix: pd.DataFrame, selector: FeatureSet) -> pd.DataFrame:
    """Project the full feature matrix onto one predictor set, in order."""
    cols = feature_columns(selector)
    missing = [c for c in cols if c not in matrix.columns]
    if missing:
        raise ValueError(f"features not computed: {', '.join(missing)}")
    return matrix[list(cols)]


def _nanify(x) -> float:
    return NAN if x is None else float(x)


def _mean_if_complete(values) -> float:
    if any(not math.isfinite(v) for v in values):
        return NAN
    return math.fsum(values) / len(values)


CHS_INPUTS = ("nimtaavg", "tlmta", "cashmta", "exretavg", "return_3mos_sd",
              "rsize", "mb", "price_log")

PCT_BATCH = (
    ("sta", "sta_pct"),
    ("snoa", "snoa_pct"),
    ("_yield", "price_cheap"),
    ("roa_8_gmean", "roa_8_gmean_pct"),
    ("_roc_8_gmean", "_roc_8_gmean_pct"),
    ("fcfa", "fcfa_pct"),
    ("gm_8_gmean", "gm_8_gmean_pct"),
    ("gms", "gms_pct"),
    ("_epsfi_8_cagr", "epsfi_8_cagr_pct"),
    ("_fin_con1_8_gmean", "fin_con1_8_gmean_pct"),
    ("_fin_con2_8_gmean", "fin_con2_8_gmean_pct"),
    ("_fin_con3_8_gmean", "fin_con3_8_gmean_pct"),
    ("_roe_8_gmean", "roe_8_gmean_pct"),
    ("_re_use_8_gmean", "re_use_8_gmean_pct"),
    ("_re_maintain_8_gmean", "re_maintain_8_gmean_pct"),
    ("_neqiss_8_gmean", "neqiss_8_gmean_pct"),
    ("_rev_inf_8_gmean", "rev_inf_8_gmean_pct"),
    ("_re_return", "re_return_pct"),
)

# everything that forward-fills per company when a fresh computation is
# non-finite (order matters only for readability)
FFILL_VARS = (
    "sta", "snoa", "tata", "dsri", "gmi", "aqi", "sgi", "depi", "sgai", "lvgi",
    "_nimta", "nimtaavg", "tlmta", "cashmta", "exretavg", "return_3mos_sd",
    "rsize", "mb", "price_log",
    "tev", "_yield",
    "roa", "roa_8_gmean", "_roc_8_gmean", "fcfa", "gm_8_gmean", "gms",
    "fcfta", "accrual", "lever", "liquid", "neqiss",
    "roa_change", "fcfta_change", "gm_change", "turnover_change",
    "_epsfi_8_cagr", "_fin_con1_8_gmean", "_fin_con2_8_gmean", "_fin_con3_8_gmean",
    "_roe_8_gmean", "_re_use_8_gmean", "_re_maintain_8_gmean",
    "re_perc_8_gmean", "dvt_perc_8_gmean",
    "_neqiss_8_gmean", "_rev_inf_8_gmean", "_re_return",
    "price_cagr", "tot_cagr", "price_roe_pv", "price_roe_ms",
    "price_tsy_implied", "price_tsy_implied_ms",
)


class FeatureEngine:
    """Computes the full feature matrix for a panel in one chronological pass."""

    def __init__(self, panel: Panel, config: EngineConfig | None = None):
        self.panel = panel
        self.config = config or panel.config
        self._pct: dict = {}
        self._win: dict = {}
        self._last: dict = {}          # sid -> var -> last finite value
        self._year_cache: dict = {}
        self._chain_cache: dict = {}
        self._exret: dict = {}         # sid -> {period: exret}
        self._nimta: dict = {}
        self._pfd: dict = {}

    # -- state helpers ------------------------------------------------------

    def _pct_state(self, name: str) -> CumulativePercentileState:
        if name not in self._pct:
            self._pct[name] = CumulativePercentileState()
        return self._pct[name]

    def _win_state(self, name: str) -> CumulativePercentileState:
        if name not in self._win:
            self._win[name] = CumulativePercentileState()
        return self._win[name]

    def _fill(self, sid: str, name: str, value: float) -> float:
        last = self._last.setdefault(sid, {})
        if value is not None and math.isfinite(value):
            last[name] = value
            return value
        return last.get(name, NAN)

    # -- per-company statement-year arrays ----------------------------------

    def _price_at_statement(self, hist, period_end):
        """Latest quote at or before the statement period end."""
        dates = hist.month_dates
        lo, hi = 0, len(dates)
        while lo < hi:
            mid = (lo + hi) // 2
            if dates[mid] <= period_end:
                lo = mid + 1
            else:
                hi = mid
        if lo == 0:
            return None
        return lo - 1

    def _year_values(self, sid: str) -> dict:
        if sid in self._year_cache:
            return self._year_cache[sid]
        hist = self.panel.companies[sid]
        items = hist.annual
        n = len(items)
        ref = self.panel.reference

        def item(name, i):
            return _nanify(items[i][name])

        vals = {key: np.full(n, NAN) for key in (
            "roa", "roc", "gm", "fcf", "epsfi", "bkvlps", "pe",
            "fin_con1", "fin_con2", "fin_con3", "roe", "re_use", "re_maintain",
            "re_perc", "dvt_perc", "neqiss_qv", "neqiss_bf", "rev_inf",
            "current", "re", "lever", "liquid", "turnover_change",
            "fcfta", "accrual", "roa_change", "fcfta_change", "gm_change",
        )}

        month_idx = [self._price_at_statement(hist, pe) for pe in hist.annual_period_ends]
        for i in range(n):
            vals["roa"][i] = fq.return_on_assets(
                item("ibcom", i), item("niadj", i), item("ni", i), item("at", i))
            vals["roc"][i] = fq.return_on_capital(
                item("ebit", i), item("ppent", i), item("act", i), item("lct", i), item("ch", i))
            vals["gm"][i] = fq.gross_margin(item("sale", i), item("cogs", i))
            wcapch = 0.0 if i == 0 else fq.working_capital_change(
                item("act", i), item("lct", i), item("act", i - 1), item("lct", i - 1))
            vals["fcf"][i] = fq.free_cash_flow(item("ni", i), item("dp", i), wcapch, item("capx", i))
            vals["epsfi"][i] = item("epsfi", i)
            vals["bkvlps"][i] = item("bkvlps", i)
            vals["re"][i] = item("re", i)
            vals["current"][i] = fq.current_ratio(item("act", i), item("lct", i))
            vals["fin_con1"][i] = fb.conservative_financing_1(
                item("dltt", i), item("niadj", i), item("ni", i))
            vals["fin_con2"][i] = fb.conservative_financing_2(
                item("dltt", i), item("seq", i), item("ceq", i), item("pstk", i),
                item("at", i), item("lt", i))
            vals["fin_con3"][i] = fb.conservative_financing_3(item("act", i), item("lt", i))
            roe = fb.return_on_equity(
                item("niadj", i), item("ni", i), item("seq", i), item("ceq", i),
                item("pstk", i), item("at", i), item("lt", i))
            vals["roe"][i] = roe
            vals["re_use"][i] = fb.retained_earnings_use(
                item("re", i), item("niadj", i), item("ni", i))
            vals["re_maintain"][i] = fb.retained_earnings_maintenance(
                item("capx", i), item("re", i))
            vals["re_perc"][i] = fb.retained_percentage(item("dvt", i), item("niadj", i), roe)
            vals["dvt_perc"][i] = fb.dividend_percentage(item("dvt", i), item("niadj", i), roe)

            mi = month_idx[i]
            mip = month_idx[i - 1] if i > 0 else None
            if mi is not None:
                vals["pe"][i] = fq.fdiv(float(hist.adj_close[mi]), item("epsfi", i))
            if mi is not None and mip is not None and i > 0:
                vals["neqiss_qv"][i] = fq.net_equity_issuance(
                    float(hist.shrout[mi]), float(hist.shrout[mip]),
                    float(hist.close_raw[mi]), float(hist.close_raw[mip]),
                    float(hist.cfacpr[mi]), float(hist.cfacpr[mip]))
                vals["neqiss_bf"][i] = fb.share_adjusted_issuance(
                    float(hist.shrout[mi]), float(hist.shrout[mip]),
                    float(hist.cfacshr[mi]), float(hist.cfacshr[mip]),
                    float(hist.close_raw[mi]), float(hist.close_raw[mip]),
                    float(hist.cfacpr[mi]), float(hist.cfacpr[mip]))

            if i == 0:
                vals["rev_inf"][i] = 0.0   # no prior statement: change treated as zero
            else:
                per = month_period(hist.annual_period_ends[i])
                cpi_t = ref.cpi.get(per, NAN)
                cpi_lag = ref.cpi.get(per - 12, NAN)
                vals["rev_inf"][i] = fb.inflation_adjusted_growth(
                    item("sale", i), item("sale", i - 1), _nanify(cpi_t), _nanify(cpi_lag))

            vals["fcfta"][i] = fq.fdiv(vals["fcf"][i], item("at", i))
            vals["accrual"][i] = vals["fcfta"][i] - vals["roa"][i]
            if i > 0:
                vals["lever"][i] = fq.leverage_change(
                    item("dltt", i), item("at", i), item("dltt", i - 1), item("at", i - 1))
                vals["liquid"][i] = vals["current"][i] - vals["current"][i - 1]
                vals["roa_change"][i] = vals["roa"][i] - vals["roa"][i - 1]
                vals["fcfta_change"][i] = vals["fcfta"][i] - vals["fcfta"][i - 1]
                vals["gm_change"][i] = vals["gm"][i] - vals["gm"][i - 1]
            if i > 1:
                vals["turnover_change"][i] = (
                    fq.fdiv(item("sale", i), item("at", i - 1))
                    - fq.fdiv(item("sale", i - 1), item("at", i - 2))
                )

        # most-recently-available fill along the statement series
        for key, arr in vals.items():
            last = NAN
            for i in range(n):
                if math.isfinite(arr[i]):
                    last = arr[i]
                else:
                    arr[i] = last
        self._year_cache[sid] = vals
        return vals

    # -- per (company, statement chain) block -------------------------------

    def _chain_block(self, sid: str, ai: int) -> dict:
        key = (sid, ai)
        if key in self._chain_cache:
            return self._chain_cache[key]
        hist = self.panel.companies[sid]
        items = hist.annual
        y = self._year_values(sid)

        def item(name, i):
            return _nanify(items[i][name])

        t, p = ai, ai - 1
        block = {
            "sta": fq.scaled_total_accruals(
                item("act", t), item("act", p), item("che", t), item("che", p),
                item("lct", t), item("lct", p), item("dd1", t), item("dd1", p),
                item("txp", t), item("txp", p), item("dp", t), item("at", t)),
            "snoa": fq.scaled_net_operating_assets(
                item("at", t), item("che", t), item("dlc", t), item("dltt", t),
                item("mib", t), item("pstk", t), item("ceq", t)),
            "tata": fq.total_accruals_to_assets(
                item("act", t), item("act", p), item("che", t), item("che", p),
                item("lct", t), item("lct", p), item("dd1", t), item("dd1", p),
                item("txp", t), item("txp", p), item("dp", t), item("at", t)),
            "dsri": fq.dsri_index(item("rect", t), item("rect", p),
                                  item("sale", t), item("sale", p)),
            "gmi": fq.gmi_index(item("sale", t), item("sale", p),
                                item("cogs", t), item("cogs", p)),
            "aqi": fq.aqi_index(item("act", t), item("act", p), item("ppent", t),
                                item("ppent", p), item("at", t), item("at", p)),
            "sgi": fq.sgi_index(item("sale", t), item("sale", p)),
            "depi": fq.depi_index(item("dp", t), item("dp", p), item("am", t),
                                  item("am", p), item("ppent", t), item("ppent", p)),
            "sgai": fq.sgai_index(item("xsga", t), item("xsga", p),
                                  item("sale", t), item("sale", p)),
            "lvgi": fq.lvgi_index(item("dltt", t), item("dltt", p), item("lct", t),
                                  item("lct", p), item("at", t), item("at", p)),
        }

        window = slice(ai - 7, ai + 1)
        roa_w = list(y["roa"][window])
        roc_w = list(y["roc"][window])
        gm_w = list(y["gm"][window])
        fcf_w = list(y["fcf"][window])
        block["roa_8_gmean"] = fq.eight_year_gmean(roa_w)
        block["_roc_8_gmean"] = fq.eight_year_gmean(roc_w)
        block["gm_8_gmean"] = fq.eight_year_gmean(gm_w)
        block["gms"] = fq.margin_stability(gm_w)
        fcf_8y = math.fsum(fcf_w) if all(math.isfinite(v) for v in fcf_w) else NAN
        block["fcfa"] = fq.fdiv(fcf_8y, item("at", t))
        block["_re_return"] = fb.retained_earnings_return(list(y["re"][window]))

        for name, arr in (
            ("_epsfi_8_cagr", "epsfi"),
            ("_fin_con1_8_gmean", "fin_con1"),
            ("_fin_con2_8_gmean", "fin_con2"),
            ("_fin_con3_8_gmean", "fin_con3"),
            ("_roe_8_gmean", "roe"),
            ("_re_use_8_gmean", "re_use"),
            ("_re_maintain_8_gmean", "re_maintain"),
            ("re_perc_8_gmean", "re_perc"),
            ("dvt_perc_8_gmean", "dvt_perc"),
            ("_neqiss_8_gmean", "neqiss_bf"),
            ("_rev_inf_8_gmean", "rev_inf"),
        ):
            block[name] = fq.eight_year_gmean(list(y[arr][window]))

        block["pe_window"] = list(y["pe"][window])
        block["epsfi"] = y["epsfi"][ai]
        block["bkvlps"] = y["bkvlps"][ai]

        for name in ("roa", "fcfta", "accrual", "lever", "liquid",
                     "roa_change", "fcfta_change", "gm_change", "turnover_change"):
            block[name] = y[name][ai]
        block["neqiss"] = y["neqiss_qv"][ai]

        self._chain_cache[key] = block
        return block

    # -- main sweep ----------------------------------------------------------

    def compute(self) -> pd.DataFrame:
        obs = self.panel.observations
        ref = self.panel.reference
        cfg = self.config.features
        n_rows = len(obs)
        out = {col: np.full(n_rows, NAN) for col in ALL_FEATURE_COLUMNS}

        if n_rows == 0:
            frame = pd.DataFrame(out, index=obs.index)
            frame.insert(0, "as_of", obs["as_of"])
            frame.insert(0, "security_id", obs["security_id"])
            return frame

        sid_arr = obs["security_id"].to_numpy()
        as_of_arr = obs["as_of"].to_numpy()
        mi_arr = obs["month_idx"].to_numpy()
        ai_arr = obs["annual_idx"].to_numpy()
        qi_arr = obs["quarterly_idx"].to_numpy()
        me_arr = obs["market_equity"].to_numpy()
        px_arr = obs["adj_close"].to_numpy()

        # group row indices by date, dates ascending (panel is pre-sorted)
        groups: list = []
        start = 0
        for i in range(1, n_rows + 1):
            if i == n_rows or as_of_arr[i] != as_of_arr[start]:
                groups.append((as_of_arr[start], list(range(start, i))))
                start = i

        for as_of, idxs in groups:
            per = month_period(as_of)
            vwretd_window = [
                float(ref.sp500.get(per - j, NAN)) for j in range(24)
            ]
            sp500_24 = fq.index_compound_return(vwretd_window)
            usdval = _nanify(ref.usdval.get(per, NAN))
            tsy = _nanify(ref.treasury.get(per, NAN))

            raw: dict = {}
            for i in idxs:
                sid = sid_arr[i]
                hist = self.panel.companies[sid]
                mi, ai, qi = int(mi_arr[i]), int(ai_arr[i]), int(qi_arr[i])
                mktcap = float(me_arr[i])
                adj_close = float(px_arr[i])
                items = hist.annual[ai]

                r = dict(self._chain_block(sid, ai))

                # distress inputs
                if qi >= 0:
                    q = hist.quarterly[qi]
                    r["_nimta"] = fq.nimta(_nanify(q["niq"]), mktcap, _nanify(q["ltq"]))
                    r["tlmta"] = fq.tlmta(_nanify(q["ltq"]), mktcap)
                    r["cashmta"] = fq.cashmta(_nanify(q["cheq"]), mktcap, _nanify(q["ltq"]))
                else:
                    r["_nimta"] = r["tlmta"] = r["cashmta"] = NAN
                gross = fq.monthly_gross_return(
                    adj_close, float(hist.adj_close[mi - 1]) if mi > 0 else NAN,
                    float(hist.div_adj[mi]))
                r["_exret_raw"] = fq.log_excess_return(gross, sp500_24)
                window = hist.daily_window(as_of, cfg.daily_window, cfg.daily_window_max_span_days)
                r["return_3mos_sd"] = (
                    float(np.std(window, ddof=1)) if window is not None and len(window) > 1 else NAN
                )
                r["rsize"] = fq.relative_size(mktcap, usdval)
                bv = fq.book_value(
                    _nanify(items["txdb"]), _nanify(items["itcb"]), _nanify(items["prca"]),
                    _nanify(items["pstkrv"]), _nanify(items["pstkl"]), _nanify(items["pstk"]),
                    _nanify(items["seq"]), _nanify(items["ceq"]), _nanify(items["at"]),
                    _nanify(items["lt"]))
                r["mb"] = fq.market_to_book(mktcap, bv)
                r["price_log"] = fq.truncated_log_price(adj_close)

                # cheapness
                r["tev"] = fq.total_enterprise_value(
                    mktcap, _nanify(items["dltt"]), _nanify(items["dlc"]),
                    _nanify(items["ch"]), _nanify(items["act"]), _nanify(items["lct"]),
                    _nanify(items["pstkrv"]), _nanify(items["pstkl"]), _nanify(items["pstk"]),
                    _nanify(items["mib"]))
                r["_yield"] = fq.earnings_yield(_nanify(items["ebit"]), r["tev"])

                # price projections
                r["price_cagr"] = fb.eps_implied_cagr(r["epsfi"], r["_epsfi_8_cagr"], adj_close)
                r["tot_cagr"] = fb.roe_implied_cagr(
                    r["bkvlps"], r["_roe_8_gmean"], r["re_perc_8_gmean"],
                    r["dvt_perc_8_gmean"], r["pe_window"], adj_close)
                bk_fv = fb.book_value_projection(
                    r["bkvlps"], r["re_perc_8_gmean"], r["dvt_perc_8_gmean"])
                r["price_roe_pv"] = (
                    fb.hurdle_present_value(bk_fv, cfg.hurdle_rate)
                    if math.isfinite(bk_fv) else NAN
                )
                r["price_roe_ms"] = (
                    fb.hurdle_margin_of_safety(adj_close, r["price_roe_pv"])
                    if math.isfinite(r["price_roe_pv"]) else NAN
                )
                r["price_tsy_implied"] = fb.treasury_implied_value(r["epsfi"], tsy)
                r["price_tsy_implied_ms"] = (
                    fb.treasury_margin_of_safety(adj_close, r["price_tsy_implied"])
                    if math.isfinite(r["price_tsy_implied"]) else NAN
                )
                raw[i] = r

            # missing excess returns take the date's cross-sectional mean
            present = [raw[i]["_exret_raw"] for i in idxs if math.isfinite(raw[i]["_exret_raw"])]
            cross_mean = math.fsum(present) / len(present) if present else NAN
            for i in idxs:
                r = raw[i]
                if not math.isfinite(r["_exret_raw"]) and math.isfinite(cross_mean):
                    fq.casetrack.hit("exret.cross_sectional_mean")
                    r["_exret_raw"] = cross_mean

            # lag histories (stored after fill so gaps inherit the last value)
            for i in idxs:
                sid = sid_arr[i]
                r = raw[i]
                nim = self._fill(sid, "_nimta", r["_nimta"])
                r["_nimta"] = nim
                self._nimta.setdefault(sid, {})[per] = nim
                ex = self._fill(sid, "_exret", r["_exret_raw"])
                self._exret.setdefault(sid, {})[per] = ex
                nim_hist = self._nimta[sid]
                r["nimtaavg"] = fq.nimta_weighted_average(
                    [_nanify(nim_hist.get(per - 3 * j, NAN)) for j in range(4)])
                ex_hist = self._exret[sid]
                r["exretavg"] = fq.exret_weighted_average(
                    [_nanify(ex_hist.get(per - j, NAN)) for j in range(12)])

            # per-company forward fill of every raw variable
            for i in idxs:
                sid = sid_arr[i]
                r = raw[i]
                for name in FFILL_VARS:
                    if name in ("_nimta",):
                        continue
                    r[name] = self._fill(sid, name, r.get(name, NAN))

            # winsorized distress inputs -> probability of distress
            for name in CHS_INPUTS:
                state = self._win_state(name)
                for i in idxs:
                    state.add(raw[i][name])
            for i in idxs:
                r = raw[i]
                wz = {
                    name: self._win_state(name).clamp(
                        r[name], cfg.winsorize_low, cfg.winsorize_high)
                    for name in CHS_INPUTS
                }
                r.update(wz)
                if all(math.isfinite(wz[name]) for name in CHS_INPUTS):
                    score = fq.distress_score(
                        wz["nimtaavg"], wz["tlmta"], wz["exretavg"], wz["return_3mos_sd"],
                        wz["rsize"], wz["cashmta"], wz["mb"], wz["price_log"])
                    r["pfd"] = fq.distress_probability(score)
                else:
                    r["pfd"] = NAN
                sid = sid_arr[i]
                self._pfd.setdefault(sid, {})[per] = r["pfd"]
                r["pfd_lag12"] = _nanify(
                    self._pfd[sid].get(per - self.config.features.pfd_lag_months, NAN))

            # manipulation probability from the (filled) indices
            for i in idxs:
                r = raw[i]
                indices = [r[k] for k in ("dsri", "gmi", "aqi", "sgi", "depi", "sgai",
                                          "lvgi", "tata")]
                if all(math.isfinite(v) for v in indices):
                    r["pman"] = fq.manipulation_probability(fq.manipulation_score(*indices))
                else:
                    r["pman"] = NAN

            # cumulative percentile ranks: insert the whole cross-section,
            # then query
            for src, _dst in PCT_BATCH:
                state = self._pct_state(src)
                for i in idxs:
                    state.add(raw[i][src])
            for i in idxs:
                r = raw[i]
                for src, dst in PCT_BATCH:
                    r[dst] = self._pct_state(src).percentile(r[src])
                r["comboaccrual"] = _mean_if_complete([r["sta_pct"], r["snoa_pct"]])
                if math.isfinite(r["gms_pct"]) and math.isfinite(r["gm_8_gmean_pct"]):
                    r["margin_max"] = max(r["gms_pct"], r["gm_8_gmean_pct"])
                else:
                    r["margin_max"] = NAN
                r["_fran_avg"] = _mean_if_complete([
                    r["roa_8_gmean_pct"], r["_roc_8_gmean_pct"], r["fcfa_pct"], r["margin_max"]])

            fran_state = self._pct_state("_fran_avg")
            for i in idxs:
                fran_state.add(raw[i]["_fran_avg"])
            for i in idxs:
                r = raw[i]
                r["fran_power"] = fran_state.percentile(r["_fran_avg"])
                if not math.isfinite(r["_fran_avg"]):
                    r["fran_power"] = NAN

                strength_flags = [
                    fq.indicator(r["roa"]), fq.indicator(r["fcfta"]), fq.indicator(r["accrual"]),
                    fq.indicator(r["lever"]), fq.indicator(r["liquid"]), fq.indicator(r["neqiss"]),
                    fq.indicator(r["roa_change"]), fq.indicator(r["fcfta_change"]),
                    fq.indicator(r["gm_change"]), fq.indicator(r["turnover_change"]),
                ]
                r["fs_roa"] = strength_flags[0]
                r["fs_fcfta"] = strength_flags[1]
                r["fs_accrual"] = strength_flags[2]
                r["fs_lever"] = strength_flags[3]
                r["fs_liquid"] = strength_flags[4]
                r["fs_neqiss"] = strength_flags[5]
                r["fs_roa_change"] = strength_flags[6]
                r["fs_fcfta_change"] = strength_flags[7]
                r["fs_gm"] = strength_flags[8]
                r["fs_turnover"] = strength_flags[9]
                r["fin_strength"] = fq.financial_strength(strength_flags)
                if math.isfinite(r["fran_power"]):
                    r["quality"] = fq.quality_score(r["fran_power"], r["fin_strength"])
                else:
                    r["quality"] = NAN

                for col in ALL_FEATURE_COLUMNS:
                    out[col][i] = r.get(col, NAN)

        frame = pd.DataFrame(out, index=obs.index)
        frame.insert(0, "as_of", obs["as_of"])
        frame.insert(0, "security_id", obs["security_id"])
        return frame


def compute_features(panel: Panel, config: EngineConfig | None = None) -> pd.DataFrame:
    return FeatureEngine(panel, config).compute()


def export_features_csv(matrix: pd.DataFrame, path) -> None:
    """Deterministic feature-matrix export: (security_id, as_of, columns)."""
    out = matrix.copy()
    out["as_of"] = out["as_of"].astype(str)
    out.to_csv(path, index=False, float_format="%.10g")
