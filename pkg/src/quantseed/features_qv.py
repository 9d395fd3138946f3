"""Quantitative-value predictor variables.

Pure per-observation formulas for the accrual screens, the Beneish
manipulation indices, the Campbell-Hilscher-Szilagyi distress inputs, the
Greenblatt earnings yield and the Piotroski-style strength indicators.
Degenerate-input rules are applied as a sequence of conditional overwrites
in their documented order, so a later, more specific rule wins; every rule
reports to the casetrack registry.

Missing values are NaN throughout.  Comparisons against NaN are false, so
a rule conditioned on ``x == 0`` never fires on missing data, and any
non-finite result is routed to the caller's forward-fill path.
"""

from __future__ import annotations

import math

from . import casetrack
from .mathkit import normal_cdf, shifted_gmean

NAN = math.nan

BENEISH_INTERCEPT = -4.84
BENEISH_WEIGHTS = {
    "dsri": 0.92, "gmi": 0.528, "aqi": 0.404, "sgi": 0.892,
    "depi": 0.115, "sgai": -0.172, "tata": 4.679, "lvgi": -0.327,
}

DISTRESS_INTERCEPT = -9.16
DISTRESS_WEIGHTS = {
    "nimtaavg": -20.26, "tlmta": 1.42, "exretavg": -7.13, "return_3mos_sd": 1.41,
    "rsize": -0.045, "cashmta": -2.13, "mb": 0.075, "price_log": -0.058,
}

PHI = 2.0 ** (-1.0 / 3.0)
PRICE_LOG_CAP = 15.0


def fdiv(num: float, den: float) -> float:
    """IEEE-style division: 0/0 is NaN, x/0 is signed infinity."""
    if math.isnan(num) or math.isnan(den):
        return NAN
    if den == 0.0:
        return NAN if num == 0.0 else math.copysign(math.inf, num)
    return num / den


def _nz(x: float) -> float:
    return 0.0 if x is None or math.isnan(x) else x


casetrack.declare(
    "dsri.rect_prev_zero", "dsri.sale_zero", "dsri.both_sales_zero",
    "dsri.both_rect_zero", "dsri.rect_and_sale_zero", "dsri.sale_and_rect_prev_zero",
    "dsri.sale_prev_and_rect_prev_zero", "dsri.sales_and_rect_prev_zero",
    "dsri.all_zero",
    "gmi.all_zero", "gmi.sales_zero_cogs_nonzero", "gmi.sales_zero_cogs_cur_only",
    "gmi.sales_zero_cogs_prev_only", "gmi.sale_cur_zero_cogs_cur_zero_prev_nonzero",
    "gmi.sale_cur_zero_cogs_both_zero", "gmi.sale_prev_zero_cogs_cur_zero",
    "gmi.sales_zero_cogs_cur_nonzero_prev_zero",
    "aqi.flat_ratios", "aqi.prev_ratio_zero", "aqi.prev_all_zero",
    "aqi.cur_all_zero", "aqi.both_all_zero",
    "sgi.both_zero", "sgi.prev_zero",
    "depi.all_zero", "depi.no_depreciation", "depi.amortization_only",
    "depi.cur_all_zero", "depi.prev_all_zero_cur_nonzero",
    "depi.prev_all_zero_dp_only", "depi.prev_all_zero_ppent_only",
    "depi.dp_equals_am",
    "sgai.sale_clamped", "sgai.both_xsga_zero", "sgai.prev_xsga_zero",
    "lvgi.prev_debt_zero", "lvgi.prev_debt_zero_at_zero",
    "roa.numerator_zero", "roa.negative_assets",
    "roc.ebit_zero", "roc.negative_capital",
    "gm.sale_zero",
    "gms.zero_over_zero",
    "lever.prev_zero_cur_nonzero",
    "current.lct_zero_act_nonzero", "current.both_zero",
    "mb.zero_over_zero", "mb.pstkrv_from_pstkl", "mb.pstkl_from_pstk",
    "mb.pstk_default_zero", "mb.seq_from_ceq_pstk", "mb.seq_from_at_lt",
    "mb.seq_default_zero",
    "tev.pstkrv_from_pstkl", "tev.pstkl_from_pstk", "tev.pstk_default_zero",
    "exret.prev_close_zero", "exret.missing_vwretd", "exret.cross_sectional_mean",
    "daily_ret.both_zero", "daily_ret.prev_zero", "daily_ret.cur_zero",
    "price_log.capped",
)


# ---------------------------------------------------------------------------
# accrual screens
# ---------------------------------------------------------------------------

def scaled_total_accruals(act_t, act_p, che_t, che_p, lct_t, lct_p,
                          dd1_t, dd1_p, txp_t, txp_p, dp_t, at_t) -> float:
    """sta: balance-sheet accruals over total assets."""
    ca = (act_t - act_p) - (che_t - che_p)
    cl = (lct_t - lct_p) - (dd1_t - dd1_p) - (txp_t - txp_p)
    return fdiv(ca - cl - dp_t, at_t)


def scaled_net_operating_assets(at_t, che_t, dlc_t, dltt_t, mib_t, pstk_t, ceq_t) -> float:
    """snoa: operating assets minus operating liabilities over total assets."""
    oa = at_t - che_t
    ol = at_t - dlc_t - dltt_t - mib_t - pstk_t - ceq_t
    return fdiv(oa - ol, at_t)


def total_accruals_to_assets(act_t, act_p, che_t, che_p, lct_t, lct_p,
                             dd1_t, dd1_p, txp_t, txp_p, dp_t, at_t) -> float:
    """tata, transcribed with every delta subtracted as documented."""
    num = ((act_t - act_p) - (che_t - che_p) - (lct_t - lct_p)
           - (dd1_t - dd1_p) - (txp_t - txp_p) - dp_t)
    return fdiv(num, at_t)


# ---------------------------------------------------------------------------
# Beneish indices
# ---------------------------------------------------------------------------

def dsri_index(rect_t, rect_p, sale_t, sale_p) -> float:
    v = fdiv(fdiv(rect_t, sale_t), fdiv(rect_p, sale_p))
    if rect_p == 0:
        v = fdiv(rect_t, sale_t)
        casetrack.hit("dsri.rect_prev_zero")
    if sale_t == 0:
        v = rect_t
        casetrack.hit("dsri.sale_zero")
    if sale_t == 0 and sale_p == 0:
        v = fdiv(rect_t, rect_p)
        casetrack.hit("dsri.both_sales_zero")
    if rect_t == 0 and rect_p == 0:
        v = 0.0
        casetrack.hit("dsri.both_rect_zero")
    if rect_t == 0 and sale_t == 0:
        v = 0.0
        casetrack.hit("dsri.rect_and_sale_zero")
    if sale_t == 0 and rect_p == 0:
        v = rect_t
        casetrack.hit("dsri.sale_and_rect_prev_zero")
    if sale_p == 0 and rect_p == 0:
        v = fdiv(rect_t, sale_t)
        casetrack.hit("dsri.sale_prev_and_rect_prev_zero")
    if sale_t == 0 and sale_p == 0 and rect_p == 0:
        v = rect_t
        casetrack.hit("dsri.sales_and_rect_prev_zero")
    if sale_t == 0 and sale_p == 0 and rect_t == 0 and rect_p == 0:
        v = 1.0
        casetrack.hit("dsri.all_zero")
    return v


def gmi_index(sale_t, sale_p, cogs_t, cogs_p) -> float:
    v = fdiv(fdiv(sale_t - cogs_t, sale_t), fdiv(sale_p - cogs_p, sale_p))
    if sale_t == 0 and sale_p == 0 and cogs_t == 0 and cogs_p == 0:
        v = 1.0
        casetrack.hit("gmi.all_zero")
    if sale_t == 0 and sale_p == 0 and cogs_t != 0 and cogs_p != 0:
        v = 1.0
        casetrack.hit("gmi.sales_zero_cogs_nonzero")
    if sale_t == 0 and sale_p == 0 and cogs_t != 0 and cogs_p == 0:
        v = 1.0
        casetrack.hit("gmi.sales_zero_cogs_cur_only")
    if sale_t == 0 and sale_p == 0 and cogs_t == 0 and cogs_p != 0:
        v = 1.0
        casetrack.hit("gmi.sales_zero_cogs_prev_only")
    if sale_t == 0 and sale_p != 0 and cogs_t == 0 and cogs_p != 0:
        v = 0.0
        casetrack.hit("gmi.sale_cur_zero_cogs_cur_zero_prev_nonzero")
    if sale_t == 0 and sale_p != 0 and cogs_t == 0 and cogs_p == 0:
        v = 0.0
        casetrack.hit("gmi.sale_cur_zero_cogs_both_zero")
    if sale_t != 0 and sale_p == 0 and cogs_t == 0 and cogs_p != 0:
        v = sale_t + 1.0
        casetrack.hit("gmi.sale_prev_zero_cogs_cur_zero")
    if sale_t == 0 and sale_p == 0 and cogs_t != 0 and cogs_p == 0:
        # documented as ((sale - cogs) / sale) + 1, undefined at sale == 0:
        # routes to the missing path
        v = fdiv(sale_t - cogs_t, sale_t) + 1.0
        casetrack.hit("gmi.sales_zero_cogs_cur_nonzero_prev_zero")
    return v


def aqi_index(act_t, act_p, ppent_t, ppent_p, at_t, at_p) -> float:
    ratio_t = fdiv(act_t + ppent_t, at_t)
    ratio_p = fdiv(act_p + ppent_p, at_p)
    v = fdiv(1.0 - ratio_t, 1.0 - ratio_p)
    if not math.isfinite(v) and 1.0 - ratio_p == 0 and 1.0 - ratio_t == 0:
        v = 1.0
        casetrack.hit("aqi.flat_ratios")
    if not math.isfinite(v) and ratio_p == 0:
        v = 1.0 - ratio_t
        casetrack.hit("aqi.prev_ratio_zero")
    if act_p == 0 and ppent_p == 0 and at_p == 0:
        v = 1.0 - ratio_t
        casetrack.hit("aqi.prev_all_zero")
    if act_t == 0 and ppent_t == 0 and at_t == 0:
        v = 1.0
        casetrack.hit("aqi.cur_all_zero")
    if (act_t == 0 and ppent_t == 0 and at_t == 0
            and act_p == 0 and ppent_p == 0 and at_p == 0):
        v = 1.0
        casetrack.hit("aqi.both_all_zero")
    return v


def sgi_index(sale_t, sale_p) -> float:
    v = fdiv(sale_t, sale_p)
    if sale_t == 0 and sale_p == 0:
        v = 1.0
        casetrack.hit("sgi.both_zero")
    if sale_t != 0 and sale_p == 0:
        v = sale_t + 1.0
        casetrack.hit("sgi.prev_zero")
    return v


def depi_index(dp_t, dp_p, am_t, am_p, ppent_t, ppent_p) -> float:
    ratio_p = fdiv(dp_p - am_p, dp_p - am_p + ppent_p)
    ratio_t = fdiv(dp_t - am_t, dp_t - am_t + ppent_t)
    v = fdiv(ratio_p, ratio_t)
    if dp_p == 0 and am_p == 0 and ppent_p == 0 and dp_t == 0 and am_t == 0 and ppent_t == 0:
        v = 1.0
        casetrack.hit("depi.all_zero")
    if dp_p == 0 and am_p == 0 and ppent_p != 0 and dp_t == 0 and am_t == 0 and ppent_t != 0:
        v = 1.0
        casetrack.hit("depi.no_depreciation")
    if dp_p == 0 and am_p == 0 and ppent_p == 0 and dp_t == 0 and am_t != 0 and ppent_t == 0:
        v = 2.0
        casetrack.hit("depi.amortization_only")
    if dp_p != 0 and am_p != 0 and ppent_p != 0 and dp_t == 0 and am_t == 0 and ppent_t == 0:
        v = ratio_p + 1.0
        casetrack.hit("depi.cur_all_zero")
    if dp_p == 0 and am_p == 0 and ppent_p == 0 and dp_t != 0 and am_t != 0 and ppent_t != 0:
        v = 0.0
        casetrack.hit("depi.prev_all_zero_cur_nonzero")
    if dp_p == 0 and am_p == 0 and ppent_p == 0 and dp_t != 0 and am_t == 0 and ppent_t != 0:
        v = 0.0
        casetrack.hit("depi.prev_all_zero_dp_only")
    if dp_p == 0 and am_p == 0 and ppent_p == 0 and dp_t == 0 and am_t == 0 and ppent_t != 0:
        v = 0.0
        casetrack.hit("depi.prev_all_zero_ppent_only")
    if not math.isfinite(v) and dp_t == am_t:
        v = ratio_p + 1.0
        casetrack.hit("depi.dp_equals_am")
    return v


def sgai_index(xsga_t, xsga_p, sale_t, sale_p) -> float:
    sale_for_sgai = sale_t
    if sale_t < 1:
        sale_for_sgai = 1.0
        casetrack.hit("sgai.sale_clamped")
    v = fdiv(fdiv(xsga_t, sale_for_sgai), fdiv(xsga_p, sale_p))
    if xsga_t == 0 and xsga_p == 0:
        v = 0.0
        casetrack.hit("sgai.both_xsga_zero")
    elif xsga_p == 0:
        v = fdiv(xsga_t, sale_for_sgai)
        casetrack.hit("sgai.prev_xsga_zero")
    return v


def lvgi_index(dltt_t, dltt_p, lct_t, lct_p, at_t, at_p) -> float:
    v = fdiv(fdiv(dltt_t + lct_t, at_t), fdiv(dltt_p + lct_p, at_p))
    if dltt_p == 0 and lct_p == 0:
        v = fdiv(dltt_t + lct_t, at_t) + 1.0
        casetrack.hit("lvgi.prev_debt_zero")
    if dltt_p == 0 and lct_p == 0 and at_t == 0:
        v = dltt_t + lct_t + 1.0
        casetrack.hit("lvgi.prev_debt_zero_at_zero")
    return v


def manipulation_score(dsri, gmi, aqi, sgi, depi, sgai, lvgi, tata) -> float:
    """Beneish linear combination; the probability is its normal CDF."""
    w = BENEISH_WEIGHTS
    return (BENEISH_INTERCEPT + w["dsri"] * dsri + w["gmi"] * gmi + w["aqi"] * aqi
            + w["sgi"] * sgi + w["depi"] * depi + w["sgai"] * sgai
            + w["tata"] * tata + w["lvgi"] * lvgi)


def manipulation_probability(score: float) -> float:
    return normal_cdf(score)


# ---------------------------------------------------------------------------
# distress inputs
# ---------------------------------------------------------------------------

def nimta(niq, market_equity, ltq) -> float:
    return fdiv(niq, market_equity + ltq)


def tlmta(ltq, market_equity) -> float:
    return fdiv(ltq, market_equity + ltq)


def cashmta(cheq, market_equity, ltq) -> float:
    return fdiv(cheq, market_equity + ltq)


def nimta_weighted_average(lags: list) -> float:
    """Quarterly-lag average with geometric decay, lags = [t, t-3, t-6, t-9]."""
    if len(lags) != 4 or any(not math.isfinite(v) for v in lags):
        return NAN
    prefactor = (1.0 - PHI**3) / (1.0 - PHI**12)
    return prefactor * sum(PHI ** (3 * j) * lags[j] for j in range(4))


def exret_weighted_average(lags: list) -> float:
    """Monthly-lag average, lags = [t, t-1, ..., t-11], transcribed prefactor."""
    if len(lags) != 12 or any(not math.isfinite(v) for v in lags):
        return NAN
    prefactor = (1.0 - PHI**11) / (1.0 - PHI**12)
    return prefactor * sum(PHI**j * lags[j] for j in range(12))


def monthly_gross_return(adj_close_t, adj_close_p, div_t) -> float:
    """(price + dividend) / prior price; a zero prior price maps to the price."""
    if adj_close_p == 0:
        casetrack.hit("exret.prev_close_zero")
        return adj_close_t
    return fdiv(adj_close_t + div_t, adj_close_p)


def index_compound_return(vwretd_window: list) -> float:
    """Compounded index return over the trailing window; missing months count zero."""
    prod = 1.0
    for v in vwretd_window:
        if v is None or math.isnan(v):
            casetrack.hit("exret.missing_vwretd")
            v = 0.0
        prod *= 1.0 + v
    return prod - 1.0


def log_excess_return(gross_return, index_return) -> float:
    """ln(1.01 + r) - ln(1.01 + r_index); the 1.01 shift keeps logs defined."""
    a = 1.01 + gross_return
    b = 1.01 + index_return
    if a <= 0 or b <= 0 or math.isnan(a) or math.isnan(b):
        return NAN
    return math.log(a) - math.log(b)


def daily_total_return(adj_close_t, adj_close_p, div_t) -> float:
    """Daily return with the zero/missing price rules for the volatility window."""
    cur_zero = adj_close_t is None or math.isnan(adj_close_t) or adj_close_t == 0
    prev_zero = adj_close_p is None or math.isnan(adj_close_p) or adj_close_p == 0
    if cur_zero and prev_zero:
        casetrack.hit("daily_ret.both_zero")
        return 0.0
    if not cur_zero and prev_zero:
        casetrack.hit("daily_ret.prev_zero")
        return adj_close_t + div_t
    if cur_zero and not prev_zero:
        casetrack.hit("daily_ret.cur_zero")
        return -1.0
    return (adj_close_t + div_t) / adj_close_p - 1.0


# alias used by tests exercising the degenerate branches directly
_daily_return_cases = daily_total_return


def relative_size(market_equity, usdval) -> float:
    return math.log1p(fdiv(market_equity, usdval)) if usdval and market_equity >= 0 else NAN


def book_value(txdb, itcb, prca, pstkrv, pstkl, pstk, seq, ceq, at, lt) -> float:
    """CHS book value with the documented fallback chains."""
    if math.isnan(txdb):
        txdb = 0.0
    if math.isnan(itcb):
        itcb = 0.0
    if math.isnan(prca):
        prca = 0.0
    if math.isnan(pstkrv):
        if not math.isnan(pstkl):
            pstkrv = pstkl
            casetrack.hit("mb.pstkrv_from_pstkl")
        elif not math.isnan(pstk):
            pstkrv = pstk
            casetrack.hit("mb.pstkl_from_pstk")
        else:
            pstkrv = 0.0
            casetrack.hit("mb.pstk_default_zero")
    if math.isnan(seq):
        if not math.isnan(ceq) and not math.isnan(pstk):
            seq = ceq + pstk
            casetrack.hit("mb.seq_from_ceq_pstk")
        elif not math.isnan(at) and not math.isnan(lt):
            seq = at - lt
            casetrack.hit("mb.seq_from_at_lt")
        else:
            seq = 0.0
            casetrack.hit("mb.seq_default_zero")
    return txdb + itcb + prca - pstkrv + seq


def market_to_book(market_equity, bv) -> float:
    bv_adj = (market_equity - bv) * 0.1 + bv
    if market_equity == 0 and bv_adj == 0:
        casetrack.hit("mb.zero_over_zero")
        return 0.0
    return fdiv(market_equity, bv_adj)


def truncated_log_price(adj_close) -> float:
    if adj_close > PRICE_LOG_CAP:
        casetrack.hit("price_log.capped")
        return math.log(PRICE_LOG_CAP)
    if adj_close <= 0 or math.isnan(adj_close):
        return NAN
    return math.log(adj_close)


def distress_score(nimtaavg, tlmta_v, exretavg, return_3mos_sd, rsize, cashmta_v,
                   mb, price_log) -> float:
    w = DISTRESS_WEIGHTS
    return (DISTRESS_INTERCEPT + w["nimtaavg"] * nimtaavg + w["tlmta"] * tlmta_v
            + w["exretavg"] * exretavg + w["return_3mos_sd"] * return_3mos_sd
            + w["rsize"] * rsize + w["cashmta"] * cashmta_v + w["mb"] * mb
            + w["price_log"] * price_log)


def distress_probability(score: float) -> float:
    if math.isnan(score):
        return NAN
    return 1.0 / (1.0 + math.exp(-score))


# ---------------------------------------------------------------------------
# cheapness
# ---------------------------------------------------------------------------

def preferred_stock_value(pstkrv, pstkl, pstk) -> float:
    if not math.isnan(pstkrv):
        return pstkrv
    if not math.isnan(pstkl):
        casetrack.hit("tev.pstkrv_from_pstkl")
        return pstkl
    if not math.isnan(pstk):
        casetrack.hit("tev.pstkl_from_pstk")
        return pstk
    casetrack.hit("tev.pstk_default_zero")
    return 0.0


def total_enterprise_value(market_equity, dltt, dlc, ch, act, lct, pstkrv, pstkl,
                           pstk, mib) -> float:
    """Market cap plus debt, less excess cash, plus preferred and minority."""
    pref = preferred_stock_value(pstkrv, pstkl, pstk)
    return market_equity + (dltt + dlc) - (ch + act - lct) + pref + mib


def earnings_yield(ebit, tev) -> float:
    if not math.isfinite(tev) or tev <= 0:
        return NAN
    return fdiv(ebit, tev)


# ---------------------------------------------------------------------------
# franchise power (per statement year)
# ---------------------------------------------------------------------------

def return_on_assets(ibcom, niadj, ni, at) -> float:
    num = ibcom
    if math.isnan(num):
        num = niadj
    if math.isnan(num):
        num = ni
    v = fdiv(num, at)
    if num == 0:
        v = 0.0
        casetrack.hit("roa.numerator_zero")
    if at < 0:
        v = 0.0
        casetrack.hit("roa.negative_assets")
    return v


def return_on_capital(ebit, ppent, act, lct, ch) -> float:
    capital = ppent + act - lct - ch
    v = fdiv(ebit, capital)
    if ebit == 0:
        v = 0.0
        casetrack.hit("roc.ebit_zero")
    if capital < 0:
        v = 0.0
        casetrack.hit("roc.negative_capital")
    return v


def gross_margin(sale, cogs) -> float:
    if sale == 0:
        casetrack.hit("gm.sale_zero")
        return 0.0
    return fdiv(sale - cogs, sale)


def margin_stability(gm_window: list) -> float:
    """Mean over standard deviation of the 8 gross margins."""
    if any(not math.isfinite(g) for g in gm_window):
        return NAN
    n = len(gm_window)
    avg = math.fsum(gm_window) / n
    if all(g == gm_window[0] for g in gm_window):
        sd = 0.0   # keep exactly-constant windows off the float-noise path
        avg = gm_window[0]
    else:
        var = math.fsum((g - avg) ** 2 for g in gm_window) / (n - 1) if n > 1 else 0.0
        sd = math.sqrt(var)
    if avg == 0 and sd == 0:
        casetrack.hit("gms.zero_over_zero")
        return 0.0
    return fdiv(avg, sd)


def working_capital_change(act_t, lct_t, act_p, lct_p) -> float:
    return (act_t - lct_t) - (act_p - lct_p)


def free_cash_flow(ni, dp, wcapch, capx) -> float:
    return ni + dp - wcapch - capx


def eight_year_gmean(window: list) -> float:
    """Shifted geometric mean over the statement window; NaN when incomplete."""
    if len(window) != 8 or any(not math.isfinite(v) for v in window):
        return NAN
    return shifted_gmean(window)


# ---------------------------------------------------------------------------
# financial strength (per statement year)
# ---------------------------------------------------------------------------

def indicator(x: float) -> float:
    return 1.0 if x > 0 else 0.0


def leverage_change(dltt_t, at_t, dltt_p, at_p) -> float:
    v = fdiv(dltt_p, at_p) - fdiv(dltt_t, at_t)
    if dltt_p == 0 and at_p == 0 and dltt_t != 0 and at_t != 0:
        v = 0.0 - fdiv(dltt_t, at_t)
        casetrack.hit("lever.prev_zero_cur_nonzero")
    return v


def current_ratio(act, lct) -> float:
    if lct == 0 and act != 0:
        casetrack.hit("current.lct_zero_act_nonzero")
        return act + 1.0
    if lct == 0 and act == 0:
        casetrack.hit("current.both_zero")
        return 1.0
    return fdiv(act, lct)


def net_equity_issuance(shrout_t, shrout_p, prc_t, prc_p, cfacpr_t, cfacpr_p) -> float:
    """Share-count change valued at the average adjusted price."""
    avg_price = (fdiv(prc_t, cfacpr_t) + fdiv(prc_p, cfacpr_p)) / 2.0
    return (shrout_t - shrout_p) * avg_price


def financial_strength(indicators: list) -> float:
    """Mean of the ten binary strength indicators."""
    if len(indicators) != 10:
        raise ValueError("financial strength needs exactly 10 indicators")
    return sum(indicators) / 10.0


def quality_score(fran_power, fin_strength) -> float:
    return fran_power / 2.0 + fin_strength / 2.0
