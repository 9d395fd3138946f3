"""Quantified Buffett & Clark checklist variables.

Eighteen predictors: eight-year trend ratios (conservative financing,
return on equity, retained-earnings usage, inflation pricing power and
share repurchases) plus price projections that compound earnings and book
value ten years forward and compare against a 20% hurdle and the 10-year
treasury yield.  Sign compositions in the projection formulas are
transcribed as documented, including the zero products they produce when
the dividend fraction is zero.
"""

from __future__ import annotations

import math

from . import casetrack
from .features_qv import NAN, fdiv

PROJECTION_YEARS = 10

casetrack.declare(
    "fin_con1.niadj_missing", "fin_con1.niadj_zero",
    "fin_con2.seq_missing", "fin_con2.seq_ceq_missing", "fin_con2.all_missing",
    "fin_con3.small_liabilities", "fin_con3.both_zero",
    "roe.niadj_missing", "roe.seq_missing", "roe.seq_ceq_missing",
    "re_use.niadj_missing", "re_use.niadj_zero", "re_use.ni_zero", "re_use.all_zero",
    "re_maintain.capx_exceeds_re", "re_maintain.capx_nonzero_re_nonpositive",
    "re_maintain.capx_zero_re_nonpositive",
    "re_perc.missing_zero",
    "dvt_perc.above_one", "dvt_perc.above_one_niadj_zero", "dvt_perc.zero_niadj_zero",
    "neqiss_bf.missing_price",
    "rev_inf.prev_sale_zero", "rev_inf.both_sales_zero",
    "price_cagr.negative_projection",
    "dvt_fv.nonpositive_book", "tot_cagr.nonpositive_future_price",
    "bkvtps_fv.collapsed_growth",
    "price_roe_ms.zero_pv", "price_roe_ms.nonpositive", "price_roe_ms.infinite",
    "price_tsy.zero_implied",
)


def _sign(x: float) -> float:
    if math.isnan(x):
        return NAN
    return math.copysign(1.0, x) if x != 0 else 0.0


# ---------------------------------------------------------------------------
# per-statement-year trend ratios
# ---------------------------------------------------------------------------

def conservative_financing_1(dltt, niadj, ni) -> float:
    """Long-term debt over adjusted net income."""
    v = fdiv(dltt, niadj)
    if math.isnan(niadj):
        v = fdiv(dltt, ni)
        casetrack.hit("fin_con1.niadj_missing")
    if niadj == 0:
        v = dltt
        casetrack.hit("fin_con1.niadj_zero")
    return v


def conservative_financing_2(dltt, seq, ceq, pstk, at, lt) -> float:
    """Long-term debt over shareholder equity with the fallback chain."""
    v = fdiv(dltt, seq)
    if math.isnan(seq):
        v = fdiv(dltt, ceq + pstk)
        casetrack.hit("fin_con2.seq_missing")
    if math.isnan(seq) and (math.isnan(ceq) or math.isnan(pstk)):
        v = fdiv(dltt, at - lt)
        casetrack.hit("fin_con2.seq_ceq_missing")
    if (math.isnan(seq) and (math.isnan(ceq) or math.isnan(pstk))
            and (math.isnan(at) or math.isnan(lt))):
        v = 0.0
        casetrack.hit("fin_con2.all_missing")
    return v


def conservative_financing_3(act, lt) -> float:
    """Current assets over total liabilities."""
    v = fdiv(act, lt)
    if act > lt and lt < 1:
        v = act
        casetrack.hit("fin_con3.small_liabilities")
    if act == 0 and lt == 0:
        v = 1.0
        casetrack.hit("fin_con3.both_zero")
    return v


def return_on_equity(niadj, ni, seq, ceq, pstk, at, lt) -> float:
    v = fdiv(niadj, seq)
    if math.isnan(niadj):
        v = fdiv(ni, seq)
        casetrack.hit("roe.niadj_missing")
    if math.isnan(seq):
        v = fdiv(niadj, ceq + pstk)
        casetrack.hit("roe.seq_missing")
    if math.isnan(seq) and (math.isnan(ceq) or math.isnan(pstk)):
        v = fdiv(niadj, at - lt)
        casetrack.hit("roe.seq_ceq_missing")
    return v


def retained_earnings_use(re, niadj, ni) -> float:
    v = fdiv(re, niadj)
    if math.isnan(niadj):
        v = fdiv(re, ni)
        casetrack.hit("re_use.niadj_missing")
    if niadj == 0:
        v = re
        casetrack.hit("re_use.niadj_zero")
    if math.isnan(niadj) and ni == 0:
        v = re
        casetrack.hit("re_use.ni_zero")
    if re == 0 and niadj == 0 and ni == 0:
        v = 0.0
        casetrack.hit("re_use.all_zero")
    return v


def retained_earnings_maintenance(capx, re) -> float:
    v = 1.0 - fdiv(capx, re)
    if capx > re:
        v = abs(v) * -1.0
        casetrack.hit("re_maintain.capx_exceeds_re")
    if capx != 0 and re <= 0:
        v = abs(capx) * -1.0
        casetrack.hit("re_maintain.capx_nonzero_re_nonpositive")
    if capx == 0 and re <= 0:
        v = 1.0
        casetrack.hit("re_maintain.capx_zero_re_nonpositive")
    return v


def retained_percentage(dvt, niadj, roe) -> float:
    """Fraction of return on equity retained; missing collapses to zero."""
    v = (1.0 - fdiv(dvt, niadj)) * roe
    if not math.isfinite(v):
        v = 0.0
        casetrack.hit("re_perc.missing_zero")
    return v


def dividend_percentage(dvt, niadj, roe) -> float:
    base = fdiv(dvt, niadj) - roe
    v = base
    if base > 1:
        v = 1.0
        casetrack.hit("dvt_perc.above_one")
    if base > 1 and niadj == 0:
        v = 1.0
        casetrack.hit("dvt_perc.above_one_niadj_zero")
    if dvt == 0 and niadj == 0:
        v = 0.0
        casetrack.hit("dvt_perc.zero_niadj_zero")
    return v


def share_adjusted_issuance(shrout_t, shrout_p, cfacshr_t, cfacshr_p,
                            prc_t, prc_p, cfacpr_t, cfacpr_p) -> float:
    """Split-adjusted share-count change valued at the average adjusted price."""
    if math.isnan(prc_t):
        prc_t = 0.0
        casetrack.hit("neqiss_bf.missing_price")
    if math.isnan(prc_p):
        prc_p = 0.0
        casetrack.hit("neqiss_bf.missing_price")
    avg_price = (fdiv(prc_t, cfacpr_t) + fdiv(prc_p, cfacpr_p)) / 2.0
    return (shrout_t * cfacshr_t - shrout_p * cfacshr_p) * avg_price


def inflation_adjusted_growth(sale_t, sale_p, cpi_t, cpi_lag12) -> float:
    """Revenue growth less the year-over-year CPI change."""
    cpi_yoy = fdiv(cpi_t, cpi_lag12) - 1.0
    v = (fdiv(sale_t, sale_p) - 1.0) - cpi_yoy
    if sale_p == 0:
        v = 0.0
        casetrack.hit("rev_inf.prev_sale_zero")
    if sale_t == 0 and sale_p == 0:
        v = 0.0
        casetrack.hit("rev_inf.both_sales_zero")
    return v


def retained_earnings_return(re_window: list) -> float:
    """Recent-three minus oldest-three mean, scaled by the eight-year sum.

    ``re_window`` is oldest first.
    """
    if len(re_window) != 8 or any(not math.isfinite(v) for v in re_window):
        return NAN
    recent = sum(re_window[5:]) / 3.0
    oldest = sum(re_window[:3]) / 3.0
    total = sum(re_window)
    if total == 0:
        return NAN
    return (recent - oldest) / total


# ---------------------------------------------------------------------------
# price projections
# ---------------------------------------------------------------------------

def eps_projection(epsfi, epsfi_8_cagr) -> float:
    """Sign-preserving ten-year compounding of earnings per share."""
    return (_sign(1.0 + epsfi_8_cagr) * _sign(epsfi)
            * abs(epsfi * (1.0 + epsfi_8_cagr) ** PROJECTION_YEARS))


def eps_implied_cagr(epsfi, epsfi_8_cagr, adj_close) -> float:
    """Annualized return implied by buying projected earnings at today's price."""
    epsfi_fv = eps_projection(epsfi, epsfi_8_cagr)
    price_eps_future = (epsfi_fv - epsfi) * _sign(epsfi) + epsfi
    if math.isnan(price_eps_future) or math.isnan(adj_close):
        return NAN
    if price_eps_future < 0:
        casetrack.hit("price_cagr.negative_projection")
        return -1.0
    v = fdiv(price_eps_future, adj_close)
    if not math.isfinite(v) or v < 0:
        return NAN
    return v ** (1.0 / PROJECTION_YEARS) - 1.0


def book_value_projection(bkvtps, re_perc_8_gmean, dvt_perc_8_gmean) -> float:
    growth = _sign(1.0 + re_perc_8_gmean) * _sign(bkvtps * dvt_perc_8_gmean)
    if re_perc_8_gmean < -1:
        casetrack.hit("bkvtps_fv.collapsed_growth")
        return growth * abs(bkvtps * dvt_perc_8_gmean)
    return growth * abs(bkvtps * dvt_perc_8_gmean * (1.0 + re_perc_8_gmean) ** PROJECTION_YEARS)


def roe_implied_cagr(bkvtps, roe_8_gmean, re_perc_8_gmean, dvt_perc_8_gmean,
                     pe_window: list, adj_close) -> float:
    """Total-return CAGR from projected book value, minimum P/E and dividends."""
    bkvtps_fv = book_value_projection(bkvtps, re_perc_8_gmean, dvt_perc_8_gmean)
    eps_fv = roe_8_gmean * (
        (_sign(1.0 + re_perc_8_gmean) * _sign(bkvtps * dvt_perc_8_gmean)
         * abs(bkvtps * (1.0 + re_perc_8_gmean) ** PROJECTION_YEARS))
        * _sign(bkvtps * dvt_perc_8_gmean) + bkvtps
    )
    finite_pe = [p for p in pe_window if math.isfinite(p)]
    if not finite_pe:
        return NAN
    adj_close_fv = eps_fv * min(finite_pe)
    dvt_fv = PROJECTION_YEARS * ((bkvtps_fv - bkvtps) * _sign(bkvtps * dvt_perc_8_gmean) + bkvtps)
    if bkvtps <= 0:
        dvt_fv = 0.0
        casetrack.hit("dvt_fv.nonpositive_book")
    if math.isnan(adj_close_fv):
        return NAN
    if adj_close_fv <= 0:
        casetrack.hit("tot_cagr.nonpositive_future_price")
        return -1.0
    v = fdiv(adj_close_fv + dvt_fv, adj_close)
    if not math.isfinite(v) or v < 0:
        return NAN
    return v ** (1.0 / PROJECTION_YEARS) - 1.0


def hurdle_present_value(bkvtps_fv, hurdle_rate: float = 0.20) -> float:
    """Projected book value discounted at the target growth rate."""
    return bkvtps_fv / (1.0 + hurdle_rate) ** PROJECTION_YEARS


def hurdle_margin_of_safety(adj_close, price_roe_pv) -> float:
    if price_roe_pv == 0:
        casetrack.hit("price_roe_ms.zero_pv")
        return adj_close + 1.0
    v = fdiv(adj_close, price_roe_pv)
    if v <= 0:
        casetrack.hit("price_roe_ms.nonpositive")
        v = (0.01 + adj_close + abs(price_roe_pv)) / 0.01
    if math.isinf(v):
        casetrack.hit("price_roe_ms.infinite")
        v = 0.0
    return v


def treasury_implied_value(epsfi, tsy_yield) -> float:
    if math.isnan(tsy_yield) or tsy_yield == 0:
        return NAN
    return fdiv(epsfi, tsy_yield)


def treasury_margin_of_safety(adj_close, price_tsy_implied) -> float:
    if price_tsy_implied == 0:
        casetrack.hit("price_tsy.zero_implied")
        return adj_close + 1.0
    return fdiv(adj_close, price_tsy_implied)
