"""Hand-built CSV fixture helpers shared across the test suite."""

import calendar
import csv
from datetime import date

import pytest

from quantseed.schemas import (
    ANNUAL_COLUMNS,
    PRICES_DAILY_COLUMNS,
    PRICES_MONTHLY_COLUMNS,
    QUARTERLY_COLUMNS,
    REFERENCE_COLUMNS,
)

ANNUAL_DEFAULTS = dict(
    at=100.0, act=40.0, lct=20.0, che=10.0, dd1=2.0, txp=3.0, dltt=15.0, dlc=5.0,
    lt=50.0, mib=0.0, pstk=0.0, pstkrv=0.0, pstkl=0.0, ceq=50.0, seq=50.0,
    sale=80.0, cogs=48.0, rect=12.0, ppent=30.0, dp=4.0, am=1.0, xsga=10.0,
    ni=6.0, niadj=6.0, ibcom=6.0, ebit=9.0, capx=5.0, re=20.0, ch=8.0,
    txdb=1.0, itcb=0.0, prca=0.0, dvt=1.0, epsfi=1.2, bkvlps=10.0, xrd=0.0,
)


def month_end(year, month):
    return date(year, month, calendar.monthrange(year, month)[1])


def month_ends(start_year, start_month, count):
    out = []
    y, m = start_year, start_month
    for _ in range(count):
        out.append(month_end(y, m))
        m += 1
        if m == 13:
            y, m = y + 1, 1
    return out


def annual_row(sid, period_end, entity=None, publish=None, gics="2010", **items):
    row = {
        "security_id": sid,
        "entity_id": entity if entity is not None else f"E{sid}",
        "period_end": period_end.isoformat(),
        "publish_date": (publish or date(period_end.year + 1, 3, 1)).isoformat(),
        "gics": gics,
    }
    merged = dict(ANNUAL_DEFAULTS)
    merged.update(items)
    for k, v in merged.items():
        row[k] = "" if v is None else repr(float(v))
    return row


def quarterly_row(sid, period_end, entity=None, publish=None, gics="2010",
                  niq=1.5, ltq=50.0, cheq=10.0):
    row = {
        "security_id": sid,
        "entity_id": entity if entity is not None else f"E{sid}",
        "period_end": period_end.isoformat(),
        "publish_date": (publish or period_end).isoformat(),
        "gics": gics,
    }
    for k, v in (("niq", niq), ("ltq", ltq), ("cheq", cheq)):
        row[k] = "" if v is None else repr(float(v))
    return row


def monthly_row(sid, d, close=20.0, bid=None, ask=None, dividend=0.0,
                cfacpr=1.0, cfacshr=1.0, shrout=10000.0, dlprc=None, dlamt=None):
    vals = dict(close=close, bid=bid, ask=ask, dividend=dividend, cfacpr=cfacpr,
                cfacshr=cfacshr, shrout=shrout, dlprc=dlprc, dlamt=dlamt)
    row = {"security_id": sid, "date": d.isoformat()}
    for k, v in vals.items():
        row[k] = "" if v is None else repr(float(v))
    return row


def daily_row(sid, d, close=20.0, dividend=0.0, cfacpr=1.0):
    row = {"security_id": sid, "date": d.isoformat()}
    for k, v in (("close", close), ("dividend", dividend), ("cfacpr", cfacpr)):
        row[k] = "" if v is None else repr(float(v))
    return row


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_reference(dirpath, months, vwretd=0.01, usdval=5_000_000.0, breakpoint_me=100.0,
                    cpi_start=100.0, tsy=0.04, mkt_rf=0.005, smb=0.0, hml=0.0, mom=0.0,
                    rf=0.002):
    """Write all five reference CSVs over the given month-end dates."""
    paths = {}
    sp_rows, bp_rows, cpi_rows, tsy_rows, factor_rows = [], [], [], [], []
    for i, d in enumerate(months):
        iso = d.isoformat()
        vw = vwretd(i) if callable(vwretd) else vwretd
        sp_rows.append({"date": iso, "vwretd": repr(float(vw)), "usdval": repr(float(usdval))})
        bp = breakpoint_me(i) if callable(breakpoint_me) else breakpoint_me
        bp_rows.append({"date": iso, "me_breakpoint": "" if bp is None else repr(float(bp))})
        cpi_rows.append({"date": iso, "cpiind": repr(cpi_start * (1.0 + 0.002) ** i)})
        tsy_rows.append({"date": iso, "tsy_10y_yield": repr(float(tsy))})
        factor_rows.append(
            {
                "date": iso,
                "mkt_rf": repr(mkt_rf(i) if callable(mkt_rf) else float(mkt_rf)),
                "smb": repr(float(smb)),
                "hml": repr(float(hml)),
                "mom": repr(float(mom)),
                "rf": repr(float(rf)),
            }
        )
    paths["sp500"] = write_csv(dirpath / "reference_sp500.csv", REFERENCE_COLUMNS["sp500"], sp_rows)
    paths["breakpoints"] = write_csv(
        dirpath / "reference_breakpoints.csv", REFERENCE_COLUMNS["breakpoints"], bp_rows
    )
    paths["cpi"] = write_csv(dirpath / "reference_cpi.csv", REFERENCE_COLUMNS["cpi"], cpi_rows)
    paths["treasury"] = write_csv(
        dirpath / "reference_treasury.csv", REFERENCE_COLUMNS["treasury"], tsy_rows
    )
    paths["factors"] = write_csv(
        dirpath / "reference_factors.csv", REFERENCE_COLUMNS["factors"], factor_rows
    )
    return paths


class FixtureBuilder:
    """Accumulates rows for every input file and writes them on demand."""

    def __init__(self, root):
        self.root = root
        self.annual = []
        self.quarterly = []
        self.monthly = []
        self.daily = []
        self.reference_months = []
        self.reference_kwargs = {}

    def add_company_years(self, sid, first_year, n_years, **item_overrides):
        """n_years of annual statements ending 12/31 plus quarterlies."""
        for k in range(n_years):
            year = first_year + k
            overrides = {
                key: (val(k) if callable(val) else val) for key, val in item_overrides.items()
            }
            self.annual.append(annual_row(sid, date(year, 12, 31), **overrides))
            for q in (3, 6, 9, 12):
                self.quarterly.append(quarterly_row(sid, month_end(year, q)))
        return self

    def add_monthly_prices(self, sid, months, close=20.0, **kw):
        for i, d in enumerate(months):
            c = close(i) if callable(close) else close
            self.monthly.append(monthly_row(sid, d, close=c, **kw))
        return self

    def set_reference(self, months, **kw):
        self.reference_months = months
        self.reference_kwargs = kw
        return self

    def write(self):
        paths = {
            "statements_annual": write_csv(
                self.root / "statements_annual.csv", ANNUAL_COLUMNS, self.annual
            ),
            "statements_quarterly": write_csv(
                self.root / "statements_quarterly.csv", QUARTERLY_COLUMNS, self.quarterly
            ),
            "prices_monthly": write_csv(
                self.root / "prices_monthly.csv", PRICES_MONTHLY_COLUMNS, self.monthly
            ),
            "prices_daily": write_csv(
                self.root / "prices_daily.csv", PRICES_DAILY_COLUMNS, self.daily
            ),
        }
        months = self.reference_months or month_ends(1990, 1, 12)
        paths["reference"] = write_reference(self.root, months, **self.reference_kwargs)
        return paths


@pytest.fixture
def builder(tmp_path):
    return FixtureBuilder(tmp_path)
