"""Input CSV schemas and strict row-level parsing.

Every input file has a fixed header; unknown or missing columns reject the
file, and a malformed value rejects the file with its row number.  Values
are in USD millions unless noted (share counts in thousands, per-share
figures in dollars).
"""

from __future__ import annotations

import csv
from datetime import date, datetime

STATEMENT_ITEMS = (
    "at", "act", "lct", "che", "dd1", "txp", "dltt", "dlc", "lt", "mib",
    "pstk", "pstkrv", "pstkl", "ceq", "seq", "sale", "cogs", "rect", "ppent",
    "dp", "am", "xsga", "ni", "niadj", "ibcom", "ebit", "capx", "re", "ch",
    "txdb", "itcb", "prca", "dvt", "epsfi", "bkvlps", "xrd",
)

QUARTERLY_ITEMS = ("niq", "ltq", "cheq")

ANNUAL_COLUMNS = ("security_id", "entity_id", "period_end", "publish_date", "gics") + STATEMENT_ITEMS
QUARTERLY_COLUMNS = (
    ("security_id", "entity_id", "period_end", "publish_date", "gics") + QUARTERLY_ITEMS
)
PRICES_MONTHLY_COLUMNS = (
    "security_id", "date", "close", "bid", "ask", "dividend",
    "cfacpr", "cfacshr", "shrout", "dlprc", "dlamt",
)
PRICES_DAILY_COLUMNS = ("security_id", "date", "close", "dividend", "cfacpr")

REFERENCE_COLUMNS = {
    "sp500": ("date", "vwretd", "usdval"),        # usdval in USD thousands
    "breakpoints": ("date", "me_breakpoint"),     # breakpoint in USD millions
    "cpi": ("date", "cpiind"),
    "treasury": ("date", "tsy_10y_yield"),
    "factors": ("date", "mkt_rf", "smb", "hml", "mom", "rf"),
}


class SchemaError(ValueError):
    """Input file violates its schema; carries file and row context."""

    def __init__(self, path, message, row=None):
        self.path = str(path)
        self.row = row
        where = f"{path}" if row is None else f"{path}:row {row}"
        super().__init__(f"{where}: {message}")


def _parse_date(text: str, path, row) -> date:
    try:
        return datetime.strptime(text, "%Y-%m-%d").date()
    except ValueError:
        raise SchemaError(path, f"bad date {text!r}", row) from None


def _parse_float(text: str, path, row, column) -> float | None:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise SchemaError(path, f"bad number {text!r} in column {column}", row) from None


def read_rows(path, expected_columns) -> list[dict]:
    """Parse a CSV strictly against its schema.

    Returns dicts keyed by column: dates as ``datetime.date``, numbers as
    floats, missing numeric fields as ``None``.  A ``_row`` key carries the
    1-based data row number for diagnostics.
    """
    expected = list(expected_columns)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(path, "empty file, missing header") from None
        unknown = [c for c in header if c not in expected]
        missing = [c for c in expected if c not in header]
        if unknown:
            raise SchemaError(path, f"unknown columns: {', '.join(unknown)}")
        if missing:
            raise SchemaError(path, f"missing columns: {', '.join(missing)}")
        positions = {c: header.index(c) for c in expected}

        out = []
        for row_no, raw in enumerate(reader, start=1):
            if len(raw) != len(header):
                raise SchemaError(path, f"expected {len(header)} fields, got {len(raw)}", row_no)
            rec: dict = {"_row": row_no}
            for col in expected:
                text = raw[positions[col]].strip()
                if col in ("security_id", "entity_id", "gics"):
                    rec[col] = text
                elif col in ("period_end", "publish_date", "date"):
                    rec[col] = _parse_date(text, path, row_no)
                else:
                    rec[col] = _parse_float(text, path, row_no, col)
            out.append(rec)
    return out
