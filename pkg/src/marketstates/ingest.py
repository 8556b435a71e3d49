"""Loading, validation, and alignment of raw price data into a dense table.

Input is a long-format CSV (``date,ticker,adj_close``) or, with ``wide=True``,
a wide-format CSV (``date`` column plus one column per ticker). Only tickers
with a price on every trading date in the requested range survive; the rest
are dropped and reported. No forward-filling or holiday compensation is
applied.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError

# Placeholder sector used when no universe metadata is supplied.
UNKNOWN_SECTOR = "XX"


@dataclass(frozen=True)
class Instrument:
    """One tradable instrument: ticker, display name, 2-letter sector code."""

    ticker: str
    name: str
    sector_code: str


@dataclass(frozen=True)
class DropRecord:
    """A ticker removed by the full-presence filter."""

    ticker: str
    missing_dates_count: int
    first_missing: date


@dataclass(eq=False)
class PriceTable:
    """Aligned daily adjusted-close prices for a fixed universe.

    ``prices[i, t]`` is the price of ``instruments[i]`` on ``dates[t]``.
    Every cell is a finite positive float; dates are strictly increasing.
    The table is treated as immutable once built.
    """

    instruments: tuple[Instrument, ...]
    dates: tuple[date, ...]
    prices: np.ndarray
    drops: tuple[DropRecord, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        n, t = len(self.instruments), len(self.dates)
        if n < 2:
            raise DataError(f"fewer than 2 surviving tickers (got {n})")
        if t < 2:
            raise DataError(f"fewer than 2 trading dates (got {t})")
        if self.prices.shape != (n, t):
            raise DataError(
                f"price matrix shape {self.prices.shape} does not match "
                f"{n} instruments x {t} dates"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates are not strictly increasing")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0.0):
            raise DataError("price matrix contains non-positive or non-finite entries")
        tickers = [inst.ticker for inst in self.instruments]
        if len(set(tickers)) != len(tickers):
            raise DataError("duplicate tickers in price table")

    @property
    def n_instruments(self) -> int:
        return len(self.instruments)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(inst.ticker for inst in self.instruments)


def _parse_price(text: str, line_num: int, path: Path) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{line_num}: malformed price {text!r}") from None
    if not math.isfinite(value) or value <= 0.0:
        raise DataError(f"{path}:{line_num}: non-positive or non-finite price {text!r}")
    return value


def _parse_date(text: str, line_num: int, path: Path) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}:{line_num}: malformed date {text!r}") from None


def load_universe(path: str | Path) -> list[Instrument]:
    """Load instrument metadata from a ``code,name,sector,abbrv`` CSV.

    Instruments are returned in file order. Duplicate tickers and missing
    or malformed sector abbreviations (anything but two ASCII uppercase
    letters) are rejected.
    """
    path = Path(path)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read universe file {path}: {exc}") from exc
    instruments: list[Instrument] = []
    seen: set[str] = set()
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty universe")
        header = [h.strip().lower() for h in header]
        if header != ["code", "name", "sector", "abbrv"]:
            raise DataError(
                f"{path}: expected header 'code,name,sector,abbrv', got {','.join(header)!r}"
            )
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{reader.line_num}: expected 4 fields, got {len(row)}")
            ticker = row[0].strip()
            name = row[1].strip()
            abbrv = row[3].strip()
            if not ticker:
                raise DataError(f"{path}:{reader.line_num}: empty ticker")
            if ticker in seen:
                raise DataError(f"{path}:{reader.line_num}: duplicate ticker {ticker!r}")
            if len(abbrv) != 2 or not abbrv.isascii() or not abbrv.isalpha() or not abbrv.isupper():
                raise DataError(
                    f"{path}:{reader.line_num}: unknown or empty sector abbreviation {abbrv!r}"
                )
            seen.add(ticker)
            instruments.append(Instrument(ticker=ticker, name=name, sector_code=abbrv))
    if not instruments:
        raise DataError(f"{path}: empty universe")
    return instruments


def _read_long_csv(
    path: Path, start_date: date, end_date: date
) -> dict[str, dict[date, float]]:
    by_ticker: dict[str, dict[date, float]] = {}
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read price file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty price file")
        header = [h.strip().lower() for h in header]
        if header != ["date", "ticker", "adj_close"]:
            raise DataError(
                f"{path}: expected header 'date,ticker,adj_close', got {','.join(header)!r}"
            )
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{reader.line_num}: expected 3 fields, got {len(row)}")
            day = _parse_date(row[0], reader.line_num, path)
            if day < start_date or day > end_date:
                continue
            ticker = row[1].strip()
            if not ticker:
                raise DataError(f"{path}:{reader.line_num}: empty ticker")
            price = _parse_price(row[2], reader.line_num, path)
            cells = by_ticker.setdefault(ticker, {})
            if day in cells:
                raise DataError(
                    f"{path}:{reader.line_num}: duplicate price for {ticker} on {day.isoformat()}"
                )
            cells[day] = price
    return by_ticker


def _read_wide_csv(
    path: Path, start_date: date, end_date: date
) -> dict[str, dict[date, float]]:
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read price file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty price file")
        if not header or header[0].strip().lower() != "date":
            raise DataError(f"{path}: wide format requires a leading 'date' column")
        tickers = [h.strip() for h in header[1:]]
        if any(not t for t in tickers):
            raise DataError(f"{path}: empty ticker column name in wide header")
        if len(set(tickers)) != len(tickers):
            raise DataError(f"{path}: duplicate ticker column in wide header")
        by_ticker: dict[str, dict[date, float]] = {t: {} for t in tickers}
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(tickers) + 1:
                raise DataError(
                    f"{path}:{reader.line_num}: expected {len(tickers) + 1} fields, got {len(row)}"
                )
            day = _parse_date(row[0], reader.line_num, path)
            if day < start_date or day > end_date:
                continue
            for ticker, cell in zip(tickers, row[1:]):
                cell = cell.strip()
                if not cell:
                    continue  # gap; handled by the presence filter
                if day in by_ticker[ticker]:
                    raise DataError(
                        f"{path}:{reader.line_num}: duplicate price for {ticker} "
                        f"on {day.isoformat()}"
                    )
                by_ticker[ticker][day] = _parse_price(cell, reader.line_num, path)
    return by_ticker


def load_prices(
    path: str | Path,
    start_date: date,
    end_date: date,
    universe: list[Instrument] | None = None,
    wide: bool = False,
) -> PriceTable:
    """Load and align prices, keeping only tickers present on every date.

    The trading calendar is the union of dates observed for any ticker within
    ``[start_date, end_date]``. Tickers missing any calendar date are dropped
    and recorded on the returned table's ``drops``. Surviving instruments are
    ordered by (sector_code, ticker); sector codes come from ``universe`` when
    given, otherwise the placeholder ``XX`` is used.

    Raises:
        DataError: unreadable file, malformed row, bad price, a surviving
            ticker absent from ``universe``, fewer than 2 survivors, or fewer
            than 2 trading dates.
    """
    path = Path(path)
    if end_date < start_date:
        raise DataError(f"end date {end_date} precedes start date {start_date}")
    if wide:
        by_ticker = _read_wide_csv(path, start_date, end_date)
    else:
        by_ticker = _read_long_csv(path, start_date, end_date)

    calendar: set[date] = set()
    for cells in by_ticker.values():
        calendar.update(cells)
    if not calendar:
        raise DataError(f"{path}: no trading dates in [{start_date}, {end_date}]")
    dates = tuple(sorted(calendar))
    if len(dates) < 2:
        raise DataError(f"{path}: fewer than 2 trading dates in range")

    survivors: list[str] = []
    drops: list[DropRecord] = []
    for ticker in sorted(by_ticker):
        cells = by_ticker[ticker]
        if len(cells) == len(dates):
            survivors.append(ticker)
        else:
            missing = [d for d in dates if d not in cells]
            drops.append(
                DropRecord(
                    ticker=ticker,
                    missing_dates_count=len(missing),
                    first_missing=missing[0],
                )
            )
    if len(survivors) < 2:
        raise DataError(
            f"{path}: fewer than 2 tickers cover the full calendar "
            f"({len(survivors)} of {len(by_ticker)} survive)"
        )

    if universe is not None:
        by_code = {inst.ticker: inst for inst in universe}
        missing_meta = [t for t in survivors if t not in by_code]
        if missing_meta:
            raise DataError(
                f"{path}: tickers missing from universe: {', '.join(missing_meta)}"
            )
        instruments = [by_code[t] for t in survivors]
    else:
        instruments = [Instrument(t, t, UNKNOWN_SECTOR) for t in survivors]
    instruments.sort(key=lambda inst: (inst.sector_code, inst.ticker))

    prices = np.empty((len(instruments), len(dates)), dtype=np.float64)
    for i, inst in enumerate(instruments):
        cells = by_ticker[inst.ticker]
        for t, day in enumerate(dates):
            prices[i, t] = cells[day]

    return PriceTable(
        instruments=tuple(instruments),
        dates=dates,
        prices=prices,
        drops=tuple(drops),
    )


def write_prices_csv(table: PriceTable, path: str | Path, wide: bool = False) -> None:
    """Write a PriceTable back to CSV with bit-exact float round-trip."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if wide:
            writer.writerow(["date"] + [inst.ticker for inst in table.instruments])
            for t, day in enumerate(table.dates):
                writer.writerow(
                    [day.isoformat()] + [repr(float(p)) for p in table.prices[:, t]]
                )
        else:
            writer.writerow(["date", "ticker", "adj_close"])
            for t, day in enumerate(table.dates):
                for i, inst in enumerate(table.instruments):
                    writer.writerow(
                        [day.isoformat(), inst.ticker, repr(float(table.prices[i, t]))]
                    )


def tables_equal(a: PriceTable, b: PriceTable) -> bool:
    """Bit-exact equality of instruments, dates, and prices (drops ignored)."""
    return (
        a.instruments == b.instruments
        and a.dates == b.dates
        and np.array_equal(a.prices, b.prices)
    )
