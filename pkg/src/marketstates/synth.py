"""Synthetic return tables with planted correlation regimes.

Each regime draws daily returns from a one-factor Gaussian model
``r_i = sigma * (sqrt(c) * m + sqrt(1 - c) * e_i)`` with independent standard
normal market factor m and idiosyncratic terms e_i, so the population
correlation between any two stocks is exactly the regime's c. That closed
form is what makes the generator usable as ground truth for the clustering
pipeline.

Durations count price days: a spec with R regimes yields sum(durations)
price dates and one fewer return columns (the first date has no return).
Each return belongs to the regime owning its (later) date.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .correlation import ReturnTable
from .ingest import Instrument, PriceTable
from .errors import DataError

# Recorded in output metadata so the stream is reproducible elsewhere.
GENERATOR_NAME = "numpy.random.PCG64"

SYNTH_SECTOR = "SY"

_DEFAULT_START = date(2006, 1, 2)


@dataclass(frozen=True)
class Regime:
    duration_days: int
    base_correlation: float


@dataclass(frozen=True)
class RegimeSpec:
    n_stocks: int
    regimes: tuple[Regime, ...]
    noise_sigma: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_stocks < 2:
            raise DataError(f"need at least 2 stocks, got {self.n_stocks}")
        if not self.regimes:
            raise DataError("regime list is empty")
        for regime in self.regimes:
            if regime.duration_days < 2:
                raise DataError(
                    f"regime duration must be >= 2 days, got {regime.duration_days}"
                )
            if not (0.0 <= regime.base_correlation < 1.0):
                raise DataError(
                    f"base correlation must be in [0, 1), got {regime.base_correlation}"
                )
        correlations = [r.base_correlation for r in self.regimes]
        if len(set(correlations)) != len(correlations):
            raise DataError("regime base correlations must be pairwise distinct")
        if not (self.noise_sigma > 0.0):
            raise DataError(f"noise sigma must be > 0, got {self.noise_sigma}")

    @property
    def total_price_days(self) -> int:
        return sum(r.duration_days for r in self.regimes)


def trading_dates(count: int, start: date = _DEFAULT_START) -> tuple[date, ...]:
    """``count`` consecutive weekdays starting at the first weekday >= start."""
    out: list[date] = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += timedelta(days=1)
    return tuple(out)


def _instruments(n_stocks: int) -> tuple[Instrument, ...]:
    return tuple(
        Instrument(f"S{i:03d}", f"Synthetic stock {i}", SYNTH_SECTOR)
        for i in range(n_stocks)
    )


def price_regime_labels(spec: RegimeSpec) -> np.ndarray:
    """Regime index of every price date (length total_price_days)."""
    return np.repeat(
        np.arange(len(spec.regimes)), [r.duration_days for r in spec.regimes]
    )


def return_regime_labels(spec: RegimeSpec) -> np.ndarray:
    """Regime index of every return column (regime of the later date)."""
    return price_regime_labels(spec)[1:]


def generate_returns(spec: RegimeSpec, start: date = _DEFAULT_START) -> ReturnTable:
    """Draw the planted-regime return table; fully deterministic given the seed.

    Regime blocks are drawn in order from a single PCG64 stream: first the
    market factor for the block, then the idiosyncratic matrix.
    """
    labels = return_regime_labels(spec)
    n_cols = labels.size
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    returns = np.empty((spec.n_stocks, n_cols), dtype=np.float64)
    start_col = 0
    for index, regime in enumerate(spec.regimes):
        cols = int(np.count_nonzero(labels == index))
        if cols == 0:
            continue
        market = rng.standard_normal(cols)
        idio = rng.standard_normal((spec.n_stocks, cols))
        c = regime.base_correlation
        returns[:, start_col : start_col + cols] = spec.noise_sigma * (
            np.sqrt(c) * market[None, :] + np.sqrt(1.0 - c) * idio
        )
        start_col += cols
    dates = trading_dates(spec.total_price_days, start)
    return ReturnTable(
        instruments=_instruments(spec.n_stocks),
        dates=dates[1:],
        returns=returns,
    )


def generate_prices(
    spec: RegimeSpec,
    start: date = _DEFAULT_START,
    initial_price: float = 100.0,
) -> PriceTable:
    """Price table reconstructed from the generated returns as exp-cumsum."""
    table = generate_returns(spec, start)
    n_cols = table.returns.shape[1]
    prices = np.empty((spec.n_stocks, n_cols + 1), dtype=np.float64)
    prices[:, 0] = initial_price
    prices[:, 1:] = initial_price * np.exp(np.cumsum(table.returns, axis=1))
    dates = trading_dates(spec.total_price_days, start)
    return PriceTable(
        instruments=table.instruments,
        dates=dates,
        prices=prices,
    )


def generator_metadata() -> dict[str, str]:
    """Name and version of the PRNG stream, for output manifests."""
    return {"generator": GENERATOR_NAME, "numpy_version": np.__version__}
