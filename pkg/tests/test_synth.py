"""Planted-regime generator: correlation oracle, determinism, price round-trip."""

import numpy as np
import pytest

from marketstates.correlation import log_returns
from marketstates.errors import DataError
from marketstates.synth import (
    Regime,
    RegimeSpec,
    generate_prices,
    generate_returns,
    generator_metadata,
    price_regime_labels,
    return_regime_labels,
    trading_dates,
)


def mean_offdiag_correlation(block: np.ndarray) -> float:
    corr = np.corrcoef(block)
    n = corr.shape[0]
    return float((corr.sum() - n) / (n * (n - 1)))


class TestGenerateReturns:
    def test_zero_correlation_regime(self):
        spec = RegimeSpec(
            n_stocks=50,
            regimes=(Regime(501, 0.0),),
            noise_sigma=0.01,
            seed=1,
        )
        rt = generate_returns(spec)
        assert rt.returns.shape == (50, 500)
        # sampling error ~ 1/sqrt(500)
        assert mean_offdiag_correlation(rt.returns) == pytest.approx(0.0, abs=0.02)

    def test_high_correlation_regime(self):
        spec = RegimeSpec(
            n_stocks=50,
            regimes=(Regime(501, 0.9),),
            noise_sigma=0.01,
            seed=2,
        )
        rt = generate_returns(spec)
        assert mean_offdiag_correlation(rt.returns) == pytest.approx(0.9, abs=0.03)

    def test_same_seed_identical(self):
        spec = RegimeSpec(
            n_stocks=10,
            regimes=(Regime(50, 0.2), Regime(50, 0.6)),
            noise_sigma=0.02,
            seed=7,
        )
        a = generate_returns(spec)
        b = generate_returns(spec)
        assert np.array_equal(a.returns, b.returns)
        assert a.dates == b.dates

    def test_regime_column_counts(self):
        spec = RegimeSpec(
            n_stocks=5,
            regimes=(Regime(400, 0.15), Regime(400, 0.35), Regime(400, 0.55), Regime(400, 0.75)),
            noise_sigma=0.02,
            seed=3,
        )
        rt = generate_returns(spec)
        # durations are price days: total returns = sum - 1
        assert rt.returns.shape[1] == 1599
        labels = return_regime_labels(spec)
        assert labels.shape == (1599,)
        assert list(np.bincount(labels)) == [399, 400, 400, 400]
        prices = price_regime_labels(spec)
        assert prices.shape == (1600,)
        assert list(np.bincount(prices)) == [400, 400, 400, 400]

    def test_per_regime_correlation_levels(self):
        spec = RegimeSpec(
            n_stocks=40,
            regimes=(Regime(401, 0.1), Regime(400, 0.7)),
            noise_sigma=0.02,
            seed=4,
        )
        rt = generate_returns(spec)
        labels = return_regime_labels(spec)
        for index, c in ((0, 0.1), (1, 0.7)):
            block = rt.returns[:, labels == index]
            assert mean_offdiag_correlation(block) == pytest.approx(c, abs=0.03)


class TestRegimeSpecValidation:
    def test_rejects_duplicate_correlations(self):
        with pytest.raises(DataError, match="distinct"):
            RegimeSpec(
                n_stocks=5,
                regimes=(Regime(30, 0.2), Regime(30, 0.2)),
                noise_sigma=0.01,
                seed=0,
            )

    def test_rejects_bad_values(self):
        with pytest.raises(DataError):
            RegimeSpec(n_stocks=1, regimes=(Regime(30, 0.2),), noise_sigma=0.01, seed=0)
        with pytest.raises(DataError):
            RegimeSpec(n_stocks=5, regimes=(), noise_sigma=0.01, seed=0)
        with pytest.raises(DataError):
            RegimeSpec(n_stocks=5, regimes=(Regime(1, 0.2),), noise_sigma=0.01, seed=0)
        with pytest.raises(DataError):
            RegimeSpec(n_stocks=5, regimes=(Regime(30, 1.0),), noise_sigma=0.01, seed=0)
        with pytest.raises(DataError):
            RegimeSpec(n_stocks=5, regimes=(Regime(30, 0.2),), noise_sigma=0.0, seed=0)


class TestGeneratePrices:
    def test_exp_cumsum_from_100(self):
        spec = RegimeSpec(
            n_stocks=4,
            regimes=(Regime(40, 0.3),),
            noise_sigma=0.02,
            seed=5,
        )
        table = generate_prices(spec)
        rt = generate_returns(spec)
        assert table.prices.shape == (4, 40)
        assert np.all(table.prices[:, 0] == 100.0)
        expected = 100.0 * np.exp(rt.returns[:, 0])
        assert np.allclose(table.prices[:, 1], expected, rtol=0, atol=1e-12)

    def test_log_returns_recover_generated(self):
        spec = RegimeSpec(
            n_stocks=6,
            regimes=(Regime(60, 0.2), Regime(60, 0.5)),
            noise_sigma=0.02,
            seed=6,
        )
        table = generate_prices(spec)
        rt = generate_returns(spec)
        recovered = log_returns(table)
        assert np.allclose(recovered.returns, rt.returns, atol=1e-12, rtol=0)
        assert recovered.dates == rt.dates


def test_trading_dates_are_weekdays():
    dates = trading_dates(30)
    assert len(dates) == 30
    assert all(d.weekday() < 5 for d in dates)
    assert all(b > a for a, b in zip(dates, dates[1:]))


def test_generator_metadata_names_the_stream():
    meta = generator_metadata()
    assert meta["generator"] == "numpy.random.PCG64"
    assert "numpy_version" in meta
