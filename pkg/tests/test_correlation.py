"""Correlation frames: log-returns, epoch Pearson, power map, frame counts."""

import math
from datetime import date

import numpy as np
import pytest

from marketstates.correlation import (
    build_frames,
    epoch_correlation,
    frame_count,
    log_returns,
    pack_upper,
    power_map,
    unpack_upper,
)
from marketstates.errors import DataError
from marketstates.ingest import PriceTable

from conftest import make_dates, make_instruments, make_return_table


def brute_force_pearson(x: list[float], y: list[float]) -> float:
    """Independent term-by-term Pearson oracle (plain Python arithmetic)."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    mxy = sum(a * b for a, b in zip(x, y)) / n
    mxx = sum(a * a for a in x) / n
    myy = sum(b * b for b in y) / n
    return (mxy - mx * my) / math.sqrt((mxx - mx * mx) * (myy - my * my))


def count_frames_by_loop(n_cols: int, epoch_len: int, shift: int) -> int:
    """Loop-counting oracle for the frame-count formula."""
    count = 0
    end = epoch_len - 1
    while end <= n_cols - 1:
        count += 1
        end += shift
    return count


def make_price_table(prices: np.ndarray) -> PriceTable:
    n, t = prices.shape
    return PriceTable(
        instruments=make_instruments(n),
        dates=make_dates(t),
        prices=prices,
    )


class TestLogReturns:
    def test_constant_price_gives_zero(self):
        table = make_price_table(np.array([[100.0, 100.0], [50.0, 50.0]]))
        rt = log_returns(table)
        assert rt.returns[0, 0] == 0.0

    def test_ten_percent_move(self):
        table = make_price_table(np.array([[100.0, 110.0], [50.0, 50.0]]))
        rt = log_returns(table)
        assert rt.returns[0, 0] == pytest.approx(0.09531017980432493, abs=1e-15)

    def test_column_count_and_dates(self):
        rng = np.random.default_rng(3)
        prices = np.exp(rng.normal(0, 0.01, size=(2, 3523)).cumsum(axis=1)) * 100
        table = make_price_table(prices)
        rt = log_returns(table)
        assert rt.returns.shape == (2, 3522)
        assert rt.dates == table.dates[1:]
        # the later date stamps each return
        assert rt.dates[0] == table.dates[1]


class TestEpochCorrelation:
    def test_identical_series_is_one(self):
        rt = make_return_table(2, 25, seed=1)
        rt.returns[1] = rt.returns[0]
        frame = epoch_correlation(rt, rt.dates[24], 20)
        assert frame.matrix[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_negated_series_is_minus_one(self):
        rt = make_return_table(2, 25, seed=2)
        rt.returns[1] = -rt.returns[0]
        frame = epoch_correlation(rt, rt.dates[24], 20)
        assert frame.matrix[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        rt = make_return_table(3, 40, seed=3)
        frame = epoch_correlation(rt, rt.dates[30], 20)
        window = rt.returns[:, 11:31]
        for i in range(3):
            for j in range(3):
                expected = 1.0 if i == j else brute_force_pearson(
                    list(window[i]), list(window[j])
                )
                assert frame.matrix[i, j] == pytest.approx(expected, abs=1e-12)

    def test_uses_exactly_the_epoch_columns(self):
        rt = make_return_table(3, 60, seed=4)
        frame = epoch_correlation(rt, rt.dates[59], 20)
        # corrupting data outside the epoch must not change the frame
        rt.returns[:, :40] = 99.0
        again = epoch_correlation(rt, rt.dates[59], 20)
        assert np.array_equal(frame.matrix, again.matrix)

    def test_zero_variance_reports_ticker_and_tau(self):
        rt = make_return_table(3, 30, seed=5)
        rt.returns[2, :] = 0.0
        with pytest.raises(DataError) as err:
            epoch_correlation(rt, rt.dates[25], 20)
        assert "T002" in str(err.value)
        assert rt.dates[25].isoformat() in str(err.value)

    def test_insufficient_history(self):
        rt = make_return_table(2, 30, seed=6)
        with pytest.raises(DataError, match="insufficient history"):
            epoch_correlation(rt, rt.dates[10], 20)

    def test_unknown_tau(self):
        rt = make_return_table(2, 30, seed=7)
        with pytest.raises(DataError, match="not a return date"):
            epoch_correlation(rt, date(1999, 1, 1), 20)

    def test_affine_rescaling_invariance(self):
        rt = make_return_table(4, 30, seed=8)
        base = epoch_correlation(rt, rt.dates[25], 20)
        rt.returns[1] = 3.7 * rt.returns[1] + 0.002
        scaled = epoch_correlation(rt, rt.dates[25], 20)
        assert np.allclose(base.matrix, scaled.matrix, atol=1e-12, rtol=0)

    def test_invariants_on_random_epochs(self):
        rt = make_return_table(6, 80, seed=9)
        for end in (19, 40, 79):
            frame = epoch_correlation(rt, rt.dates[end], 20)
            m = frame.matrix
            assert np.array_equal(m, m.T)
            assert np.all(np.diagonal(m) == 1.0)
            assert np.all(m >= -1.0) and np.all(m <= 1.0)


class TestPowerMap:
    def test_zero_epsilon_is_bitexact_identity(self, rng):
        from conftest import random_frame

        frame = random_frame(5, rng)
        mapped = power_map(frame, 0.0)
        assert np.array_equal(mapped.matrix, frame.matrix)

    def test_scalar_values(self, rng):
        from conftest import random_frame

        frame = random_frame(2, rng)
        frame.matrix[0, 1] = frame.matrix[1, 0] = 0.5
        assert power_map(frame, 0.9).matrix[0, 1] == pytest.approx(
            0.2679433656340733, abs=1e-15
        )
        near_limit = power_map(frame, 0.999999).matrix[0, 1]
        assert near_limit == pytest.approx(0.25, abs=1e-5)

    def test_sign_preserved(self, rng):
        from conftest import random_frame

        frame = random_frame(2, rng)
        frame.matrix[0, 1] = frame.matrix[1, 0] = -0.5
        assert power_map(frame, 0.9).matrix[0, 1] == pytest.approx(
            -0.2679433656340733, abs=1e-15
        )

    def test_epsilon_range_enforced(self, rng):
        from conftest import random_frame

        frame = random_frame(3, rng)
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(DataError):
                power_map(frame, bad)

    def test_rejects_already_mapped_frame(self, rng):
        from conftest import random_frame

        mapped = power_map(random_frame(3, rng), 0.5)
        with pytest.raises(DataError, match="raw"):
            power_map(mapped, 0.5)

    def test_contraction_and_fixed_points(self, rng):
        from conftest import random_frame

        frame = random_frame(8, rng)
        frame.matrix[0, 1] = frame.matrix[1, 0] = 1.0
        frame.matrix[0, 2] = frame.matrix[2, 0] = -1.0
        frame.matrix[0, 3] = frame.matrix[3, 0] = 0.0
        mapped = power_map(frame, 0.7)
        assert np.all(np.abs(mapped.matrix) <= np.abs(frame.matrix) + 1e-16)
        interior = (np.abs(frame.matrix) > 0) & (np.abs(frame.matrix) < 1)
        assert np.all(np.abs(mapped.matrix[interior]) < np.abs(frame.matrix[interior]))
        assert mapped.matrix[0, 1] == 1.0
        assert mapped.matrix[0, 2] == -1.0
        assert mapped.matrix[0, 3] == 0.0
        assert np.all(np.diagonal(mapped.matrix) == 1.0)

    def test_monotone_decreasing_in_epsilon(self, rng):
        from conftest import random_frame

        frame = random_frame(5, rng)
        prev = None
        for eps in (0.0, 0.3, 0.6, 0.9):
            mag = np.abs(power_map(frame, eps).matrix)
            if prev is not None:
                off = ~np.eye(5, dtype=bool)
                assert np.all(mag[off] <= prev[off] + 1e-16)
            prev = mag


class TestFrameCount:
    def test_formula_matches_loop_oracle(self):
        for n_cols in (20, 21, 50, 101, 3522):
            for epoch_len in (2, 5, 20):
                for shift in (1, 2, 7, 10):
                    if n_cols < epoch_len:
                        continue
                    assert frame_count(n_cols, epoch_len, shift) == count_frames_by_loop(
                        n_cols, epoch_len, shift
                    )

    def test_reference_counts(self):
        assert frame_count(3522, 20, 1) == 3503
        assert frame_count(3458, 20, 1) == 3439
        assert frame_count(3522, 20, 10) == 351

    def test_too_short(self):
        with pytest.raises(DataError):
            frame_count(19, 20, 1)


class TestBuildFrames:
    def test_counts_on_reference_shapes(self):
        rt = make_return_table(3, 3522, seed=10)
        fs = build_frames(rt, 20, 1, 0.9)
        assert len(fs) == 3503
        fs10 = build_frames(rt, 20, 10, 0.0)
        assert len(fs10) == 351
        rt_jp = make_return_table(3, 3458, seed=11)
        assert len(build_frames(rt_jp, 20, 1, 0.0)) == 3439

    def test_taus_are_epoch_end_dates(self):
        rt = make_return_table(2, 30, seed=12)
        fs = build_frames(rt, 20, 3, 0.0)
        assert fs.taus[0] == rt.dates[19]
        assert fs.taus[1] == rt.dates[22]
        assert all(b > a for a, b in zip(fs.taus, fs.taus[1:]))

    def test_matches_single_epoch_path(self):
        rt = make_return_table(4, 60, seed=13)
        fs = build_frames(rt, 20, 5, 0.6)
        for i, frame in enumerate(fs):
            single = power_map(epoch_correlation(rt, fs.taus[i], 20), 0.6)
            assert np.allclose(frame.matrix, single.matrix, atol=1e-14, rtol=0)

    def test_threading_is_bit_identical(self):
        rt = make_return_table(5, 600, seed=14)
        serial = build_frames(rt, 20, 1, 0.9)
        threaded = build_frames(rt, 20, 1, 0.9, n_threads=3)
        assert np.array_equal(serial.packed, threaded.packed)

    def test_zero_variance_propagates(self):
        rt = make_return_table(3, 50, seed=15)
        rt.returns[1, 25:] = 0.0  # epochs ending at column 44+ are all-zero
        with pytest.raises(DataError, match="zero return variance"):
            build_frames(rt, 20, 1, 0.0)


def test_pack_unpack_roundtrip(rng):
    from conftest import random_frame_matrix

    m = random_frame_matrix(7, rng)
    assert np.array_equal(unpack_upper(pack_upper(m), 7), m)
