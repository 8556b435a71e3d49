"""Log-returns, sliding-epoch Pearson correlation frames, and the power map.

A frame is the N x N correlation matrix of one epoch (a fixed-length window
of daily log-returns), stamped with the epoch's end date tau. Noise
suppression distorts each coefficient elementwise to sign(r)*|r|**(1+eps),
which damps small (noisy) entries while keeping -1, 0, and 1 fixed.

Frames are held as packed upper-triangle rows (the diagonal is identically 1)
so a long sliding scan stays memory-friendly; ``CorrelationFrame`` exposes the
full symmetric matrix.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import Iterator

import numpy as np

from .errors import DataError
from .ingest import Instrument, PriceTable

# Fixed work unit for the batched frame builder. Constant regardless of the
# thread count so results are bit-identical however the chunks are scheduled.
_CHUNK = 256


@dataclass(eq=False)
class ReturnTable:
    """Daily log-returns; column t is ln(p[t+1]/p[t]) stamped with the later date."""

    instruments: tuple[Instrument, ...]
    dates: tuple[date, ...]
    returns: np.ndarray

    @property
    def n_instruments(self) -> int:
        return len(self.instruments)

    @property
    def n_dates(self) -> int:
        return len(self.dates)


@dataclass(eq=False)
class CorrelationFrame:
    """One epoch's correlation matrix (raw when epsilon == 0, else power-mapped)."""

    tau: date
    epoch_len: int
    epsilon: float
    matrix: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.matrix.shape[0]


@dataclass(eq=False)
class FrameSet:
    """Ordered correlation frames sharing epoch_len and epsilon.

    ``packed[f]`` holds frame f's upper-triangle off-diagonal entries in
    row-major (i < j) order; the unit diagonal is implicit.
    """

    taus: tuple[date, ...]
    packed: np.ndarray
    n_assets: int
    epoch_len: int
    shift: int
    epsilon: float

    def __len__(self) -> int:
        return len(self.taus)

    def frame(self, index: int) -> CorrelationFrame:
        matrix = unpack_upper(self.packed[index], self.n_assets)
        return CorrelationFrame(
            tau=self.taus[index],
            epoch_len=self.epoch_len,
            epsilon=self.epsilon,
            matrix=matrix,
        )

    def __iter__(self) -> Iterator[CorrelationFrame]:
        return (self.frame(i) for i in range(len(self)))

    @property
    def frames(self) -> list[CorrelationFrame]:
        return list(self)

    def mean_offdiag(self) -> np.ndarray:
        """Per-frame mean of the off-diagonal entries (length F)."""
        return self.packed.mean(axis=1)


def pack_upper(matrix: np.ndarray) -> np.ndarray:
    """Extract the strict upper triangle, row-major."""
    n = matrix.shape[0]
    iu = np.triu_indices(n, k=1)
    return np.ascontiguousarray(matrix[iu])


def unpack_upper(row: np.ndarray, n: int) -> np.ndarray:
    """Rebuild the full symmetric unit-diagonal matrix from a packed row."""
    matrix = np.eye(n, dtype=np.float64)
    iu = np.triu_indices(n, k=1)
    matrix[iu] = row
    matrix[iu[1], iu[0]] = row
    return matrix


def frame_count(n_return_cols: int, epoch_len: int, shift: int) -> int:
    """Number of epochs of ``epoch_len`` return columns advancing by ``shift``."""
    if epoch_len < 2:
        raise DataError(f"epoch length must be >= 2, got {epoch_len}")
    if shift < 1:
        raise DataError(f"shift must be >= 1, got {shift}")
    if n_return_cols < epoch_len:
        raise DataError(
            f"need at least {epoch_len} return columns for one epoch, got {n_return_cols}"
        )
    return (n_return_cols - epoch_len) // shift + 1


def log_returns(prices: PriceTable) -> ReturnTable:
    """Logarithmic daily increments of a price table (N x (T-1))."""
    returns = np.log(prices.prices[:, 1:] / prices.prices[:, :-1])
    return ReturnTable(
        instruments=prices.instruments,
        dates=prices.dates[1:],
        returns=returns,
    )


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 <= epsilon < 1.0):
        raise DataError(f"noise-suppression parameter must be in [0, 1), got {epsilon}")


def _power_map_values(values: np.ndarray, epsilon: float) -> np.ndarray:
    # Identity at epsilon == 0 is kept bit-exact by never touching the array.
    if epsilon == 0.0:
        return values.copy()
    return np.sign(values) * np.abs(values) ** (1.0 + epsilon)


def _correlate_windows(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-window covariance (B, N, N) and variance (B, N); ``windows`` is (B, N, L)."""
    length = windows.shape[2]
    means = windows.mean(axis=2)
    centered = windows - means[:, :, None]
    cov = np.einsum("bil,bjl->bij", centered, centered) / length
    var = np.einsum("bii->bi", cov)
    return cov, var


def _finish_correlation(cov: np.ndarray, var: np.ndarray) -> np.ndarray:
    std = np.sqrt(var)
    corr = cov / (std[:, :, None] * std[:, None, :])
    corr = 0.5 * (corr + corr.transpose(0, 2, 1))  # exact symmetry by construction
    np.clip(corr, -1.0, 1.0, out=corr)  # absorb floating-point overshoot
    idx = np.arange(corr.shape[1])
    corr[:, idx, idx] = 1.0
    return corr


def epoch_correlation(returns: ReturnTable, tau: date, epoch_len: int) -> CorrelationFrame:
    """Correlation matrix of the ``epoch_len`` return columns ending at ``tau``.

    Raises:
        DataError: tau is not a return date, fewer than ``epoch_len`` columns
            end at tau, or some stock has zero variance within the epoch.
    """
    if epoch_len < 2:
        raise DataError(f"epoch length must be >= 2, got {epoch_len}")
    try:
        end = returns.dates.index(tau)
    except ValueError:
        raise DataError(f"tau {tau.isoformat()} is not a return date") from None
    if end + 1 < epoch_len:
        raise DataError(
            f"insufficient history before {tau.isoformat()}: "
            f"need {epoch_len} return columns, have {end + 1}"
        )
    window = returns.returns[:, end - epoch_len + 1 : end + 1][None, :, :]
    cov, var = _correlate_windows(window)
    zero = np.flatnonzero(var[0] <= 0.0)
    if zero.size:
        ticker = returns.instruments[zero[0]].ticker
        raise DataError(
            f"zero return variance for {ticker} in the epoch ending {tau.isoformat()}"
        )
    corr = _finish_correlation(cov, var)
    return CorrelationFrame(tau=tau, epoch_len=epoch_len, epsilon=0.0, matrix=corr[0])


def power_map(frame: CorrelationFrame, epsilon: float) -> CorrelationFrame:
    """Elementwise noise suppression sign(r)*|r|**(1+epsilon) of a raw frame."""
    _check_epsilon(epsilon)
    if frame.epsilon != 0.0:
        raise DataError(
            f"power map expects a raw (epsilon=0) frame, got epsilon={frame.epsilon}"
        )
    matrix = _power_map_values(frame.matrix, epsilon)
    np.fill_diagonal(matrix, 1.0)
    return CorrelationFrame(
        tau=frame.tau, epoch_len=frame.epoch_len, epsilon=epsilon, matrix=matrix
    )


def build_frames(
    returns: ReturnTable,
    epoch_len: int = 20,
    shift: int = 1,
    epsilon: float = 0.0,
    n_threads: int | None = None,
) -> FrameSet:
    """All sliding-epoch frames of a return table, power-mapped at ``epsilon``.

    Epoch f covers return columns [f*shift, f*shift + epoch_len) and is
    stamped with the date of its last column. Chunks of epochs are computed
    independently (optionally across threads); results are bit-identical
    regardless of the thread count.
    """
    _check_epsilon(epsilon)
    n_cols = returns.returns.shape[1]
    total = frame_count(n_cols, epoch_len, shift)
    n_assets = returns.n_instruments
    half = n_assets * (n_assets - 1) // 2
    packed = np.empty((total, half), dtype=np.float64)
    taus = tuple(
        returns.dates[epoch_len - 1 + f * shift] for f in range(total)
    )

    windows_view = np.lib.stride_tricks.sliding_window_view(
        returns.returns, epoch_len, axis=1
    )
    starts = np.arange(total) * shift
    iu = np.triu_indices(n_assets, k=1)

    def run_chunk(begin: int) -> None:
        stop = min(begin + _CHUNK, total)
        windows = np.ascontiguousarray(
            windows_view[:, starts[begin:stop], :].transpose(1, 0, 2)
        )
        cov, var = _correlate_windows(windows)
        bad = np.argwhere(var <= 0.0)
        if bad.size:
            b, i = bad[0]
            raise DataError(
                f"zero return variance for {returns.instruments[i].ticker} in the "
                f"epoch ending {taus[begin + b].isoformat()}"
            )
        corr = _finish_correlation(cov, var)
        rows = corr[:, iu[0], iu[1]]
        packed[begin:stop] = _power_map_values(rows, epsilon)

    chunk_starts = range(0, total, _CHUNK)
    if n_threads is not None and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for result in pool.map(run_chunk, chunk_starts):
                pass
    else:
        for begin in chunk_starts:
            run_chunk(begin)

    return FrameSet(
        taus=taus,
        packed=packed,
        n_assets=n_assets,
        epoch_len=epoch_len,
        shift=shift,
        epsilon=epsilon,
    )
