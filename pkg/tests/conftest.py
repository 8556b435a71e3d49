"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from marketstates.correlation import CorrelationFrame, FrameSet, ReturnTable
from marketstates.ingest import Instrument


def make_instruments(n: int) -> tuple[Instrument, ...]:
    return tuple(Instrument(f"T{i:03d}", f"Test {i}", "XX") for i in range(n))


def make_dates(n: int, start: date = date(2010, 1, 4)) -> tuple[date, ...]:
    out = []
    day = start
    while len(out) < n:
        if day.weekday() < 5:
            out.append(day)
        day += timedelta(days=1)
    return tuple(out)


def make_return_table(n_stocks: int, n_cols: int, seed: int = 0) -> ReturnTable:
    rng = np.random.default_rng(seed)
    return ReturnTable(
        instruments=make_instruments(n_stocks),
        dates=make_dates(n_cols),
        returns=rng.normal(0.0, 0.01, size=(n_stocks, n_cols)),
    )


def random_frame_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """A symmetric unit-diagonal matrix with entries in [-1, 1]."""
    m = rng.uniform(-1.0, 1.0, size=(n, n))
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 1.0)
    return m


def random_frame(n: int, rng: np.random.Generator, tau: date = date(2010, 2, 1)) -> CorrelationFrame:
    return CorrelationFrame(
        tau=tau, epoch_len=20, epsilon=0.0, matrix=random_frame_matrix(n, rng)
    )


def frames_from_matrices(matrices: list[np.ndarray], epsilon: float = 0.0) -> FrameSet:
    from marketstates.correlation import pack_upper

    n = matrices[0].shape[0]
    packed = np.stack([pack_upper(m) for m in matrices])
    return FrameSet(
        taus=make_dates(len(matrices)),
        packed=packed,
        n_assets=n,
        epoch_len=20,
        shift=1,
        epsilon=epsilon,
    )


def procrustes_rms(recovered: np.ndarray, truth: np.ndarray) -> float:
    """RMS misfit after optimally rotating/reflecting recovered onto truth."""
    from scipy.linalg import orthogonal_procrustes

    a = recovered - recovered.mean(axis=0)
    b = truth - truth.mean(axis=0)
    rotation, _ = orthogonal_procrustes(a, b)
    diff = a @ rotation - b
    return float(np.sqrt((diff * diff).sum() / len(a)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
