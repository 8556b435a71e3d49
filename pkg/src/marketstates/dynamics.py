"""State-sequence analytics: transitions, trajectories, and daily classification.

The transition matrix counts consecutive-frame state pairs (self-transitions
included; the diagonal dominates because states dwell for long stretches).
Near-tridiagonality — almost all moves between adjacent states — is the
property that makes the top state hedgeable: jumps into it come almost only
from the state just below.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .clustering import StateModel
from .correlation import CorrelationFrame, FrameSet, ReturnTable, pack_upper
from .errors import DataError
from .geometry import Embedding3D, place_point


@dataclass(eq=False)
class TransitionMatrix:
    """Counts and row-stochastic probabilities of consecutive state pairs.

    ``counts[a-1, b-1]`` is the number of frame pairs moving from state a to
    state b. Rows of ``probabilities`` sum to 1 except for states with no
    outgoing transitions, which are all-zero and listed in ``zero_rows``.
    """

    k: int
    counts: np.ndarray
    probabilities: np.ndarray
    zero_rows: tuple[int, ...]

    def probabilities_excluding_self(self) -> np.ndarray:
        """Row-normalized transition probabilities with self-loops removed."""
        off = self.counts.astype(np.float64).copy()
        np.fill_diagonal(off, 0.0)
        sums = off.sum(axis=1, keepdims=True)
        return np.divide(off, sums, out=np.zeros_like(off), where=sums > 0.0)


@dataclass(eq=False)
class IndexReturnSeries:
    """Equal-weighted mean of constituent log-returns per date (index proxy)."""

    dates: tuple[date, ...]
    values: np.ndarray


@dataclass(eq=False)
class Trajectory:
    """Per-frame embedded point, state id, and optional index return."""

    taus: tuple[date, ...]
    points: np.ndarray
    state_ids: np.ndarray
    index_returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.taus)


@dataclass(eq=False)
class Classification:
    """Result of placing one new frame against a fitted state model."""

    state_id: int
    point: np.ndarray
    nearest_centroid_distance: float


def transition_counts(states: StateModel) -> TransitionMatrix:
    """Consecutive-pair counts and row-normalized probabilities."""
    seq = np.asarray(states.state_of_frame, dtype=np.int64)
    if seq.size < 2:
        raise DataError(f"need at least 2 frames for transitions, got {seq.size}")
    k = states.k_star
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (seq[:-1] - 1, seq[1:] - 1), 1)
    sums = counts.sum(axis=1, keepdims=True).astype(np.float64)
    probabilities = np.divide(
        counts.astype(np.float64), sums, out=np.zeros((k, k)), where=sums > 0.0
    )
    zero_rows = tuple(int(s + 1) for s in np.flatnonzero(sums[:, 0] == 0.0))
    return TransitionMatrix(
        k=k, counts=counts, probabilities=probabilities, zero_rows=zero_rows
    )


def tridiagonality_score(tm: TransitionMatrix) -> float:
    """Fraction of transitions between identical or adjacent states."""
    a, b = np.indices(tm.counts.shape)
    near = tm.counts[np.abs(a - b) <= 1].sum()
    return float(near) / float(tm.counts.sum())


def forbidden_transition_report(
    tm: TransitionMatrix,
) -> list[tuple[int, int, int]]:
    """Counts of jumps into the top state from every state at least two below.

    These are the moves that should be (near-)absent for the hedging rule —
    protect on entering the penultimate state — to be safe.
    """
    top = tm.k
    return [(a, top, int(tm.counts[a - 1, top - 1])) for a in range(1, top - 1)]


def index_return_proxy(returns: ReturnTable) -> IndexReturnSeries:
    """Equal-weighted mean of constituent log-returns per date."""
    return IndexReturnSeries(
        dates=returns.dates, values=returns.returns.mean(axis=0)
    )


def build_trajectory(
    embedding: Embedding3D,
    states: StateModel,
    index_returns: IndexReturnSeries | None = None,
) -> Trajectory:
    """Time-ordered trajectory of embedded frames with their state labels."""
    taus = states.taus
    if embedding.n_points != len(taus):
        raise DataError(
            f"{embedding.n_points} embedded points but {len(taus)} frames"
        )
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise DataError("frame dates are not strictly increasing")
    values: np.ndarray | None = None
    if index_returns is not None:
        lookup = dict(zip(index_returns.dates, index_returns.values))
        missing = [t for t in taus if t not in lookup]
        if missing:
            raise DataError(
                f"index return series lacks {len(missing)} frame dates "
                f"(first: {missing[0].isoformat()})"
            )
        values = np.array([lookup[t] for t in taus], dtype=np.float64)
    return Trajectory(
        taus=taus,
        points=embedding.points.copy(),
        state_ids=np.asarray(states.state_of_frame, dtype=np.int64).copy(),
        index_returns=values,
    )


def distances_to_reference(frame: CorrelationFrame, reference: FrameSet) -> np.ndarray:
    """Frame distance from one frame to every frame of a reference set."""
    if frame.n_assets != reference.n_assets:
        raise DataError(
            f"frame has {frame.n_assets} assets, reference has {reference.n_assets}"
        )
    if frame.epsilon != reference.epsilon:
        raise DataError(
            f"noise-suppression mismatch: frame epsilon={frame.epsilon}, "
            f"reference epsilon={reference.epsilon}"
        )
    row = pack_upper(frame.matrix)
    scale = 2.0 / float(reference.n_assets) ** 2
    return np.abs(reference.packed - row[None, :]).sum(axis=1) * scale


def classify_new_frame(
    frame: CorrelationFrame,
    reference: FrameSet,
    embedding: Embedding3D,
    states: StateModel,
    n_anchors_init: int = 5,
    max_iter: int = 500,
    tol: float = 1e-12,
) -> Classification:
    """Place a new frame in the fixed reference embedding and assign a state.

    The new point minimizes stress against all reference points (which never
    move, so history is stable under daily updates), starting from the
    centroid of its closest reference frames; the state is that of the
    nearest cluster centroid.
    """
    if len(reference) != embedding.n_points:
        raise DataError(
            f"{len(reference)} reference frames but {embedding.n_points} embedded points"
        )
    if states.n_frames != len(reference):
        raise DataError(
            f"{len(reference)} reference frames but {states.n_frames} state labels"
        )
    deltas = distances_to_reference(frame, reference)
    nearest = np.argsort(deltas, kind="stable")[: min(n_anchors_init, len(deltas))]
    init = embedding.points[nearest].mean(axis=0)
    point, _ = place_point(
        embedding.points, deltas, init, max_iter=max_iter, tol=tol
    )
    gaps = np.linalg.norm(states.centroids - point[None, :], axis=1)
    best = int(np.argmin(gaps))
    return Classification(
        state_id=best + 1,
        point=point,
        nearest_centroid_distance=float(gaps[best]),
    )
