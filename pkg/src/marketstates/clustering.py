"""Multi-start k-means on the embedded frames and the (k, epsilon) landscape.

Cluster robustness is scored by the spread, across many randomized k-means
restarts, of the mean point-to-centroid distance: a low standard deviation
means the partition barely depends on the initialization. Scanning that
score over cluster counts and noise-suppression strengths yields a landscape
whose minimum (restricted to k >= k_min) selects the working (k*, eps*).

Initialization is deliberately plain uniform seeding (k distinct data
points): a spreading initializer would suppress exactly the restart-to-
restart variability the score measures.

States are labeled S1..Sk by ascending mean raw correlation of their member
frames, so higher state indices mean a more strongly correlated market.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .correlation import FrameSet, ReturnTable, build_frames
from .errors import DataError, NumericalError
from .geometry import Embedding3D, mds_embed, pairwise_distances

# Relative slack on Lloyd's non-increasing inertia before declaring failure.
_INERTIA_SLACK = 1e-9


@dataclass(eq=False)
class KMeansResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    d_intra: float
    seed: int


@dataclass(frozen=True)
class LandscapeCell:
    """Robustness score of one (k, epsilon) grid cell over n_init restarts."""

    k: int
    epsilon: float
    sigma_d_intra: float
    mean_d_intra: float
    n_init: int


@dataclass(eq=False)
class StateModel:
    """Frames labeled with states ordered by mean raw correlation.

    ``state_of_frame`` holds ids 1..k_star; ``mu[s-1]`` is state s's mean
    over member frames of the frame's mean off-diagonal raw correlation,
    non-decreasing by construction. ``centroids`` are reordered to match.
    """

    k_star: int
    epsilon_star: float
    state_of_frame: np.ndarray
    centroids: np.ndarray
    mu: np.ndarray
    taus: tuple[date, ...]

    @property
    def n_frames(self) -> int:
        return len(self.state_of_frame)


class IntraStats(NamedTuple):
    sigma_d_intra: float
    mean_d_intra: float


def _as_points(points: Embedding3D | np.ndarray) -> np.ndarray:
    if isinstance(points, Embedding3D):
        return points.points
    return np.asarray(points, dtype=np.float64)


def _repair_empty_clusters(
    assign: np.ndarray, dist_own: np.ndarray, counts: np.ndarray
) -> None:
    """Reseed each empty cluster with the point farthest from its centroid.

    Donors are restricted to clusters with >= 2 members so no new empties
    appear. Mutates ``assign``/``dist_own``/``counts`` in place.
    """
    for cluster in range(len(counts)):
        if counts[cluster] > 0:
            continue
        candidates = counts[assign] > 1
        if not candidates.any():
            raise NumericalError("cannot repair empty cluster: no donor available")
        masked = np.where(candidates, dist_own, -np.inf)
        point = int(np.argmax(masked))
        counts[assign[point]] -= 1
        assign[point] = cluster
        counts[cluster] += 1
        dist_own[point] = -np.inf  # pin so later repairs pick another point


def kmeans(
    points: Embedding3D | np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
) -> KMeansResult:
    """Lloyd iterations from a uniformly seeded start until assignments settle.

    Inertia is non-increasing across iterations (asserted); empty clusters
    are repaired by reseeding with the point farthest from its own centroid.
    """
    data = _as_points(points)
    n = data.shape[0]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    centroids = data[rng.choice(n, size=k, replace=False)].copy()
    prev_assign: np.ndarray | None = None
    prev_inertia = np.inf
    assign = np.zeros(n, dtype=np.intp)
    for _ in range(max_iter):
        sq = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(sq, axis=1)
        counts = np.bincount(assign, minlength=k)
        if (counts == 0).any():
            dist_own = sq[np.arange(n), assign].astype(np.float64)
            _repair_empty_clusters(assign, dist_own, counts)
            counts = np.bincount(assign, minlength=k)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        centroids = np.stack(
            [
                np.bincount(assign, weights=data[:, j], minlength=k)
                for j in range(data.shape[1])
            ],
            axis=1,
        )
        centroids /= counts[:, None]
        inertia = float(((data - centroids[assign]) ** 2).sum())
        if inertia > prev_inertia * (1.0 + _INERTIA_SLACK):
            raise NumericalError(
                f"inertia increased during Lloyd iteration: {prev_inertia} -> {inertia}"
            )
        prev_inertia = inertia
        prev_assign = assign
    diffs = data - centroids[assign]
    inertia = float((diffs * diffs).sum())
    d_intra = float(np.linalg.norm(diffs, axis=1).mean())
    return KMeansResult(
        k=k,
        assignments=assign,
        centroids=centroids,
        inertia=inertia,
        d_intra=d_intra,
        seed=seed,
    )


def mean_distance_to_centroid(points: np.ndarray, result: KMeansResult) -> float:
    """Default intra-cluster size metric: mean point-to-own-centroid distance."""
    return result.d_intra


def within_cluster_pairwise_mean(points: np.ndarray, result: KMeansResult) -> float:
    """Alternative metric: mean pairwise distance inside clusters."""
    data = _as_points(points)
    total = 0.0
    pairs = 0
    for cluster in range(result.k):
        members = data[result.assignments == cluster]
        m = len(members)
        if m < 2:
            continue
        diff = members[:, None, :] - members[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        total += dist[np.triu_indices(m, k=1)].sum()
        pairs += m * (m - 1) // 2
    return total / pairs if pairs else 0.0


IntraMetric = Callable[[np.ndarray, KMeansResult], float]


def intra_cluster_sigma(
    points: Embedding3D | np.ndarray,
    k: int,
    n_init: int,
    seed: int,
    max_iter: int = 300,
    metric: IntraMetric = mean_distance_to_centroid,
    n_threads: int | None = None,
) -> IntraStats:
    """Spread of the intra-cluster size across n_init seeded restarts.

    Run i uses seed ``seed + i``; the returned sigma is the population
    standard deviation of the n_init metric values, so the result does not
    depend on how runs are scheduled.
    """
    if n_init < 2:
        raise DataError(f"n_init must be >= 2, got {n_init}")
    data = _as_points(points)

    def one(i: int) -> float:
        return metric(data, kmeans(data, k, seed + i, max_iter=max_iter))

    if n_threads is not None and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            values = np.fromiter(pool.map(one, range(n_init)), dtype=np.float64)
    else:
        values = np.fromiter((one(i) for i in range(n_init)), dtype=np.float64)
    return IntraStats(float(np.std(values)), float(np.mean(values)))


def embedding_for_epsilon(
    returns: ReturnTable,
    epoch_len: int,
    shift: int,
    epsilon: float,
    dim: int = 3,
    n_restarts: int = 4,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
    n_threads: int | None = None,
    distance_progress: Callable[[int, int], None] | None = None,
) -> tuple[FrameSet, Embedding3D]:
    """Frames -> distances -> embedding for one noise-suppression value."""
    frames = build_frames(returns, epoch_len, shift, epsilon, n_threads=n_threads)
    dist = pairwise_distances(frames, n_threads=n_threads, progress=distance_progress)
    embedding = mds_embed(
        dist,
        dim=dim,
        n_restarts=n_restarts,
        max_iter=max_iter,
        tol=tol,
        seed=seed,
        n_threads=n_threads,
    )
    return frames, embedding


def landscape_scan(
    returns: ReturnTable,
    epoch_len: int,
    shift: int,
    k_range: Sequence[int],
    epsilon_grid: Sequence[float],
    n_init: int,
    seed: int,
    dim: int = 3,
    mds_restarts: int = 4,
    mds_max_iter: int = 300,
    mds_tol: float = 1e-6,
    kmeans_max_iter: int = 300,
    metric: IntraMetric = mean_distance_to_centroid,
    n_threads: int | None = None,
    get_embedding: Callable[[float], Embedding3D] | None = None,
    on_cell: Callable[[LandscapeCell], None] | None = None,
) -> list[LandscapeCell]:
    """Robustness score for every (k, epsilon) pair.

    One embedding is built per epsilon (frames, and hence distances, depend
    on it); all k values are evaluated on that embedding. Cells are emitted
    epsilon-major in the given grid order. ``get_embedding`` overrides the
    per-epsilon pipeline (used by the CLI cache).
    """
    if not k_range or not len(epsilon_grid):
        raise DataError("k_range and epsilon_grid must be non-empty")
    cells: list[LandscapeCell] = []
    for epsilon in epsilon_grid:
        if get_embedding is not None:
            embedding = get_embedding(epsilon)
        else:
            _, embedding = embedding_for_epsilon(
                returns,
                epoch_len,
                shift,
                epsilon,
                dim=dim,
                n_restarts=mds_restarts,
                max_iter=mds_max_iter,
                tol=mds_tol,
                seed=seed,
                n_threads=n_threads,
            )
        for k in k_range:
            stats = intra_cluster_sigma(
                embedding,
                k,
                n_init,
                seed,
                max_iter=kmeans_max_iter,
                metric=metric,
                n_threads=n_threads,
            )
            cell = LandscapeCell(
                k=int(k),
                epsilon=float(epsilon),
                sigma_d_intra=stats.sigma_d_intra,
                mean_d_intra=stats.mean_d_intra,
                n_init=n_init,
            )
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells


def select_optimum(
    cells: Iterable[LandscapeCell], k_min: int = 4
) -> tuple[int, float]:
    """(k, epsilon) of the minimum sigma among cells with k >= k_min.

    Ties break toward smaller k, then smaller epsilon.
    """
    eligible = [c for c in cells if c.k >= k_min]
    if not eligible:
        raise DataError(f"no landscape cells with k >= {k_min}")
    best = min(eligible, key=lambda c: (c.sigma_d_intra, c.k, c.epsilon))
    return best.k, best.epsilon


def best_kmeans(
    points: Embedding3D | np.ndarray,
    k: int,
    n_init: int,
    seed: int,
    max_iter: int = 300,
    n_threads: int | None = None,
) -> KMeansResult:
    """Lowest-inertia run over seeds seed..seed+n_init-1 (ties: earliest seed)."""
    data = _as_points(points)

    def one(i: int) -> KMeansResult:
        return kmeans(data, k, seed + i, max_iter=max_iter)

    if n_threads is not None and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, range(n_init)))
    else:
        results = [one(i) for i in range(n_init)]
    best_index = min(range(n_init), key=lambda i: (results[i].inertia, i))
    return results[best_index]


def label_states(
    frames_raw: FrameSet,
    result: KMeansResult,
    epsilon_star: float = 0.0,
) -> StateModel:
    """Relabel clusters S1..Sk by ascending mean raw correlation.

    ``frames_raw`` must be the raw (epsilon = 0) frames aligned 1:1 with the
    clustering; mu always uses raw correlations so states are comparable
    across noise-suppression settings.
    """
    if frames_raw.epsilon != 0.0:
        raise DataError(
            f"state means require raw frames (epsilon=0), got {frames_raw.epsilon}"
        )
    if len(frames_raw) != len(result.assignments):
        raise DataError(
            f"{len(frames_raw)} frames but {len(result.assignments)} assignments"
        )
    mean_off = frames_raw.mean_offdiag()
    mu = np.array(
        [mean_off[result.assignments == c].mean() for c in range(result.k)]
    )
    order = np.argsort(mu, kind="stable")
    rank = np.empty(result.k, dtype=np.intp)
    rank[order] = np.arange(result.k)
    return StateModel(
        k_star=result.k,
        epsilon_star=float(epsilon_star),
        state_of_frame=(rank[result.assignments] + 1).astype(np.int64),
        centroids=result.centroids[order].copy(),
        mu=mu[order],
        taus=frames_raw.taus,
    )
