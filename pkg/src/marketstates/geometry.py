"""Frame-to-frame distances and the stress-minimizing low-dimensional embedding.

The distance between two frames is the mean absolute difference over all
N*N matrix entries (a scaled L1 metric; the shared unit diagonal contributes
zero). The all-pairs matrix over F frames is the O(F^2 N^2) hot spot and is
computed in blocks, optionally across threads, with every element written
exactly once so results do not depend on scheduling.

The embedding minimizes raw stress sum_{a<b} (d_ab - delta_ab)^2 by iterative
majorization from several seeded random starts, keeping the best run. Output
orientation is canonicalized (centered, principal axes, non-negative
coordinate-wise third moment) so downstream artifacts are reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import date
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .correlation import CorrelationFrame, FrameSet
from .errors import DataError, NumericalError

# Rows per block in the pairwise scan; fixed so output is schedule-independent.
_BLOCK = 256

# Tolerated relative stress increase before a majorization step is declared
# a numerical failure (exact arithmetic guarantees non-increase).
_MONOTONE_SLACK = 1e-12

# Stress below this fraction of sum(delta^2) is an exact fit drowned in
# roundoff; iteration stops there and the monotone check ignores it.
_ZERO_STRESS_FLOOR = 1e-28


@dataclass(eq=False)
class FrameDistanceMatrix:
    """Symmetric F x F matrix of frame distances with zero diagonal."""

    distances: np.ndarray
    frame_taus: tuple[date, ...]

    @property
    def size(self) -> int:
        return self.distances.shape[0]


@dataclass(eq=False)
class Embedding3D:
    """Best-of-restarts stress-minimizing embedding of the frames.

    ``stress`` is the raw stress of the winning run; ``degenerate`` flags the
    all-zero-distance input case, where the embedding is all zeros.
    """

    points: np.ndarray
    stress: float
    n_restarts_used: int
    seed: int
    degenerate: bool = False

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def frame_distance(a: CorrelationFrame, b: CorrelationFrame) -> float:
    """Mean absolute difference over all matrix components."""
    if a.matrix.shape != b.matrix.shape:
        raise DataError(
            f"frame dimension mismatch: {a.matrix.shape} vs {b.matrix.shape}"
        )
    return float(np.abs(a.matrix - b.matrix).mean())


def pairwise_distances(
    frames: FrameSet,
    n_threads: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> FrameDistanceMatrix:
    """All-pairs frame distance matrix.

    Works on the packed upper triangles: the full-matrix mean equals
    2/N^2 times the L1 distance between packed rows. ``progress`` (if given)
    is called from the coordinating thread with (pairs_done, pairs_total).
    """
    total = len(frames)
    if total < 2:
        raise DataError(f"need at least 2 frames, got {total}")
    scale = 2.0 / float(frames.n_assets) ** 2
    packed = frames.packed
    out = np.zeros((total, total), dtype=np.float64)
    blocks = [(i, min(i + _BLOCK, total)) for i in range(0, total, _BLOCK)]
    tasks = [
        (a0, a1, b0, b1)
        for bi, (a0, a1) in enumerate(blocks)
        for (b0, b1) in blocks[bi:]
    ]
    pairs_total = total * (total - 1) // 2

    def run(task: tuple[int, int, int, int]) -> int:
        a0, a1, b0, b1 = task
        block = cdist(packed[a0:a1], packed[b0:b1], metric="cityblock")
        block *= scale
        out[a0:a1, b0:b1] = block
        if (a0, a1) != (b0, b1):
            out[b0:b1, a0:a1] = block.T
            return (a1 - a0) * (b1 - b0)
        return (a1 - a0) * (a1 - a0 - 1) // 2

    done = 0
    if n_threads is not None and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [pool.submit(run, task) for task in tasks]
            for future in as_completed(futures):
                done += future.result()
                if progress is not None:
                    progress(done, pairs_total)
    else:
        for task in tasks:
            done += run(task)
            if progress is not None:
                progress(done, pairs_total)

    np.fill_diagonal(out, 0.0)
    return FrameDistanceMatrix(distances=out, frame_taus=frames.taus)


def _validate_distance_matrix(delta: np.ndarray) -> None:
    if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
        raise DataError(f"distance matrix must be square, got shape {delta.shape}")
    if not np.array_equal(delta, delta.T):
        raise DataError("distance matrix is not symmetric")
    if np.any(delta < 0.0) or not np.all(np.isfinite(delta)):
        raise DataError("distance matrix has negative or non-finite entries")
    if np.any(np.diagonal(delta) != 0.0):
        raise DataError("distance matrix diagonal is not zero")


def _euclidean(points: np.ndarray) -> np.ndarray:
    return cdist(points, points, metric="euclidean")


def _raw_stress(d: np.ndarray, delta: np.ndarray) -> float:
    diff = d - delta
    return 0.5 * float((diff * diff).sum())


def smacof_single(
    delta: np.ndarray,
    init: np.ndarray,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> tuple[np.ndarray, float, list[float]]:
    """One majorization run from a given configuration.

    Returns (points, final stress, per-iteration stress history, entry 0 being
    the stress of ``init``). The history is non-increasing; a floating-point
    increase beyond a tiny slack raises NumericalError.
    """
    n = delta.shape[0]
    x = np.array(init, dtype=np.float64, copy=True)
    d = _euclidean(x)
    stress = _raw_stress(d, delta)
    floor = _ZERO_STRESS_FLOOR * 0.5 * float((delta * delta).sum())
    history = [stress]
    for _ in range(max_iter):
        if stress <= floor:
            break
        safe = np.where(d > 0.0, d, 1.0)
        b = np.where(d > 0.0, -delta / safe, 0.0)
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(b, -b.sum(axis=1))
        x_new = (b @ x) / n
        d = _euclidean(x_new)
        new_stress = _raw_stress(d, delta)
        if new_stress > stress * (1.0 + _MONOTONE_SLACK) + floor:
            raise NumericalError(
                f"stress increased during majorization: {stress} -> {new_stress}"
            )
        history.append(new_stress)
        improved = stress - new_stress
        x = x_new
        prev = stress
        stress = new_stress
        if improved < tol * prev:
            break
    return x, stress, history


def classical_mds(delta: np.ndarray, dim: int) -> np.ndarray:
    """Eigendecomposition embedding, usable as a warm start for majorization."""
    n = delta.shape[0]
    sq = delta * delta
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * centering @ sq @ centering
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:dim]
    vals = np.clip(eigvals[order], 0.0, None)
    points = eigvecs[:, order] * np.sqrt(vals)[None, :]
    if points.shape[1] < dim:
        points = np.pad(points, ((0, 0), (0, dim - points.shape[1])))
    return points


def _orient(points: np.ndarray) -> np.ndarray:
    """Center, align principal axes (descending variance), fix reflection signs."""
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    rotated = centered @ vt.T
    third_moment = (rotated**3).sum(axis=0)
    rotated[:, third_moment < 0.0] *= -1.0
    return rotated


def mds_embed(
    dist: FrameDistanceMatrix | np.ndarray,
    dim: int = 3,
    n_restarts: int = 4,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
    classical_start: bool = False,
    n_threads: int | None = None,
) -> Embedding3D:
    """Embed a distance matrix by stress majorization from seeded restarts.

    Restart r draws its initial configuration from an independent PRNG stream
    spawned from ``seed`` (restart 0 uses the eigendecomposition solution when
    ``classical_start`` is set). The lowest-stress run wins, ties broken by
    restart index, so the result is bit-identical for fixed inputs and seed
    regardless of thread count.
    """
    if dim < 1:
        raise DataError(f"embedding dimension must be >= 1, got {dim}")
    if n_restarts < 1:
        raise DataError(f"n_restarts must be >= 1, got {n_restarts}")
    if isinstance(dist, FrameDistanceMatrix):
        delta = dist.distances
    else:
        delta = np.asarray(dist, dtype=np.float64)
    _validate_distance_matrix(delta)
    n = delta.shape[0]

    if not delta.any():
        return Embedding3D(
            points=np.zeros((n, dim)),
            stress=0.0,
            n_restarts_used=n_restarts,
            seed=seed,
            degenerate=True,
        )

    streams = np.random.SeedSequence(seed).spawn(n_restarts)

    def run(index: int) -> tuple[float, int, np.ndarray]:
        if index == 0 and classical_start:
            init = classical_mds(delta, dim)
        else:
            rng = np.random.Generator(np.random.PCG64(streams[index]))
            init = rng.standard_normal((n, dim))
        points, stress, _ = smacof_single(delta, init, max_iter=max_iter, tol=tol)
        return stress, index, points

    if n_threads is not None and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(n_restarts)))
    else:
        results = [run(i) for i in range(n_restarts)]

    best_stress, _, best_points = min(results, key=lambda r: (r[0], r[1]))
    return Embedding3D(
        points=_orient(best_points),
        stress=best_stress,
        n_restarts_used=n_restarts,
        seed=seed,
    )


def place_point(
    anchors: np.ndarray,
    deltas: np.ndarray,
    init: np.ndarray,
    max_iter: int = 500,
    tol: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """Place one new point against frozen anchors by stress majorization.

    Minimizes sum_a (||x - anchors[a]|| - deltas[a])^2 over x alone; the
    anchor configuration never moves.
    """
    if anchors.shape[0] != deltas.shape[0]:
        raise DataError(
            f"{anchors.shape[0]} anchors but {deltas.shape[0]} distances"
        )
    x = np.array(init, dtype=np.float64, copy=True)

    def stress_at(point: np.ndarray) -> tuple[float, np.ndarray]:
        d = np.linalg.norm(point[None, :] - anchors, axis=1)
        diff = d - deltas
        return float(diff @ diff), d

    stress, d = stress_at(x)
    floor = _ZERO_STRESS_FLOOR * float(deltas @ deltas) + 1e-300
    for _ in range(max_iter):
        if stress <= floor:
            break
        safe = np.where(d > 0.0, d, 1.0)
        pull = np.where(d > 0.0, deltas / safe, 0.0)
        x_new = (anchors + pull[:, None] * (x[None, :] - anchors)).mean(axis=0)
        new_stress, d = stress_at(x_new)
        if new_stress > stress * (1.0 + _MONOTONE_SLACK) + floor:
            raise NumericalError(
                f"stress increased while placing point: {stress} -> {new_stress}"
            )
        improved = stress - new_stress
        x = x_new
        prev = stress
        stress = new_stress
        if improved < tol * prev:
            break
    return x, stress
