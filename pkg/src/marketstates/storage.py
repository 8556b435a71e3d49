"""On-disk formats: binary frame and distance files, CSV/JSON artifacts.

Binary layouts are little-endian. Frame file ("MSF1"): header
``4s magic, u32 N, u32 F, u32 epoch_len, u32 shift, f64 epsilon`` followed by
F blocks of N(N-1)/2 f64 upper-triangle entries plus the frame date as
days-since-1970-01-01 i64. Distance file ("MSD1"): header ``4s magic, u32 F``,
the packed upper triangle as f32 (values are computed and held in double
precision in memory; single precision halves the footprint on disk), then
F i64 dates.

All text artifacts format floats with ``repr`` so rewriting identical data
yields identical bytes.
"""

from __future__ import annotations

import csv
import json
import struct
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .clustering import LandscapeCell, StateModel
from .correlation import CorrelationFrame, FrameSet
from .dynamics import Classification, TransitionMatrix, Trajectory
from .errors import DataError
from .geometry import Embedding3D, FrameDistanceMatrix
from .ingest import DropRecord

FRAME_MAGIC = b"MSF1"
DIST_MAGIC = b"MSD1"

_EPOCH = date(1970, 1, 1)

_FRAME_HEADER = struct.Struct("<4sIIIId")
_DIST_HEADER = struct.Struct("<4sI")


def date_to_days(day: date) -> int:
    return (day - _EPOCH).days


def days_to_date(days: int) -> date:
    return _EPOCH + timedelta(days=int(days))


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# Binary frame file


def write_frames(frames: FrameSet, path: str | Path) -> None:
    path = Path(path)
    n = frames.n_assets
    half = n * (n - 1) // 2
    with open(path, "wb") as handle:
        handle.write(
            _FRAME_HEADER.pack(
                FRAME_MAGIC,
                n,
                len(frames),
                frames.epoch_len,
                frames.shift,
                float(frames.epsilon),
            )
        )
        for f in range(len(frames)):
            row = np.ascontiguousarray(frames.packed[f], dtype="<f8")
            if row.size != half:
                raise DataError(f"frame {f} has {row.size} entries, expected {half}")
            handle.write(row.tobytes())
            handle.write(struct.pack("<q", date_to_days(frames.taus[f])))


def read_frames(path: str | Path) -> FrameSet:
    path = Path(path)
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read frame file {path}: {exc}") from exc
    if len(blob) < _FRAME_HEADER.size:
        raise DataError(f"{path}: truncated frame file")
    magic, n, count, epoch_len, shift, epsilon = _FRAME_HEADER.unpack_from(blob, 0)
    if magic != FRAME_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {FRAME_MAGIC!r}")
    half = n * (n - 1) // 2
    block = half * 8 + 8
    expected = _FRAME_HEADER.size + count * block
    if len(blob) != expected:
        raise DataError(
            f"{path}: size {len(blob)} does not match header (expected {expected})"
        )
    packed = np.empty((count, half), dtype=np.float64)
    taus: list[date] = []
    offset = _FRAME_HEADER.size
    for f in range(count):
        packed[f] = np.frombuffer(blob, dtype="<f8", count=half, offset=offset)
        offset += half * 8
        (days,) = struct.unpack_from("<q", blob, offset)
        offset += 8
        taus.append(days_to_date(days))
    return FrameSet(
        taus=tuple(taus),
        packed=packed,
        n_assets=int(n),
        epoch_len=int(epoch_len),
        shift=int(shift),
        epsilon=float(epsilon),
    )


def write_frame_csv(frame: CorrelationFrame, path: str | Path) -> None:
    """Full-matrix CSV dump of one frame, for debugging."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tau", frame.tau.isoformat()])
        writer.writerow(["epsilon", _fmt(frame.epsilon)])
        for row in frame.matrix:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# Binary distance file


def write_distances(dist: FrameDistanceMatrix, path: str | Path) -> None:
    path = Path(path)
    count = dist.size
    iu = np.triu_indices(count, k=1)
    condensed = dist.distances[iu].astype("<f4")
    with open(path, "wb") as handle:
        handle.write(_DIST_HEADER.pack(DIST_MAGIC, count))
        handle.write(condensed.tobytes())
        days = np.array(
            [date_to_days(t) for t in dist.frame_taus], dtype="<i8"
        )
        handle.write(days.tobytes())


def read_distances(path: str | Path) -> FrameDistanceMatrix:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read distance file {path}: {exc}") from exc
    if len(blob) < _DIST_HEADER.size:
        raise DataError(f"{path}: truncated distance file")
    magic, count = _DIST_HEADER.unpack_from(blob, 0)
    if magic != DIST_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {DIST_MAGIC!r}")
    pairs = count * (count - 1) // 2
    expected = _DIST_HEADER.size + pairs * 4 + count * 8
    if len(blob) != expected:
        raise DataError(
            f"{path}: size {len(blob)} does not match header (expected {expected})"
        )
    offset = _DIST_HEADER.size
    condensed = np.frombuffer(blob, dtype="<f4", count=pairs, offset=offset)
    offset += pairs * 4
    days = np.frombuffer(blob, dtype="<i8", count=count, offset=offset)
    square = np.zeros((count, count), dtype=np.float64)
    iu = np.triu_indices(count, k=1)
    square[iu] = condensed
    square[iu[1], iu[0]] = condensed
    taus = tuple(days_to_date(d) for d in days)
    return FrameDistanceMatrix(distances=square, frame_taus=taus)


def write_distances_csv(dist: FrameDistanceMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tau"] + [t.isoformat() for t in dist.frame_taus])
        for tau, row in zip(dist.frame_taus, dist.distances):
            writer.writerow([tau.isoformat()] + [_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# CSV / JSON artifacts


def write_embedding_csv(embedding: Embedding3D, taus: tuple[date, ...], path: str | Path) -> None:
    if embedding.n_points != len(taus):
        raise DataError(
            f"{embedding.n_points} embedded points but {len(taus)} dates"
        )
    axes = ["x", "y", "z", *(f"w{i}" for i in range(3, embedding.dim))][: embedding.dim]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tau"] + axes)
        for tau, point in zip(taus, embedding.points):
            writer.writerow([tau.isoformat()] + [_fmt(v) for v in point])


def read_embedding_csv(path: str | Path) -> tuple[tuple[date, ...], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "tau":
            raise DataError(f"{path}: not an embedding CSV")
        taus: list[date] = []
        rows: list[list[float]] = []
        for row in reader:
            taus.append(date.fromisoformat(row[0]))
            rows.append([float(v) for v in row[1:]])
    return tuple(taus), np.array(rows, dtype=np.float64)


def write_landscape_csv(cells: list[LandscapeCell], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["k", "epsilon", "sigma_d_intra", "mean_d_intra", "n_init"])
        for cell in cells:
            writer.writerow(
                [
                    cell.k,
                    _fmt(cell.epsilon),
                    _fmt(cell.sigma_d_intra),
                    _fmt(cell.mean_d_intra),
                    cell.n_init,
                ]
            )


def read_landscape_csv(path: str | Path) -> list[LandscapeCell]:
    cells: list[LandscapeCell] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            cells.append(
                LandscapeCell(
                    k=int(row["k"]),
                    epsilon=float(row["epsilon"]),
                    sigma_d_intra=float(row["sigma_d_intra"]),
                    mean_d_intra=float(row["mean_d_intra"]),
                    n_init=int(row["n_init"]),
                )
            )
    return cells


def state_model_dict(states: StateModel) -> dict:
    return {
        "k_star": int(states.k_star),
        "epsilon_star": float(states.epsilon_star),
        "mu": [float(v) for v in states.mu],
        "states": [
            {"tau": tau.isoformat(), "state_id": int(sid)}
            for tau, sid in zip(states.taus, states.state_of_frame)
        ],
    }


def write_state_model_json(states: StateModel, path: str | Path) -> None:
    write_json(state_model_dict(states), path)


def write_transitions_csv(tm: TransitionMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["from_state", "to_state", "count", "probability"])
        for a in range(tm.k):
            for b in range(tm.k):
                writer.writerow(
                    [a + 1, b + 1, int(tm.counts[a, b]), _fmt(tm.probabilities[a, b])]
                )


def read_transitions_csv(path: str | Path) -> TransitionMatrix:
    rows: list[tuple[int, int, int, float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            rows.append(
                (
                    int(row["from_state"]),
                    int(row["to_state"]),
                    int(row["count"]),
                    float(row["probability"]),
                )
            )
    if not rows:
        raise DataError(f"{path}: empty transition table")
    k = max(max(a, b) for a, b, _, _ in rows)
    counts = np.zeros((k, k), dtype=np.int64)
    probabilities = np.zeros((k, k), dtype=np.float64)
    for a, b, count, probability in rows:
        counts[a - 1, b - 1] = count
        probabilities[a - 1, b - 1] = probability
    sums = counts.sum(axis=1)
    zero_rows = tuple(int(i + 1) for i in np.flatnonzero(sums == 0))
    return TransitionMatrix(
        k=k, counts=counts, probabilities=probabilities, zero_rows=zero_rows
    )


def write_trajectory_csv(trajectory: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tau", "x", "y", "z", "state_id", "index_return"])
        for i, tau in enumerate(trajectory.taus):
            point = trajectory.points[i]
            extra = (
                ""
                if trajectory.index_returns is None
                else _fmt(trajectory.index_returns[i])
            )
            writer.writerow(
                [tau.isoformat()]
                + [_fmt(v) for v in point[:3]]
                + [int(trajectory.state_ids[i]), extra]
            )


def read_trajectory_csv(path: str | Path) -> Trajectory:
    taus: list[date] = []
    points: list[list[float]] = []
    state_ids: list[int] = []
    index_returns: list[float] = []
    has_returns = True
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            taus.append(date.fromisoformat(row["tau"]))
            points.append([float(row["x"]), float(row["y"]), float(row["z"])])
            state_ids.append(int(row["state_id"]))
            if row["index_return"]:
                index_returns.append(float(row["index_return"]))
            else:
                has_returns = False
    if not taus:
        raise DataError(f"{path}: empty trajectory")
    return Trajectory(
        taus=tuple(taus),
        points=np.array(points, dtype=np.float64),
        state_ids=np.array(state_ids, dtype=np.int64),
        index_returns=np.array(index_returns) if has_returns else None,
    )


def classification_dict(result: Classification, tau: date) -> dict:
    return {
        "tau": tau.isoformat(),
        "state_id": int(result.state_id),
        "point": [float(v) for v in result.point],
        "nearest_centroid_distance": float(result.nearest_centroid_distance),
    }


def write_drop_report(drops: tuple[DropRecord, ...], path: str | Path) -> None:
    payload = [
        {
            "ticker": d.ticker,
            "missing_dates_count": d.missing_dates_count,
            "first_missing": d.first_missing.isoformat(),
        }
        for d in drops
    ]
    write_json(payload, path)


def write_json(payload, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# Model bundle (everything classify needs)


def save_model_bundle(
    directory: str | Path,
    states: StateModel,
    embedding: Embedding3D,
    frames: FrameSet,
    tickers: tuple[str, ...],
) -> None:
    """Persist a fitted model: labeled states, embedding, reference frames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_state_model_json(states, directory / "statemodel.json")
    np.savez(
        directory / "bundle.npz",
        packed=frames.packed,
        taus=np.array([date_to_days(t) for t in frames.taus], dtype=np.int64),
        points=embedding.points,
        centroids=states.centroids,
        state_of_frame=states.state_of_frame,
        mu=states.mu,
    )
    write_json(
        {
            "k_star": int(states.k_star),
            "epsilon_star": float(states.epsilon_star),
            "epoch_len": int(frames.epoch_len),
            "shift": int(frames.shift),
            "n_assets": int(frames.n_assets),
            "tickers": list(tickers),
            "stress": float(embedding.stress),
            "mds_seed": int(embedding.seed),
            "mds_restarts": int(embedding.n_restarts_used),
        },
        directory / "bundle.json",
    )


class ModelBundle:
    """A fitted model reloaded from disk."""

    def __init__(
        self,
        states: StateModel,
        embedding: Embedding3D,
        frames: FrameSet,
        tickers: tuple[str, ...],
    ) -> None:
        self.states = states
        self.embedding = embedding
        self.frames = frames
        self.tickers = tickers


def load_model_bundle(directory: str | Path) -> ModelBundle:
    directory = Path(directory)
    manifest = read_json(directory / "bundle.json")
    with np.load(directory / "bundle.npz") as data:
        packed = data["packed"]
        taus = tuple(days_to_date(d) for d in data["taus"])
        points = data["points"]
        centroids = data["centroids"]
        state_of_frame = data["state_of_frame"]
        mu = data["mu"]
    frames = FrameSet(
        taus=taus,
        packed=packed,
        n_assets=int(manifest["n_assets"]),
        epoch_len=int(manifest["epoch_len"]),
        shift=int(manifest["shift"]),
        epsilon=float(manifest["epsilon_star"]),
    )
    states = StateModel(
        k_star=int(manifest["k_star"]),
        epsilon_star=float(manifest["epsilon_star"]),
        state_of_frame=state_of_frame,
        centroids=centroids,
        mu=mu,
        taus=taus,
    )
    embedding = Embedding3D(
        points=points,
        stress=float(manifest["stress"]),
        n_restarts_used=int(manifest["mds_restarts"]),
        seed=int(manifest["mds_seed"]),
    )
    return ModelBundle(
        states=states,
        embedding=embedding,
        frames=frames,
        tickers=tuple(manifest["tickers"]),
    )
