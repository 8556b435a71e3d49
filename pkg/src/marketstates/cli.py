"""Command-line pipeline driver.

Subcommands: ``frames``, ``distances``, ``embed``, ``scan``, ``states``,
``classify``, ``synth``, ``report``. Machine-readable results go to stdout
and files; progress goes to stderr. Exit codes: 0 success, 2 usage error,
3 data error, 4 numerical failure.

Intermediate products (frames, distance matrices, embeddings) are cached on
disk keyed by content hashes, so re-running ``scan`` or ``states`` with
unchanged inputs is cheap and bit-identical to a cold run. ``MS_CACHE_DIR``
overrides the cache location.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__, clustering, dynamics, storage
from .config import (
    RunConfig,
    build_config,
    parse_date,
    parse_epsilon_grid,
    parse_k_range,
)
from .correlation import (
    FrameSet,
    ReturnTable,
    build_frames,
    epoch_correlation,
    frame_count,
    log_returns,
    power_map,
)
from .errors import DataError, MarketStatesError, UsageError
from .geometry import Embedding3D, FrameDistanceMatrix, mds_embed, pairwise_distances
from .ingest import PriceTable, load_prices, load_universe
from .synth import Regime, RegimeSpec, generate_prices, generator_metadata
from . import report as report_mod


def _sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _returns_key(returns: ReturnTable) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(returns.returns).tobytes())
    digest.update(",".join(i.ticker for i in returns.instruments).encode())
    digest.update(",".join(d.isoformat() for d in returns.dates).encode())
    return digest.hexdigest()


def _write_meta(config: RunConfig, command: str, input_paths: list[Path]) -> None:
    public = config.public_dict()
    meta = {
        "tool": "marketstates",
        "version": __version__,
        "command": command,
        "seed": config.seed,
        "config": public,
        "config_hash": _sha256_bytes(
            json.dumps(public, sort_keys=True).encode("utf-8")
        ),
        "input_hashes": {
            str(p): _sha256_file(p) for p in input_paths if p is not None
        },
        "rng": generator_metadata(),
    }
    storage.write_json(meta, config.out / "meta.json")


class _DistanceProgress:
    """Throttled pairs/sec reporting on stderr."""

    def __init__(self, label: str) -> None:
        self.label = label
        self.started = time.monotonic()
        self.last_print = 0.0

    def __call__(self, done: int, total: int) -> None:
        now = time.monotonic()
        if done < total and now - self.last_print < 1.0:
            return
        self.last_print = now
        elapsed = max(now - self.started, 1e-9)
        print(
            f"{self.label}: {done}/{total} pairs ({done / elapsed:.0f} pairs/sec)",
            file=sys.stderr,
        )


def _load_table(config: RunConfig) -> PriceTable:
    if config.prices is None:
        raise UsageError("no price file given (use --prices or a config file)")
    universe = load_universe(config.universe) if config.universe else None
    return load_prices(
        config.prices,
        config.start,
        config.end,
        universe=universe,
        wide=config.wide,
    )


# ---------------------------------------------------------------------------
# Cached pipeline stages


def _cached_frames(
    config: RunConfig, returns: ReturnTable, returns_key: str, epsilon: float
) -> FrameSet:
    cache = config.resolve_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    key = _sha256_bytes(
        f"frames|{returns_key}|{config.epoch_len}|{config.shift}|{epsilon!r}".encode()
    )
    path = cache / f"frames-{key[:24]}.msf"
    if path.exists():
        return storage.read_frames(path)
    frames = build_frames(
        returns,
        config.epoch_len,
        config.shift,
        epsilon,
        n_threads=config.n_threads(),
    )
    storage.write_frames(frames, path)
    return frames


def _cached_distances(
    config: RunConfig, frames: FrameSet, returns_key: str, epsilon: float
) -> FrameDistanceMatrix:
    cache = config.resolve_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    key = _sha256_bytes(
        f"dist|{returns_key}|{config.epoch_len}|{config.shift}|{epsilon!r}".encode()
    )
    path = cache / f"dist-{key[:24]}.npz"
    if path.exists():
        with np.load(path) as data:
            return FrameDistanceMatrix(
                distances=data["distances"],
                frame_taus=tuple(storage.days_to_date(d) for d in data["taus"]),
            )
    dist = pairwise_distances(
        frames,
        n_threads=config.n_threads(),
        progress=_DistanceProgress(f"distances eps={epsilon:g}"),
    )
    np.savez(
        path,
        distances=dist.distances,
        taus=np.array([storage.date_to_days(t) for t in dist.frame_taus], dtype=np.int64),
    )
    return dist


def _cached_embedding(
    config: RunConfig, returns: ReturnTable, returns_key: str, epsilon: float
) -> tuple[FrameSet, Embedding3D]:
    frames = _cached_frames(config, returns, returns_key, epsilon)
    cache = config.resolve_cache_dir()
    key = _sha256_bytes(
        "|".join(
            [
                "embed",
                returns_key,
                str(config.epoch_len),
                str(config.shift),
                repr(epsilon),
                str(config.dim),
                str(config.mds_restarts),
                str(config.mds_max_iter),
                repr(config.mds_tol),
                str(config.seed),
            ]
        ).encode()
    )
    path = cache / f"embed-{key[:24]}.npz"
    if path.exists():
        with np.load(path) as data:
            embedding = Embedding3D(
                points=data["points"],
                stress=float(data["stress"]),
                n_restarts_used=config.mds_restarts,
                seed=config.seed,
                degenerate=bool(data["degenerate"]),
            )
        return frames, embedding
    dist = _cached_distances(config, frames, returns_key, epsilon)
    embedding = mds_embed(
        dist,
        dim=config.dim,
        n_restarts=config.mds_restarts,
        max_iter=config.mds_max_iter,
        tol=config.mds_tol,
        seed=config.seed,
        n_threads=config.n_threads(),
    )
    np.savez(
        path,
        points=embedding.points,
        stress=embedding.stress,
        degenerate=embedding.degenerate,
    )
    return frames, embedding


# ---------------------------------------------------------------------------
# Subcommands


def cmd_frames(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    table = _load_table(config)
    returns = log_returns(table)
    frames = build_frames(
        returns,
        config.epoch_len,
        config.shift,
        config.epsilon,
        n_threads=config.n_threads(),
    )
    storage.write_frames(frames, config.out / "frames.msf")
    manifest = {
        "N": table.n_instruments,
        "T": table.n_dates,
        "F": len(frames),
        "epoch_len": config.epoch_len,
        "shift": config.shift,
        "epsilon": config.epsilon,
    }
    storage.write_json(manifest, config.out / "frames_manifest.json")
    storage.write_drop_report(table.drops, config.out / "drop_report.json")
    _write_meta(config, "frames", [config.prices, config.universe])
    if args.export_csv:
        csv_dir = config.out / "frames_csv"
        csv_dir.mkdir(exist_ok=True)
        for i, frame in enumerate(frames):
            storage.write_frame_csv(
                frame, csv_dir / f"frame-{frame.tau.isoformat()}.csv"
            )
    print(json.dumps(manifest))
    return 0


def cmd_distances(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    frames = storage.read_frames(args.frames)
    dist = pairwise_distances(
        frames,
        n_threads=config.n_threads(),
        progress=_DistanceProgress("distances"),
    )
    storage.write_distances(dist, config.out / "distances.msd")
    if args.csv:
        storage.write_distances_csv(dist, config.out / "distances.csv")
    _write_meta(config, "distances", [Path(args.frames)])
    print(json.dumps({"F": dist.size, "pairs": dist.size * (dist.size - 1) // 2}))
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    dist = storage.read_distances(args.distances)
    embedding = mds_embed(
        dist,
        dim=config.dim,
        n_restarts=config.mds_restarts,
        max_iter=config.mds_max_iter,
        tol=config.mds_tol,
        seed=config.seed,
        n_threads=config.n_threads(),
    )
    storage.write_embedding_csv(embedding, dist.frame_taus, config.out / "embedding.csv")
    _write_meta(config, "embed", [Path(args.distances)])
    print(
        json.dumps(
            {
                "F": embedding.n_points,
                "dim": embedding.dim,
                "stress": embedding.stress,
                "degenerate": embedding.degenerate,
            }
        )
    )
    return 0


def cmd_scan(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    table = _load_table(config)
    returns = log_returns(table)
    returns_key = _returns_key(returns)

    def get_embedding(epsilon: float) -> Embedding3D:
        _, embedding = _cached_embedding(config, returns, returns_key, epsilon)
        return embedding

    def on_cell(cell: clustering.LandscapeCell) -> None:
        print(
            f"scan: k={cell.k} eps={cell.epsilon:g} "
            f"sigma={cell.sigma_d_intra:.6g}",
            file=sys.stderr,
        )

    cells = clustering.landscape_scan(
        returns,
        config.epoch_len,
        config.shift,
        config.k_range,
        config.epsilon_grid,
        config.n_init,
        config.seed,
        dim=config.dim,
        mds_restarts=config.mds_restarts,
        mds_max_iter=config.mds_max_iter,
        mds_tol=config.mds_tol,
        n_threads=config.n_threads(),
        get_embedding=get_embedding,
        on_cell=on_cell,
    )
    storage.write_landscape_csv(cells, config.out / "landscape.csv")
    k_star, epsilon_star = clustering.select_optimum(cells, k_min=config.k_min)
    optimum = {"k_star": k_star, "epsilon_star": epsilon_star, "k_min": config.k_min}
    storage.write_json(optimum, config.out / "optimum.json")
    storage.write_drop_report(table.drops, config.out / "drop_report.json")
    _write_meta(config, "scan", [config.prices, config.universe])
    if args.figures:
        report_mod.render_landscape(cells, config.out / "landscape.png", config.k_min)
    print(json.dumps(optimum))
    return 0


def cmd_states(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if config.k is None:
        raise UsageError("states requires --k")
    config.out.mkdir(parents=True, exist_ok=True)
    table = _load_table(config)
    returns = log_returns(table)
    returns_key = _returns_key(returns)
    frames_eps, embedding = _cached_embedding(
        config, returns, returns_key, config.epsilon
    )
    if config.epsilon == 0.0:
        frames_raw = frames_eps
    else:
        frames_raw = _cached_frames(config, returns, returns_key, 0.0)
    result = clustering.best_kmeans(
        embedding,
        config.k,
        n_init=config.n_init,
        seed=config.seed,
        n_threads=config.n_threads(),
    )
    states = clustering.label_states(frames_raw, result, epsilon_star=config.epsilon)
    tm = dynamics.transition_counts(states)
    proxy = dynamics.index_return_proxy(returns)
    trajectory = dynamics.build_trajectory(embedding, states, proxy)

    storage.write_state_model_json(states, config.out / "statemodel.json")
    storage.write_trajectory_csv(trajectory, config.out / "trajectory.csv")
    storage.write_transitions_csv(tm, config.out / "transitions.csv")
    storage.write_embedding_csv(embedding, frames_eps.taus, config.out / "embedding.csv")
    dynamics_payload = {
        "tridiagonality_score": dynamics.tridiagonality_score(tm),
        "forbidden_transitions": [
            {"from_state": a, "to_state": b, "count": c}
            for a, b, c in dynamics.forbidden_transition_report(tm)
        ],
        "zero_probability_rows": list(tm.zero_rows),
        "probabilities_excluding_self": tm.probabilities_excluding_self().tolist(),
    }
    storage.write_json(dynamics_payload, config.out / "dynamics.json")
    storage.save_model_bundle(
        config.out / "model", states, embedding, frames_eps, table.tickers
    )
    storage.write_drop_report(table.drops, config.out / "drop_report.json")
    _write_meta(config, "states", [config.prices, config.universe])
    if args.figures:
        report_mod.render_artifacts(config.out, config.out)
    print(
        json.dumps(
            {
                "k_star": states.k_star,
                "epsilon_star": states.epsilon_star,
                "mu": [float(v) for v in states.mu],
                "tridiagonality_score": dynamics_payload["tridiagonality_score"],
            }
        )
    )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    bundle = storage.load_model_bundle(args.model)
    epoch_len = bundle.frames.epoch_len
    if config.prices is None:
        raise UsageError("classify requires --prices")
    table = load_prices(
        config.prices, config.start, config.end, universe=None, wide=config.wide
    )
    row_of = {t: i for i, t in enumerate(table.tickers)}
    missing = [t for t in bundle.tickers if t not in row_of]
    if missing:
        raise DataError(
            f"price file lacks model tickers: {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )
    if table.n_dates < epoch_len + 1:
        raise DataError(
            f"insufficient history: need {epoch_len + 1} prices per ticker, "
            f"have {table.n_dates}"
        )
    order = [row_of[t] for t in bundle.tickers]
    sliced = PriceTable(
        instruments=tuple(table.instruments[i] for i in order),
        dates=table.dates[-(epoch_len + 1) :],
        prices=table.prices[np.asarray(order), -(epoch_len + 1) :],
    )
    returns = log_returns(sliced)
    tau = returns.dates[-1]
    frame = epoch_correlation(returns, tau, epoch_len)
    if bundle.states.epsilon_star != 0.0:
        frame = power_map(frame, bundle.states.epsilon_star)
    result = dynamics.classify_new_frame(
        frame, bundle.frames, bundle.embedding, bundle.states
    )
    payload = storage.classification_dict(result, tau)
    storage.write_json(payload, config.out / "classification.json")
    _write_meta(config, "classify", [config.prices, Path(args.model) / "bundle.json"])
    print(json.dumps(payload))
    return 0


def _parse_regimes(text: str) -> tuple[Regime, ...]:
    regimes = []
    try:
        for part in text.split(","):
            duration, correlation = part.split(":")
            regimes.append(Regime(int(duration), float(correlation)))
    except ValueError:
        raise UsageError(
            f"cannot parse regimes {text!r}; expected DAYS:CORR[,DAYS:CORR...]"
        ) from None
    return tuple(regimes)


def cmd_synth(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.out.mkdir(parents=True, exist_ok=True)
    spec = RegimeSpec(
        n_stocks=args.stocks,
        regimes=_parse_regimes(args.regimes),
        noise_sigma=args.noise_sigma,
        seed=config.seed,
    )
    start = parse_date(args.start_date) if args.start_date else date(2006, 1, 2)
    table = generate_prices(spec, start=start)
    from .ingest import write_prices_csv

    write_prices_csv(table, config.out / "prices.csv")
    meta = {
        "n_stocks": spec.n_stocks,
        "regimes": [
            {"duration_days": r.duration_days, "base_correlation": r.base_correlation}
            for r in spec.regimes
        ],
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "T": table.n_dates,
        **generator_metadata(),
    }
    storage.write_json(meta, config.out / "synth_meta.json")
    _write_meta(config, "synth", [])
    print(json.dumps({"T": table.n_dates, "N": table.n_instruments}))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    artifacts = Path(args.artifacts)
    out = config.out if args.out else artifacts
    written = report_mod.render_artifacts(artifacts, out)
    if not written:
        raise DataError(f"no renderable artifacts found in {artifacts}")
    print(json.dumps({"figures": [str(p) for p in written]}))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for key in (
        "prices",
        "universe",
        "wide",
        "start",
        "end",
        "epoch_len",
        "shift",
        "epsilon",
        "epsilon_grid",
        "k",
        "k_range",
        "k_min",
        "n_init",
        "dim",
        "mds_restarts",
        "mds_max_iter",
        "mds_tol",
        "seed",
        "threads",
        "out",
        "cache_dir",
    ):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return build_config(getattr(args, "config", None), overrides)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--out", type=Path, help="output directory (default: .)")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--seed", type=int, help="PRNG seed")


def _add_ingest(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prices", type=Path, help="price CSV (date,ticker,adj_close)")
    parser.add_argument("--universe", type=Path, help="universe CSV (code,name,sector,abbrv)")
    parser.add_argument(
        "--wide", action="store_const", const=True, help="price CSV is wide format"
    )
    parser.add_argument("--start", type=parse_date, help="first date (YYYY-MM-DD)")
    parser.add_argument("--end", type=parse_date, help="last date (YYYY-MM-DD)")


def _add_epochs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epoch-len", dest="epoch_len", type=int, help="epoch length in days")
    parser.add_argument("--shift", type=int, help="days between epoch ends")


def _add_mds(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, help="embedding dimension")
    parser.add_argument("--mds-restarts", dest="mds_restarts", type=int)
    parser.add_argument("--mds-max-iter", dest="mds_max_iter", type=int)
    parser.add_argument("--mds-tol", dest="mds_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketstates",
        description="Identify market states from daily prices via correlation-frame clustering.",
    )
    parser.add_argument("--version", action="version", version=f"marketstates {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("frames", help="build correlation frames from prices")
    _add_common(p)
    _add_ingest(p)
    _add_epochs(p)
    p.add_argument("--epsilon", type=float, help="noise-suppression exponent offset")
    p.add_argument("--export-csv", action="store_true", help="also dump per-frame CSVs")
    p.set_defaults(func=cmd_frames)

    p = sub.add_parser("distances", help="all-pairs frame distance matrix")
    _add_common(p)
    p.add_argument("--frames", type=Path, required=True, help="frame file from 'frames'")
    p.add_argument("--csv", action="store_true", help="also write a CSV matrix")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("embed", help="3D stress embedding of a distance matrix")
    _add_common(p)
    _add_mds(p)
    p.add_argument("--distances", type=Path, required=True, help="distance file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("scan", help="robustness landscape over (k, epsilon)")
    _add_common(p)
    _add_ingest(p)
    _add_epochs(p)
    _add_mds(p)
    p.add_argument("--k-range", dest="k_range", type=parse_k_range, help="e.g. 1:10 or 2,4,6")
    p.add_argument(
        "--epsilon-grid",
        dest="epsilon_grid",
        type=parse_epsilon_grid,
        help="e.g. 0:0.95:0.05 or 0,0.3,0.9",
    )
    p.add_argument("--k-min", dest="k_min", type=int, help="smallest k eligible as optimum")
    p.add_argument("--n-init", dest="n_init", type=int, help="k-means restarts per cell")
    p.add_argument("--cache-dir", dest="cache_dir", type=Path)
    p.add_argument("--figures", action="store_true", help="render the landscape heatmap")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("states", help="fit the state model at fixed (k, epsilon)")
    _add_common(p)
    _add_ingest(p)
    _add_epochs(p)
    _add_mds(p)
    p.add_argument("--k", type=int, help="number of states")
    p.add_argument("--epsilon", type=float, help="noise-suppression exponent offset")
    p.add_argument("--n-init", dest="n_init", type=int, help="k-means restarts")
    p.add_argument("--cache-dir", dest="cache_dir", type=Path)
    p.add_argument("--figures", action="store_true", help="render all figures")
    p.set_defaults(func=cmd_states)

    p = sub.add_parser("classify", help="classify the newest day against a saved model")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True, help="model bundle directory")
    p.add_argument("--prices", type=Path, help="recent price CSV")
    p.add_argument(
        "--wide", action="store_const", const=True, help="price CSV is wide format"
    )
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synth", help="generate a planted-regime price CSV")
    _add_common(p)
    p.add_argument("--stocks", type=int, required=True)
    p.add_argument(
        "--regimes",
        required=True,
        help="comma list of DAYS:CORR, e.g. 400:0.15,400:0.35",
    )
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.01)
    p.add_argument("--start-date", dest="start_date", help="first price date")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render figures for emitted artifacts")
    _add_common(p)
    p.add_argument("--artifacts", type=Path, required=True, help="directory with CSV/JSON outputs")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except MarketStatesError as exc:
        print(
            json.dumps({"error": str(exc), "exit_code": exc.exit_code}),
            file=sys.stderr,
        )
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
