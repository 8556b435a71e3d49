"""Market state identification from daily stock prices.

Pipeline: aligned prices -> log-returns -> sliding-epoch correlation frames
(noise-suppressed by a power map) -> frame-to-frame distances -> 3D stress
embedding -> multi-restart k-means with a (k, epsilon) robustness landscape
-> states ordered by mean correlation -> transition-matrix risk analytics.
"""

from .errors import DataError, MarketStatesError, NumericalError, UsageError
from .ingest import (
    DropRecord,
    Instrument,
    PriceTable,
    load_prices,
    load_universe,
    write_prices_csv,
)
from .correlation import (
    CorrelationFrame,
    FrameSet,
    ReturnTable,
    build_frames,
    epoch_correlation,
    frame_count,
    log_returns,
    power_map,
)
from .geometry import (
    Embedding3D,
    FrameDistanceMatrix,
    classical_mds,
    frame_distance,
    mds_embed,
    pairwise_distances,
)
from .clustering import (
    IntraStats,
    KMeansResult,
    LandscapeCell,
    StateModel,
    best_kmeans,
    intra_cluster_sigma,
    kmeans,
    label_states,
    landscape_scan,
    select_optimum,
)
from .dynamics import (
    Classification,
    IndexReturnSeries,
    TransitionMatrix,
    Trajectory,
    build_trajectory,
    classify_new_frame,
    forbidden_transition_report,
    index_return_proxy,
    transition_counts,
    tridiagonality_score,
)
from .synth import Regime, RegimeSpec, generate_prices, generate_returns

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "CorrelationFrame",
    "DataError",
    "DropRecord",
    "Embedding3D",
    "FrameDistanceMatrix",
    "FrameSet",
    "IndexReturnSeries",
    "Instrument",
    "IntraStats",
    "KMeansResult",
    "LandscapeCell",
    "MarketStatesError",
    "NumericalError",
    "PriceTable",
    "Regime",
    "RegimeSpec",
    "ReturnTable",
    "StateModel",
    "Trajectory",
    "TransitionMatrix",
    "UsageError",
    "best_kmeans",
    "build_frames",
    "build_trajectory",
    "classical_mds",
    "classify_new_frame",
    "epoch_correlation",
    "forbidden_transition_report",
    "frame_count",
    "frame_distance",
    "generate_prices",
    "generate_returns",
    "index_return_proxy",
    "intra_cluster_sigma",
    "kmeans",
    "label_states",
    "landscape_scan",
    "load_prices",
    "load_universe",
    "log_returns",
    "mds_embed",
    "pairwise_distances",
    "power_map",
    "select_optimum",
    "transition_counts",
    "tridiagonality_score",
    "write_prices_csv",
]
