"""Figure rendering for the delimited artifacts.

Each function takes already-computed artifacts (or the CSV/JSON files the
CLI wrote) and renders a matplotlib figure next to them: the robustness
landscape heatmap, cluster scatter of the embedded frames, the correlation-
matrix trajectory, the transition-count map, and the state timeline with
the index-return overlay.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .clustering import LandscapeCell
from .dynamics import TransitionMatrix, Trajectory
from .storage import (
    read_embedding_csv,
    read_json,
    read_landscape_csv,
    read_trajectory_csv,
    read_transitions_csv,
)

# Calm -> crisis palette; state S1 is the weakest-correlation state.
STATE_COLORS = [
    "tab:green",
    "magenta",
    "goldenrod",
    "tab:blue",
    "red",
    "dimgray",
    "indigo",
    "darkorange",
    "teal",
    "saddlebrown",
]

plt.rcParams.update(
    {
        "figure.figsize": (7.0, 4.6),
        "font.size": 9,
        "axes.titlesize": 10,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "figure.dpi": 130,
        "savefig.bbox": "tight",
    }
)


def state_color(state_id: int) -> str:
    return STATE_COLORS[(state_id - 1) % len(STATE_COLORS)]


def render_landscape(
    cells: list[LandscapeCell], path: str | Path, k_min: int = 4
) -> Path:
    """Heatmap of sigma_d_intra over the (k, epsilon) grid, minimum marked."""
    path = Path(path)
    ks = sorted({c.k for c in cells})
    epsilons = sorted({c.epsilon for c in cells})
    grid = np.full((len(ks), len(epsilons)), np.nan)
    for cell in cells:
        grid[ks.index(cell.k), epsilons.index(cell.epsilon)] = cell.sigma_d_intra
    fig, ax = plt.subplots()
    mesh = ax.pcolormesh(grid, cmap="viridis", shading="flat")
    fig.colorbar(mesh, ax=ax, label="sigma of intra-cluster distance")
    eligible = [c for c in cells if c.k >= k_min]
    if eligible:
        best = min(eligible, key=lambda c: (c.sigma_d_intra, c.k, c.epsilon))
        ax.plot(
            epsilons.index(best.epsilon) + 0.5,
            ks.index(best.k) + 0.5,
            marker="*",
            markersize=14,
            color="red",
            label=f"min (k>={k_min}): k={best.k}, eps={best.epsilon:g}",
        )
        ax.legend(loc="upper right")
    ax.set_xticks(np.arange(len(epsilons)) + 0.5, [f"{e:g}" for e in epsilons])
    ax.set_yticks(np.arange(len(ks)) + 0.5, [str(k) for k in ks])
    ax.set_xlabel("noise suppression epsilon")
    ax.set_ylabel("number of clusters k")
    ax.set_title("Clustering robustness landscape")
    fig.savefig(path)
    plt.close(fig)
    return path


def render_state_scatter(
    points: np.ndarray, state_ids: np.ndarray, path: str | Path
) -> Path:
    """xy and xz projections of the embedded frames colored by state."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(8.4, 4.0))
    for ax, (i, j, label) in zip(axes, [(0, 1, "x-y"), (0, 2, "x-z")]):
        jj = min(j, points.shape[1] - 1)
        for state in np.unique(state_ids):
            mask = state_ids == state
            ax.scatter(
                points[mask, i],
                points[mask, jj],
                s=4,
                color=state_color(int(state)),
                label=f"S{int(state)}",
                alpha=0.7,
                linewidths=0,
            )
        ax.set_xlabel(label.split("-")[0])
        ax.set_ylabel(label.split("-")[1])
        ax.set_title(f"{label} projection")
    axes[0].legend(markerscale=3, loc="best")
    fig.suptitle("Embedded correlation frames by market state")
    fig.savefig(path)
    plt.close(fig)
    return path


def render_trajectory(trajectory: Trajectory, path: str | Path) -> Path:
    """Polyline through consecutive frames, segments colored by state."""
    path = Path(path)
    pts = trajectory.points
    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    for a in range(len(pts) - 1):
        seg = pts[a : a + 2]
        ax.plot(
            seg[:, 0],
            seg[:, min(2, pts.shape[1] - 1)],
            color=state_color(int(trajectory.state_ids[a])),
            linewidth=0.7,
        )
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    years = sorted({t.year for t in trajectory.taus})
    ax.set_title(f"Correlation-frame trajectory {years[0]}-{years[-1]}")
    fig.savefig(path)
    plt.close(fig)
    return path


def render_transitions(tm: TransitionMatrix, path: str | Path) -> Path:
    """Annotated heatmap of transition counts between states."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    mesh = ax.pcolormesh(tm.counts, cmap="magma", shading="flat")
    fig.colorbar(mesh, ax=ax, label="transition count")
    for a in range(tm.k):
        for b in range(tm.k):
            ax.text(
                b + 0.5,
                a + 0.5,
                str(int(tm.counts[a, b])),
                ha="center",
                va="center",
                color="white" if tm.counts[a, b] < tm.counts.max() / 2 else "black",
                fontsize=8,
            )
    labels = [f"S{s}" for s in range(1, tm.k + 1)]
    ax.set_xticks(np.arange(tm.k) + 0.5, labels)
    ax.set_yticks(np.arange(tm.k) + 0.5, labels)
    ax.set_xlabel("to state")
    ax.set_ylabel("from state")
    ax.set_title("Market-state transition counts")
    fig.savefig(path)
    plt.close(fig)
    return path


def render_timeline(trajectory: Trajectory, path: str | Path) -> Path:
    """State sequence over time, with the index-return proxy overlaid."""
    path = Path(path)
    taus = trajectory.taus
    states = trajectory.state_ids
    fig, ax = plt.subplots(figsize=(9.0, 3.4))
    ax.scatter(
        taus,
        states,
        c=[state_color(int(s)) for s in states],
        s=3,
        linewidths=0,
    )
    ax.set_yticks(
        range(1, int(states.max()) + 1),
        [f"S{s}" for s in range(1, int(states.max()) + 1)],
    )
    ax.set_ylabel("market state")
    if trajectory.index_returns is not None:
        twin = ax.twinx()
        twin.plot(taus, trajectory.index_returns, color="black", linewidth=0.4, alpha=0.7)
        twin.set_ylabel("index return proxy")
    ax.set_title("Market-state evolution")
    fig.savefig(path)
    plt.close(fig)
    return path


def render_artifacts(artifacts_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render figures for whichever delimited artifacts exist in a directory."""
    artifacts_dir = Path(artifacts_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    landscape = artifacts_dir / "landscape.csv"
    if landscape.exists():
        cells = read_landscape_csv(landscape)
        optimum = artifacts_dir / "optimum.json"
        k_min = read_json(optimum).get("k_min", 4) if optimum.exists() else 4
        written.append(render_landscape(cells, out_dir / "landscape.png", k_min=k_min))

    embedding_csv = artifacts_dir / "embedding.csv"
    statemodel = artifacts_dir / "statemodel.json"
    if embedding_csv.exists() and statemodel.exists():
        _, points = read_embedding_csv(embedding_csv)
        payload = read_json(statemodel)
        state_ids = np.array([s["state_id"] for s in payload["states"]])
        written.append(
            render_state_scatter(points, state_ids, out_dir / "states_scatter.png")
        )

    trajectory_csv = artifacts_dir / "trajectory.csv"
    if trajectory_csv.exists():
        trajectory = read_trajectory_csv(trajectory_csv)
        written.append(render_trajectory(trajectory, out_dir / "trajectory.png"))
        written.append(render_timeline(trajectory, out_dir / "state_timeline.png"))

    transitions_csv = artifacts_dir / "transitions.csv"
    if transitions_csv.exists():
        tm = read_transitions_csv(transitions_csv)
        written.append(render_transitions(tm, out_dir / "transitions.png"))

    return written
