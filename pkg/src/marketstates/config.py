"""Run configuration: defaults, key=value config files, CLI-flag override.

Defaults follow the standard protocol: 20-day epochs shifted by 1 day,
cluster counts 1..10, noise suppression 0 to 0.95 in steps of 0.05, 1000
k-means initializations, and a minimum of 4 clusters when selecting the
optimum. Values from a config file are overridden by explicitly supplied
command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path

from .errors import UsageError


def default_epsilon_grid() -> list[float]:
    return [round(0.05 * i, 2) for i in range(20)]  # 0.00 .. 0.95


def default_k_range() -> list[int]:
    return list(range(1, 11))


def parse_k_range(text: str) -> list[int]:
    """``lo:hi`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse k range {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise UsageError(f"k range must contain integers >= 1: {text!r}")
    return values


def parse_epsilon_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive up to rounding) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            values = []
            current = start
            while current <= stop + 1e-9:
                values.append(round(current, 10))
                current += step
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse epsilon grid {text!r}") from None
    if not values or any(not (0.0 <= v < 1.0) for v in values):
        raise UsageError(f"epsilon values must lie in [0, 1): {text!r}")
    return values


def parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise UsageError(f"cannot parse date {text!r} (expected YYYY-MM-DD)") from None


@dataclass
class RunConfig:
    prices: Path | None = None
    universe: Path | None = None
    wide: bool = False
    start: date = date.min
    end: date = date.max
    epoch_len: int = 20
    shift: int = 1
    epsilon: float = 0.0
    epsilon_grid: list[float] = field(default_factory=default_epsilon_grid)
    k: int | None = None
    k_range: list[int] = field(default_factory=default_k_range)
    k_min: int = 4
    n_init: int = 1000
    dim: int = 3
    mds_restarts: int = 4
    mds_max_iter: int = 300
    mds_tol: float = 1e-6
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: Path = Path(".")
    cache_dir: Path | None = None

    def resolve_cache_dir(self) -> Path:
        if self.cache_dir is not None:
            return self.cache_dir
        env = os.environ.get("MS_CACHE_DIR")
        if env:
            return Path(env)
        return self.out / "cache"

    def n_threads(self) -> int | None:
        return self.threads if self.threads > 1 else None

    def public_dict(self) -> dict:
        """JSON-safe view used for hashing and the meta manifest."""
        out: dict = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, date):
                value = value.isoformat()
            out[f.name] = value
        return out


_PARSERS = {
    "prices": Path,
    "universe": Path,
    "wide": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "start": parse_date,
    "end": parse_date,
    "epoch_len": int,
    "shift": int,
    "epsilon": float,
    "epsilon_grid": parse_epsilon_grid,
    "k": int,
    "k_range": parse_k_range,
    "k_min": int,
    "n_init": int,
    "dim": int,
    "mds_restarts": int,
    "mds_max_iter": int,
    "mds_tol": float,
    "seed": int,
    "threads": int,
    "out": Path,
    "cache_dir": Path,
}


def read_config_file(path: str | Path) -> dict:
    """Parse a ``key=value`` file (# comments and blank lines ignored)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](value.strip())
        except UsageError:
            raise
        except (ValueError, TypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def build_config(file_path: str | Path | None, overrides: dict) -> RunConfig:
    """Defaults, then config file, then explicit flag overrides."""
    config = RunConfig()
    layers = []
    if file_path is not None:
        layers.append(read_config_file(file_path))
    layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            setattr(config, key, value)
    return config
