"""Report containers and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

CSV_COLUMNS = ("problem", "m", "scheme", "tau", "rank_or_theta", "error", "order", "runtime_ms", "seed")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class SweepRow:
    tau: float
    rank_mode: str
    error: float | None
    rel_error: float | None
    order: float | None = None
    runtime_ms: float | None = None
    status: str = "ok"
    final_rank: int | None = None


@dataclass
class ConvergenceReport:
    problem: str
    rows: list[SweepRow]
    orders: list[tuple[str, float, float | None]]
    diagnostics: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def errors(self, rank_mode: str) -> list[tuple[float, float | None]]:
        return [(r.tau, r.error) for r in self.rows if r.rank_mode == rank_mode]

    def orders_for(self, rank_mode: str) -> list[tuple[float, float | None]]:
        return [(tau, p) for mode, tau, p in self.orders if mode == rank_mode]

    @property
    def diverged(self) -> bool:
        return any(r.status != "ok" for r in self.rows)

    def write_csv(self, path, include_timing: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        m = self.metadata.get("m", "")
        seed = self.metadata.get("seed", "")
        scheme = self.metadata.get("scheme", "lowrank_strang")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                err = _fmt(r.error) if r.status == "ok" else r.status
                w.writerow([
                    self.problem, m, scheme, _fmt(r.tau), r.rank_mode, err, _fmt(r.order),
                    _fmt(round(r.runtime_ms, 3)) if include_timing and r.runtime_ms is not None else "",
                    seed,
                ])
        return path

    def to_json(self) -> dict:
        return {
            "problem": self.problem,
            "rows": [asdict(r) for r in self.rows],
            "orders": [{"rank_mode": m, "tau": t, "order": p} for m, t, p in self.orders],
            "diagnostics": self.diagnostics,
            "metadata": self.metadata,
        }


@dataclass
class RankRecord:
    step: int
    t: float
    rank: int
    tail_norm: float
    floored: bool


@dataclass
class RankHistory:
    records: list[RankRecord]
    final_state: object = None

    @property
    def ranks(self) -> list[int]:
        return [r.rank for r in self.records]

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("step", "t", "rank", "tail_norm", "floored"))
            for r in self.records:
                w.writerow((r.step, repr(r.t), r.rank, repr(r.tail_norm), int(r.floored)))
        return path


def versions() -> dict:
    import numpy
    import scipy

    from .. import __version__

    return {
        "lrstrang": __version__,
        "python": sys.version.split()[0],
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def write_manifest(path, command: str, config: dict, wall_time_s: float, outputs: list, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": config,
        "versions": versions(),
        "wall_time_s": wall_time_s,
        "outputs": [str(o) for o in outputs],
    }
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path
