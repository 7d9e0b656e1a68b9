"""Efficiency measurement: wall-clock latency and a deterministic cost model.

The cost model prices one window at the selection stage against one window
at the expensive stage (default ratio 1:40, the calibrated runtime
equivalence) and reproduces the cascade speedup arithmetic independent of
hardware.  Wall-clock numbers are reported as distributions (percentiles,
CDF); acceptance thresholds on them are ratios, never absolute times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np


@dataclass
class LatencyRecord:
    query_id: str
    wall_ms: float
    ck_windows_scored: int
    etm_windows_scored: int


@dataclass
class CostModel:
    ck_cost_per_window: float = 1.0
    etm_cost_per_window: float = 40.0
    fixed_overhead: float = 0.0

    def __post_init__(self) -> None:
        if min(self.ck_cost_per_window, self.etm_cost_per_window, self.fixed_overhead) < 0:
            raise ValueError("cost model components must be non-negative")

    @classmethod
    def parse(cls, spec: str) -> "CostModel":
        """Parse ``ck=1,etm=40,overhead=0``."""
        values = {"ck": 1.0, "etm": 40.0, "overhead": 0.0}
        for part in spec.split(","):
            part = part.strip()
            if not part:
                continue
            key, _, raw = part.partition("=")
            key = key.strip()
            if key not in values:
                raise ValueError(f"unknown cost model key {key!r} (expected ck, etm, overhead)")
            values[key] = float(raw)
        return cls(values["ck"], values["etm"], values["overhead"])

    def document_cost(self, window_count: int, k: int, selector: str = "ck") -> float:
        """Cost units to score one document.

        Cascade: every window passes the selection stage, min(k, windows)
        reach the expensive stage.  selector="all" pays the expensive stage
        for every window and skips selection.
        """
        if window_count < 1:
            raise ValueError("window_count must be >= 1")
        if selector == "all":
            return self.fixed_overhead + window_count * self.etm_cost_per_window
        return (
            self.fixed_overhead
            + window_count * self.ck_cost_per_window
            + min(k, window_count) * self.etm_cost_per_window
        )


@dataclass
class SimulatedQueryCost:
    query_id: str
    cascade_cost: float
    all_cost: float

    @property
    def speedup(self) -> float:
        return self.all_cost / self.cascade_cost


def simulate_cost(
    window_counts: Mapping[str, Sequence[int]], k: int, cost_model: CostModel
) -> list[SimulatedQueryCost]:
    """Per-query cost units for the cascade at `k` versus scoring everything."""
    results = []
    for qid, counts in window_counts.items():
        cascade = sum(cost_model.document_cost(c, k, "ck") for c in counts)
        everything = sum(cost_model.document_cost(c, k, "all") for c in counts)
        results.append(SimulatedQueryCost(qid, cascade, everything))
    return results


def summarize(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty sequence")
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "p50": float(np.percentile(arr, 50)),
        "p90": float(np.percentile(arr, 90)),
        "p99": float(np.percentile(arr, 99)),
        "max": float(arr.max()),
    }


def measure_latency(
    run_query: Callable[[str], tuple[int, int]],
    query_ids: Sequence[str],
    repetitions: int = 5,
    warmup: int = 3,
) -> tuple[list[LatencyRecord], dict[str, float]]:
    """Time `run_query` per query; one record per query at its repetition median.

    `run_query(query_id)` re-ranks that query's full candidate list and
    returns (selection windows scored, expensive windows scored).  Warm-up
    passes run first and are excluded.  Timing is strictly sequential to
    avoid contention noise.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for _ in range(warmup):
        for qid in query_ids:
            run_query(qid)
    records = []
    for qid in query_ids:
        walls = []
        ck_windows = etm_windows = 0
        for _ in range(repetitions):
            start = time.perf_counter()
            ck_windows, etm_windows = run_query(qid)
            walls.append((time.perf_counter() - start) * 1000.0)
        records.append(
            LatencyRecord(
                query_id=qid,
                wall_ms=float(np.median(walls)),
                ck_windows_scored=ck_windows,
                etm_windows_scored=etm_windows,
            )
        )
    return records, summarize([r.wall_ms for r in records])


def latency_cdf(values: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Fraction of values <= bound for each grid bound (monotone step function)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid must contain at least one bound")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("need at least one latency value")
    return np.searchsorted(arr, grid, side="right") / arr.size


def parse_grid(spec: str) -> np.ndarray:
    """Parse ``start:step:stop`` (stop inclusive) into a grid of bounds."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec must be start:step:stop, got {spec!r}")
    start, step, stop = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"invalid grid spec {spec!r}")
    return np.arange(start, stop + step / 2, step)
