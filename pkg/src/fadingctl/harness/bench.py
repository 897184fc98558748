"""CPU-time comparison of the four schemes over a sweep of configs.

Times are process CPU seconds, so load from other processes does not
leak in.  Diverging runs stop early, so each timing is normalized to a full
workload: ``cpu_seconds / executed_slots * runs * horizon``.  The median
over repeats is reported; warm-up slots are run once per scheme beforehand
and not timed.
"""

from __future__ import annotations

import io
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .. import __version__
from .config import ScenarioConfig
from .runner import SCHEMES, nme_solution, simulate_run

BENCH_TAG = "fadingctl-bench v1"
BENCH_COLUMNS = ("config", "sweep", "value", "scheme", "seconds", "executed_slots")


@dataclass
class BenchRow:
    config: str
    sweep: str
    value: int
    scheme: str
    seconds: float
    executed_slots: int


def _timed_pass(cfg: ScenarioConfig, scheme: str, p_star, runs: int, horizon: int) -> tuple[float, int]:
    slots = 0
    t0 = time.process_time()
    for i in range(runs):
        slots += simulate_run(cfg, scheme, i, p_star, horizon=horizon, log_reference=False).slots
    return time.process_time() - t0, slots


def time_schemes(cfg: ScenarioConfig, schemes, p_star, runs: int, horizon: int, repeats: int = 5,
                 warmup: int = 50) -> dict[str, tuple[float, int]]:
    """Median normalized CPU seconds and executed slots per scheme.

    Repeats are interleaved across schemes so that a transient slowdown of
    the host hits every scheme rather than one.
    """
    for s in schemes:
        simulate_run(cfg, s, 0, p_star, horizon=warmup, log_reference=False)
    times = {s: [] for s in schemes}
    slots = {}
    for _ in range(repeats):
        for s in schemes:
            elapsed, slots[s] = _timed_pass(cfg, s, p_star, runs, horizon)
            times[s].append(elapsed / slots[s] * runs * horizon)
    return {s: (float(np.median(times[s])), slots[s]) for s in schemes}


def bench_cpu(configs: list[ScenarioConfig], schemes=SCHEMES, runs: int = 2, horizon: int | None = None,
              repeats: int = 5, warmup: int = 50) -> list[BenchRow]:
    rows = []
    for cfg in configs:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            p_star = nme_solution(cfg).p_star
            h = cfg.horizon if horizon is None else horizon
            for s, (sec, slots) in time_schemes(cfg, schemes, p_star, runs, h, repeats, warmup).items():
                rows.append(BenchRow(cfg.name, cfg.sweep, cfg.sweep_value() or 0, s, sec, slots))
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# {BENCH_TAG} tool_version={__version__}\n")
    buf.write(",".join(BENCH_COLUMNS) + "\n")
    for r in rows:
        buf.write(f"{r.config},{r.sweep},{r.value},{r.scheme},{r.seconds:.6g},{r.executed_slots}\n")
    return buf.getvalue()


def ordering_violations(rows: list[BenchRow]) -> list[str]:
    """Sweep points where Baseline 2 is not strictly slowest or proposed is faster than the genie."""
    by_cfg: dict[str, dict[str, float]] = {}
    for r in rows:
        by_cfg.setdefault(r.config, {})[r.scheme] = r.seconds
    bad = []
    for name, t in by_cfg.items():
        others = [v for s, v in t.items() if s != "b2"]
        if "b2" in t and others and not t["b2"] > max(others):
            bad.append(f"{name}: baseline 2 not slowest ({t})")
        if "proposed" in t and "b3" in t and t["proposed"] < t["b3"]:
            bad.append(f"{name}: proposed faster than genie ({t})")
    return bad
