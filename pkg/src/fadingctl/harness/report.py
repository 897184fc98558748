"""Plain-text summaries of metrics and benchmark CSV files."""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, fields

from .bench import BENCH_COLUMNS, BENCH_TAG, BenchRow, ordering_violations
from .runner import CSV_COLUMNS, CSV_TAG, MetricsRow


class ReportError(ValueError):
    pass


@dataclass
class Thresholds:
    p_within_5pct: float = 0.95         # fraction of learner runs within 5% of the NME solution
    u_err_ratio: float = 0.01           # median u error at the last checkpoint relative to k=100
    x_growth: float = 2.0               # allowed growth of mean ||x||^2 between k=1e3 and the last checkpoint
    baseline_diverged: float = 0.9      # baselines 1/2 count as unstable above this diverged fraction
    baseline_x_floor: float = 1e6       # ... or above this final mean ||x||^2

    @classmethod
    def from_file(cls, path) -> "Thresholds":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ReportError(f"threshold file not found: {path}")
        kw = {f.name: cp.getfloat("thresholds", f.name) for f in fields(cls) if cp.has_option("thresholds", f.name)}
        return cls(**kw)


def read_rows(text: str, source: str = "<csv>"):
    """Parse a metrics or bench CSV; returns ``(kind, rows)``."""
    lines = text.splitlines()
    if not lines:
        raise ReportError(f"{source}: no rows")
    head = lines[0]
    if head.startswith(f"# {CSV_TAG}"):
        kind, cols = "metrics", CSV_COLUMNS
    elif head.startswith(f"# {BENCH_TAG}"):
        kind, cols = "bench", BENCH_COLUMNS
    else:
        raise ReportError(f"{source}:1: missing version header")
    if len(lines) < 2 or tuple(lines[1].split(",")) != cols:
        raise ReportError(f"{source}:2: unexpected column header")
    rows = []
    for lineno, rec in enumerate(csv.reader(lines[2:]), start=3):
        if len(rec) != len(cols):
            raise ReportError(f"{source}:{lineno}: expected {len(cols)} fields, got {len(rec)}")
        try:
            if kind == "metrics":
                rows.append(MetricsRow(int(rec[0]), rec[1], *map(float, rec[2:])))
            else:
                rows.append(BenchRow(rec[0], rec[1], int(rec[2]), rec[3], float(rec[4]), int(rec[5])))
        except ValueError as exc:
            raise ReportError(f"{source}:{lineno}: {exc}") from None
    if not rows:
        raise ReportError(f"{source}: no rows")
    return kind, rows


def _at(rows, k):
    best = [r for r in rows if r.k <= k]
    return best[-1] if best else None


def check_metrics(rows: list[MetricsRow], th: Thresholds) -> list[tuple[str, bool, str]]:
    """Pass/fail lines for the thresholds that the present schemes allow."""
    by = {}
    for r in rows:
        by.setdefault(r.scheme, []).append(r)
    out = []
    if "proposed" in by:
        rs = by["proposed"]
        last = rs[-1]
        if not math.isnan(last.p_within_5pct):
            out.append(("proposed kernel convergence", last.p_within_5pct >= th.p_within_5pct,
                        f"{last.p_within_5pct:.3f} of runs within 5% at k={last.k}"))
        early = _at(rs, 100)
        if early is not None and early.k == 100 and last.k > 100:
            ratio = last.median_u_err_sq / early.median_u_err_sq
            out.append(("proposed action error decay", ratio < th.u_err_ratio,
                        f"median u error ratio k={last.k}/k=100: {ratio:.3g}"))
    for s in ("proposed", "b3"):
        if s not in by:
            continue
        rs = by[s]
        last, mid = rs[-1], _at(rs, 1000)
        ok = last.diverged_fraction == 0
        msg = f"diverged {last.diverged_fraction:.2f}"
        if mid is not None and mid.k == 1000 and last.k > 1000:
            growth = last.mean_x_norm_sq / mid.mean_x_norm_sq
            ok = ok and growth <= th.x_growth
            msg += f", mean ||x||^2 growth k={last.k}/k=1000: {growth:.3g}"
        out.append((f"{s} closed-loop stability", ok, msg))
    for s in ("b1", "b2"):
        if s not in by:
            continue
        last = by[s][-1]
        unstable = last.diverged_fraction >= th.baseline_diverged or (
            not math.isnan(last.mean_x_norm_sq) and last.mean_x_norm_sq >= th.baseline_x_floor)
        out.append((f"{s} instability under fading", unstable,
                    f"diverged {last.diverged_fraction:.2f}, final mean ||x||^2 {last.mean_x_norm_sq:.3g}"))
    return out


def summarize(text: str, source: str = "<csv>", thresholds: Thresholds | None = None) -> str:
    th = thresholds or Thresholds()
    kind, rows = read_rows(text, source)
    lines = []
    if kind == "bench":
        lines.append(f"{'config':<14}{'scheme':<10}{'seconds':>12}")
        for r in rows:
            lines.append(f"{r.config:<14}{r.scheme:<10}{r.seconds:>12.4g}")
        bad = ordering_violations(rows)
        lines.append(f"[{'PASS' if not bad else 'FAIL'}] CPU ordering (baseline 2 slowest, proposed >= genie)")
        lines.extend(f"  {b}" for b in bad)
        return "\n".join(lines)
    finals = {}
    for r in rows:
        finals[r.scheme] = r
    lines.append(f"{'scheme':<10}{'k':>7}{'med u err^2':>14}{'mean |x|^2':>14}{'mean cost':>12}{'diverged':>10}")
    for s, r in finals.items():
        lines.append(f"{s:<10}{r.k:>7}{r.median_u_err_sq:>14.4g}{r.mean_x_norm_sq:>14.4g}"
                     f"{r.mean_stage_cost:>12.4g}{r.diverged_fraction:>10.2f}")
    for name, ok, msg in check_metrics(rows, th):
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg}")
    return "\n".join(lines)
