"""Monte-Carlo orchestration: per-run closed loops, aggregation and CSV output.

Every run draws from its own stream seeded by
``SeedSequence([master_seed, run_index, scheme_id])``, so results do not
depend on how runs are spread over worker processes.  Within a run the
stream is consumed in the order: channel draw of slot 1, plant noise of
slot 1, channel draw of slot 2, and so on.  Baselines additionally draw
their exploration noise right after the next slot's channel draw.
"""

from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..baselines import (ExtendedTransition, Transition, _channel_context, baseline1_kernel, baseline1_step,
                         baseline2_kernel, baseline2_step)
from ..learner import STATE_DIVERGENCE, LearnerDiverged, control_action, run_online
from ..model import ChannelDraw, ExtendedState
from ..nme import SolveReport, solve_fixed_point
from ..numerics import spectral_norm
from .config import ScenarioConfig

SCHEMES = ("proposed", "b1", "b2", "b3")
SCHEME_ID = {name: i for i, name in enumerate(SCHEMES)}
CSV_COLUMNS = ("k", "scheme", "median_u_err_sq", "mean_x_norm_sq", "mean_stage_cost", "diverged_fraction",
               "median_p_err_rel", "p_within_5pct")
CSV_TAG = "fadingctl-metrics v1"


def run_stream(master_seed: int, run_index: int, scheme: str) -> np.random.Generator:
    """Independent generator for one (run, scheme) pair."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, run_index, SCHEME_ID[scheme]]))


def checkpoints(horizon: int) -> list[int]:
    """Log-spaced slots 1, 2, 5, 10, 20, 50, ... up to ``horizon`` (always included)."""
    out, decade = [], 1
    while decade <= horizon:
        out.extend(m * decade for m in (1, 2, 5) if m * decade <= horizon)
        decade *= 10
    if out[-1] != horizon:
        out.append(horizon)
    return out


@dataclass
class RunResult:
    """Per-slot arrays of one run; entries after divergence are NaN."""

    x_norm_sq: np.ndarray
    u_err_sq: np.ndarray
    stage_cost: np.ndarray
    p_err_rel: np.ndarray
    diverged_at: int | None
    slots: int   # slots actually simulated


def nme_solution(cfg: ScenarioConfig) -> SolveReport:
    s = cfg.solver
    rep = solve_fixed_point(cfg.plant, cfg.weights, cfg.channel, s.xi, s.sample_count, s.seed, tol=s.tol)
    if not rep.converged:
        warnings.warn(f"{cfg.name}: NME fixed point not converged ({rep.diagnosis}); using last iterate",
                      RuntimeWarning)
    return rep


def _run_baseline(cfg: ScenarioConfig, scheme: str, rng, p_star, horizon) -> RunResult:
    model, weights, ch = cfg.plant, cfg.weights, cfg.channel
    bs = cfg.baselines
    kw = dict(forgetting=bs.forgetting, explore_var=bs.explore_var, explore_decay=bs.explore_decay,
              init_scale=bs.init_scale, improve_every=bs.improve_every)
    if scheme == "b1":
        qk = baseline1_kernel(model.S, ch.n_t, **kw)
    else:
        qk = baseline2_kernel(model.S, ch.n_r, ch.n_t, **kw)
    A, B, L = model.A, model.B, model.noise_factor
    Q, R, M = weights.Q, weights.R, weights.M
    S, n_r, n_t, p_acc = model.S, ch.n_r, ch.n_t, ch.p_access
    tr_M = float(np.trace(M))
    logs = np.full((3, horizon), np.nan)
    x = model.x0.copy()
    H, delta = rng.standard_normal((n_r, n_t)), int(rng.random() < p_acc)
    u = qk.policy(x if scheme == "b1" else _channel_context(x, delta, H)) + qk.explore(rng)
    diverged_at = None
    for j in range(horizon):
        if p_star is not None:
            u_star = control_action(p_star, ExtendedState(x, ChannelDraw(H, delta)), model, weights,
                                    cfg.literal_eq9)
            logs[1, j] = float(np.sum((u - u_star) ** 2))
        cost = x @ Q @ x + u @ R @ u + tr_M
        if delta:
            hu = H @ u
            cost += hu @ M @ hu
        logs[0, j] = x @ x
        logs[2, j] = cost
        x_next = A @ x + B @ (H @ u) if delta else A @ x
        if not cfg.noise_free:
            x_next = x_next + B @ rng.standard_normal(n_r) + L @ rng.standard_normal(S)
        H_next, delta_next = rng.standard_normal((n_r, n_t)), int(rng.random() < p_acc)
        if not np.all(np.isfinite(x_next)) or x_next @ x_next > STATE_DIVERGENCE ** 2:
            diverged_at = j + 1
            break
        if scheme == "b1":
            qk, u = baseline1_step(qk, Transition(x, u, cost, x_next), rng)
        else:
            obs = ExtendedTransition(x, delta, H, u, cost, x_next, delta_next, H_next)
            qk, u = baseline2_step(qk, obs, rng)
        if not np.all(np.isfinite(u)):
            diverged_at = j + 1
            break
        x, H, delta = x_next, H_next, delta_next
    slots = horizon if diverged_at is None else diverged_at
    return RunResult(logs[0], logs[1], logs[2], np.full(horizon, np.nan), diverged_at, slots)


def simulate_run(cfg: ScenarioConfig, scheme: str, run_index: int, p_star=None, horizon: int | None = None,
                 log_reference: bool = True) -> RunResult:
    """One closed-loop run of ``scheme``; ``p_star`` is the genie kernel / error reference."""
    horizon = cfg.horizon if horizon is None else horizon
    rng = run_stream(cfg.master_seed, run_index, scheme)
    ref = p_star if log_reference else None
    if scheme in ("b1", "b2"):
        return _run_baseline(cfg, scheme, rng, ref, horizon)
    if scheme == "b3" and p_star is None:
        raise ValueError("the genie scheme needs the NME solution")
    learn = scheme == "proposed"
    try:
        log = run_online(cfg.plant, cfg.weights, cfg.channel, cfg.schedule, horizon, rng,
                         p_ref=ref, p0=None if learn else p_star, literal_eq9=cfg.literal_eq9,
                         noise_free=cfg.noise_free, learn=learn, p_err_slots=checkpoints(horizon))
    except LearnerDiverged as exc:
        nan = np.full(horizon, np.nan)
        return RunResult(nan, nan.copy(), nan.copy(), nan.copy(), exc.slot, exc.slot)
    p_err = log.p_err / spectral_norm(p_star) if (learn and ref is not None) else np.full(horizon, np.nan)
    return RunResult(log.x_norm_sq, log.u_err_sq, log.stage_cost, p_err, log.diverged_at, log.completed)


def _task(args):
    cfg, scheme, i, p_star, horizon = args
    return simulate_run(cfg, scheme, i, p_star, horizon)


def simulate_all(cfg: ScenarioConfig, schemes=SCHEMES, workers: int = 1, p_star=None,
                 horizon: int | None = None, runs: int | None = None) -> dict[str, list[RunResult]]:
    """All runs of all schemes, grouped by scheme and ordered by run index."""
    runs = cfg.runs if runs is None else runs
    if p_star is None:
        p_star = nme_solution(cfg).p_star
    tasks = [(cfg, s, i, p_star, horizon) for s in schemes for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_task(t) for t in tasks]
    out = {s: [] for s in schemes}
    for (_, s, _, _, _), r in zip(tasks, results):
        out[s].append(r)
    return out


@dataclass
class MetricsRow:
    k: int
    scheme: str
    median_u_err_sq: float
    mean_x_norm_sq: float
    mean_stage_cost: float
    diverged_fraction: float
    median_p_err_rel: float
    p_within_5pct: float


def _window_mean(a: np.ndarray, k: int, frac: float) -> float:
    w = max(1, math.ceil(frac * k))
    return float(np.mean(a[k - w:k]))


def aggregate(results: list[RunResult], scheme: str, horizon: int, window_frac: float = 0.1) -> list[MetricsRow]:
    """Checkpoint metrics over runs.

    Per-slot quantities are first averaged over the trailing window
    ``(k - ceil(window_frac*k), k]`` within each run; runs diverged by slot
    ``k`` are excluded from medians/means but counted in the diverged fraction.
    """
    rows = []
    n = len(results)
    for k in checkpoints(horizon):
        alive = [r for r in results if r.diverged_at is None or r.diverged_at > k]
        nan = float("nan")

        def stat(fn, attr):
            vals = [_window_mean(getattr(r, attr), k, window_frac) for r in alive]
            vals = [v for v in vals if not math.isnan(v)]
            return float(fn(vals)) if vals else nan

        p_final = np.array([r.p_err_rel[k - 1] for r in results])
        has_p = not np.all(np.isnan(p_final))
        rows.append(MetricsRow(
            k=k, scheme=scheme,
            median_u_err_sq=stat(np.median, "u_err_sq"),
            mean_x_norm_sq=stat(np.mean, "x_norm_sq"),
            mean_stage_cost=stat(np.mean, "stage_cost"),
            diverged_fraction=(n - len(alive)) / n if n else nan,
            median_p_err_rel=float(np.nanmedian(p_final)) if has_p else nan,
            p_within_5pct=float(np.mean(np.nan_to_num(p_final, nan=np.inf) < 0.05)) if has_p else nan,
        ))
    return rows


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(v)
    return "nan" if math.isnan(v) else f"{v:.10g}"


def write_csv(rows: list[MetricsRow], digest: str, stream=None) -> str:
    buf = io.StringIO() if stream is None else stream
    buf.write(f"# {CSV_TAG} config_sha256={digest} tool_version={__version__}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue() if stream is None else ""


def run_experiment(cfg: ScenarioConfig, schemes=SCHEMES, workers: int = 1, p_star=None) -> str:
    """Simulate every scheme and return the metrics CSV as text."""
    results = simulate_all(cfg, schemes, workers, p_star)
    rows = [row for s in schemes for row in aggregate(results[s], s, cfg.horizon, cfg.window_frac)]
    return write_csv(rows, cfg.digest())


def trajectory_csv(result: RunResult, digest: str) -> str:
    """Per-slot CSV of a single run (columns k, x_norm_sq, u_err_sq, p_err, stage_cost)."""
    buf = io.StringIO()
    buf.write(f"# fadingctl-trajectory v1 config_sha256={digest} tool_version={__version__}\n")
    buf.write("k,x_norm_sq,u_err_sq,p_err,stage_cost\n")
    for j in range(result.slots):
        vals = (j + 1, result.x_norm_sq[j], result.u_err_sq[j], result.p_err_rel[j], result.stage_cost[j])
        buf.write(",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()
