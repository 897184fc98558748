"""Command-line entry point: ``fadingctl <subcommand> --config PATH ...``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from ..controllability import classify, structure_transform
from ..nme import existence_condition, solve_fixed_point
from .bench import bench_cpu, bench_csv, ordering_violations
from .config import bundled_family, load_scenario
from .report import Thresholds, summarize
from .runner import SCHEMES, nme_solution, run_experiment, simulate_run, trajectory_csv

_SCHEME_ALIASES = {"1": "b1", "2": "b2", "3": "b3"}


def _scheme(name: str) -> str:
    name = _SCHEME_ALIASES.get(name, name)
    if name not in SCHEMES:
        raise argparse.ArgumentTypeError(f"unknown scheme {name!r}")
    return name


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _scenario(args):
    cfg = load_scenario(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_classify(args) -> int:
    cfg = _scenario(args)
    v = classify(cfg.plant, cfg.channel, cfg.solver.tol)
    sd = structure_transform(cfg.plant, cfg.solver.tol)
    S = cfg.plant.S
    lines = [f"regime: {v.regime.value}", f"condition: {v.matched_condition}", f"eta_B: {sd.eta_B}",
             "eigenvalue            rank(A_tilde - lambda I)"]
    for lam in np.linalg.eigvals(sd.A_tilde):
        r = np.linalg.matrix_rank(sd.A_tilde - lam * np.eye(S))
        lines.append(f"{complex(lam):<22.4g}{r}")
    _emit("\n".join(lines), args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = _scenario(args)
    s = cfg.solver
    rep = solve_fixed_point(cfg.plant, cfg.weights, cfg.channel, s.xi, s.sample_count, s.seed, tol=s.tol)
    cert = existence_condition(cfg.plant, cfg.weights, cfg.channel, min(s.sample_count, 20_000), s.seed)
    with np.printoptions(precision=8, suppress=True):
        lines = [f"converged = {rep.converged}", f"iterations = {rep.iterations}",
                 f"residual_norm = {rep.residual_norm:.3e}", f"diagnosis = {rep.diagnosis or 'none'}",
                 f"p_star = {np.array2string(rep.p_star, separator=', ').replace(chr(10), '')}",
                 f"existence_estimate = {cert.estimate:.6f}", f"existence_ci_halfwidth = {cert.ci_halfwidth:.6f}",
                 f"existence_satisfied = {cert.satisfied.value}"]
    print("\n".join(lines))
    if args.out:
        rows = "\n".join(f"{i},{r:.10g}" for i, r in enumerate(rep.history))
        Path(args.out).write_text("iteration,residual_norm\n" + rows + "\n")
    return 0


def _single_run(args, scheme: str) -> int:
    cfg = _scenario(args)
    p_star = nme_solution(cfg).p_star
    res = simulate_run(cfg, scheme, 0, p_star)
    _emit(trajectory_csv(res, cfg.digest()), args.out)
    return 0


def cmd_learn(args) -> int:
    return _single_run(args, "proposed")


def cmd_baseline(args) -> int:
    return _single_run(args, args.scheme or "b1")


def cmd_run(args) -> int:
    cfg = _scenario(args)
    schemes = [args.scheme] if args.scheme else list(SCHEMES)
    _emit(run_experiment(cfg, schemes, workers=args.workers), args.out)
    return 0


def cmd_bench(args) -> int:
    paths = [Path(p) for p in args.config] if args.config else [
        p for fam in args.family for p in bundled_family(fam + "_")]
    configs = [load_scenario(p) for p in paths]
    rows = bench_cpu(configs, runs=args.runs or 2, horizon=args.horizon, repeats=args.repeats)
    _emit(bench_csv(rows), args.out)
    bad = ordering_violations(rows)
    for b in bad:
        print(f"ordering violation: {b}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    th = Thresholds.from_file(args.thresholds) if args.thresholds else None
    for path in args.csv:
        print(f"== {path}")
        print(summarize(Path(path).read_text(), path, th))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fadingctl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True, sim=False):
        p.add_argument("--config", required=True, help="scenario file or bundled name (e.g. fig3.cfg)")
        p.add_argument("--out", help="write output here instead of stdout")
        if seed:
            p.add_argument("--seed", type=int, help="override the master seed")
        if sim:
            p.add_argument("--runs", type=int)
            p.add_argument("--horizon", type=int)
        return p

    common(sub.add_parser("classify", help="controllability regime")).set_defaults(fn=cmd_classify)
    common(sub.add_parser("solve", help="offline NME solution and existence certificate")).set_defaults(
        fn=cmd_solve)
    common(sub.add_parser("learn", help="one online-learning run, per-slot CSV"), sim=True).set_defaults(
        fn=cmd_learn)
    p = common(sub.add_parser("baseline", help="one baseline run, per-slot CSV"), sim=True)
    p.add_argument("--scheme", type=_scheme, default="b1")
    p.set_defaults(fn=cmd_baseline)
    p = common(sub.add_parser("run", help="Monte-Carlo experiment, checkpoint metrics CSV"), sim=True)
    p.add_argument("--scheme", type=_scheme, help="restrict to one scheme")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="CPU-time sweep")
    p.add_argument("--config", nargs="+", help="explicit config files")
    p.add_argument("--family", nargs="+", default=["fig5", "fig6", "fig7"], help="bundled sweep families")
    p.add_argument("--runs", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="summarize metrics or bench CSV files")
    p.add_argument("csv", nargs="+")
    p.add_argument("--thresholds", help="INI file with a [thresholds] section")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
