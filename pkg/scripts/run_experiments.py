"""Monte-Carlo experiments on the bundled fig3/fig4 scenarios.

Writes checkpoint metrics CSVs to ``results/`` and prints a pass/fail
summary per scenario.  Example:

    python scripts/run_experiments.py --workers 4
    python scripts/run_experiments.py --scenario fig3 --runs 10 --horizon 2000
"""

import argparse
import dataclasses
import time
from pathlib import Path

from fadingctl.harness import load_scenario, run_experiment
from fadingctl.harness.report import summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", nargs="+", default=["fig3", "fig4"])
    ap.add_argument("--runs", type=int)
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name in args.scenario:
        cfg = load_scenario(f"{name}.cfg")
        overrides = {k: v for k, v in (("runs", args.runs), ("horizon", args.horizon)) if v is not None}
        cfg = dataclasses.replace(cfg, **overrides)
        t0 = time.perf_counter()
        text = run_experiment(cfg, workers=args.workers)
        path = outdir / f"{name}_metrics.csv"
        path.write_text(text)
        print(f"== {name}: {cfg.runs} runs x {cfg.horizon} slots in {time.perf_counter() - t0:.0f}s -> {path}")
        print(summarize(text, str(path)))


if __name__ == "__main__":
    main()
