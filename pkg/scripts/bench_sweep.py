"""CPU time per slot across the state-size, transmit- and receive-antenna sweeps.

    python scripts/bench_sweep.py --repeats 5 --out results/bench.csv
"""

import argparse
from pathlib import Path

from fadingctl.harness import load_scenario
from fadingctl.harness.bench import bench_cpu, bench_csv
from fadingctl.harness.config import bundled_family
from fadingctl.harness.report import summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--family", nargs="+", default=["fig5", "fig6", "fig7"])
    ap.add_argument("--runs", type=int, default=2)
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", default="results/bench.csv")
    args = ap.parse_args()
    configs = [load_scenario(p) for fam in args.family for p in bundled_family(fam + "_")]
    rows = bench_cpu(configs, runs=args.runs, horizon=args.horizon, repeats=args.repeats)
    text = bench_csv(rows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(summarize(text, str(out)))


if __name__ == "__main__":
    main()
