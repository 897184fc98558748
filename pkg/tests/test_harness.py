import subprocess
import sys
import warnings

import numpy as np
import pytest

from fadingctl.harness.bench import BenchRow, bench_csv, ordering_violations
from fadingctl.harness.cli import main
from fadingctl.harness.config import (ConfigParseError, DimensionError, WeightError, bundled_family, load_scenario,
                                      parse_scenario)
from fadingctl.harness.report import ReportError, Thresholds, read_rows, summarize
from fadingctl.harness.runner import (SCHEMES, aggregate, checkpoints, run_experiment, run_stream, simulate_all,
                                      simulate_run)

from conftest import FIG3_A, FIG3_B

BASE = """
[experiment]
horizon = 20
runs = 2
master_seed = 1
[plant]
A = [[0.5, 0.1], [0.0, 0.8]]
B = [[1.0], [0.5]]
W = 0.05 * eye(2)
[weights]
Q = eye(2)
R = eye(2)
M = eye(1)
[channel]
n_t = 2
p_access = 0.5
[solver]
sample_count = 2000
"""


def test_bundled_fig3_matches_caption(fig3):
    assert np.array_equal(fig3.plant.A, FIG3_A) and np.array_equal(fig3.plant.B, FIG3_B)
    assert np.allclose(fig3.plant.W, 0.05 * np.eye(3))
    assert np.array_equal(fig3.weights.Q, np.eye(3)) and np.array_equal(fig3.weights.R, np.eye(3))
    assert np.array_equal(fig3.weights.M, np.eye(2))
    assert (fig3.channel.n_t, fig3.channel.n_r, fig3.channel.p_access) == (3, 2, 0.5)


def test_bundled_sweeps():
    fam = bundled_family("fig5_")
    assert [load_scenario(p).plant.S for p in fam] == list(range(4, 13))
    for p in fam:
        cfg = load_scenario(p)
        S = cfg.plant.S
        A = cfg.plant.A
        assert np.allclose(np.diag(A), 1.01) and np.allclose(np.diag(A, 1), -0.1) and np.allclose(np.diag(A, -1), -0.2)
        i, j = np.indices(cfg.plant.B.shape) + 1
        assert np.allclose(cfg.plant.B, 1.0 / (i + j))
        assert S == cfg.sweep_value()
    assert [load_scenario(p).channel.n_t for p in bundled_family("fig6_")] == [2, 3, 4, 5, 6]
    assert [load_scenario(p).channel.n_r for p in bundled_family("fig7_")] == [2, 3, 4, 5, 6]


def test_config_errors():
    with pytest.raises(ConfigParseError):
        parse_scenario("[plant\nA = 1")
    with pytest.raises(ConfigParseError, match="plant.A"):
        parse_scenario(BASE.replace("A = [[0.5, 0.1], [0.0, 0.8]]", "A = [[0.5, 0.1], [0.0, oops]]"))
    with pytest.raises(DimensionError, match="weights.R"):
        parse_scenario(BASE.replace("R = eye(2)", "R = eye(3)"))
    with pytest.raises(WeightError, match="weights.Q"):
        parse_scenario(BASE.replace("Q = eye(2)", "Q = [[1, 0], [0, -1]]"))
    with pytest.raises(DimensionError, match="channel.n_r"):
        parse_scenario(BASE.replace("n_t = 2", "n_t = 2\nn_r = 3"))
    with pytest.raises(FileNotFoundError):
        load_scenario("no_such_config.cfg")
    # distinct messages
    msgs = set()
    for bad in ("A = [[0.5, 0.1], [0.0, oops]]", ):
        try:
            parse_scenario(BASE.replace("A = [[0.5, 0.1], [0.0, 0.8]]", bad))
        except ConfigParseError as exc:
            msgs.add(str(exc))
    assert msgs


def test_digest_tracks_content():
    a = parse_scenario(BASE)
    assert a.digest() == parse_scenario(BASE).digest()
    assert a.digest() != parse_scenario(BASE.replace("master_seed = 1", "master_seed = 2")).digest()


def test_checkpoints():
    assert checkpoints(1) == [1]
    assert checkpoints(10_000) == [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000]
    assert checkpoints(30) == [1, 2, 5, 10, 20, 30]


def test_streams_are_distinct():
    draws = {(i, s): run_stream(0, i, s).random() for i in range(3) for s in SCHEMES}
    assert len(set(draws.values())) == len(draws)


def test_single_slot_experiment():
    cfg = parse_scenario(BASE.replace("horizon = 20", "horizon = 1").replace("runs = 2", "runs = 1"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        text = run_experiment(cfg)
    kind, rows = read_rows(text)
    assert kind == "metrics" and len(rows) == 4 and {r.scheme for r in rows} == set(SCHEMES)
    assert text.startswith("# fadingctl-metrics v1 config_sha256=" + cfg.digest())


def test_worker_count_does_not_change_output():
    cfg = parse_scenario(BASE)
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=2)
    assert a == b


def test_aggregate_excludes_diverged_runs():
    cfg = parse_scenario(BASE)
    res = simulate_all(cfg, ("proposed",), runs=3)["proposed"]
    res[1].diverged_at = 5
    rows = aggregate(res, "proposed", cfg.horizon)
    by_k = {r.k: r for r in rows}
    assert by_k[2].diverged_fraction == 0 and by_k[5].diverged_fraction == pytest.approx(1 / 3)
    kept = [r for i, r in enumerate(res) if i != 1]
    assert by_k[20].mean_x_norm_sq == pytest.approx(np.mean([r.x_norm_sq[18:20].mean() for r in kept]))


def test_genie_run_needs_kernel():
    with pytest.raises(ValueError):
        simulate_run(parse_scenario(BASE), "b3", 0)


def test_report_errors_and_thresholds(tmp_path):
    with pytest.raises(ReportError, match="no rows"):
        read_rows("")
    cfg = parse_scenario(BASE)
    text = run_experiment(cfg)
    with pytest.raises(ReportError, match="no rows"):
        read_rows("\n".join(text.splitlines()[:2]))
    broken = text.splitlines()
    broken[3] = "1,proposed,abc"
    with pytest.raises(ReportError, match=":4:"):
        read_rows("\n".join(broken))
    out = summarize(text)
    for s in SCHEMES:
        assert f"\n{s} " in out
    th = tmp_path / "th.ini"
    th.write_text("[thresholds]\nbaseline_diverged = 0.0\n")
    assert Thresholds.from_file(th).baseline_diverged == 0.0
    assert "[PASS] b1 instability" in summarize(text, thresholds=Thresholds.from_file(th))


def test_bench_ordering_checker():
    rows = [BenchRow("c", "S", 4, s, t, 10) for s, t in zip(SCHEMES, (2.0, 1.0, 3.0, 1.5))]
    assert ordering_violations(rows) == []
    rows[2].seconds = 1.9
    assert len(ordering_violations(rows)) == 1
    assert read_rows(bench_csv(rows))[0] == "bench"


def test_cli_subcommands(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(BASE)
    assert main(["classify", "--config", str(cfg)]) == 0
    assert "regime:" in capsys.readouterr().out
    assert main(["solve", "--config", str(cfg)]) == 0
    assert "converged = True" in capsys.readouterr().out
    out = tmp_path / "learn.csv"
    assert main(["learn", "--config", str(cfg), "--horizon", "5", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1] == "k,x_norm_sq,u_err_sq,p_err,stage_cost"
    assert main(["baseline", "--config", str(cfg), "--scheme", "2", "--horizon", "5"]) == 0
    assert main(["run", "--config", str(cfg), "--scheme", "b3", "--out", str(tmp_path / "m.csv")]) == 0
    assert main(["report", str(tmp_path / "m.csv")]) == 0
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_as_module():
    r = subprocess.run([sys.executable, "-m", "fadingctl", "classify", "--config", "fig3.cfg"],
                       capture_output=True, text=True, check=True)
    assert "IntermittentlyControllable" in r.stdout and "b.1" in r.stdout
