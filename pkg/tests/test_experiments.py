import csv
import io
import math
import subprocess
import sys

import pytest

from edgesched.cli import main
from edgesched.experiments import (
    ResultRow,
    SweepParam,
    aggregate,
    device_subset,
    fmt,
    improvement_pct,
    parse_grid,
    sweep_jobs,
    sweep_weights,
)
from edgesched.scenario import ConfigError
from edgesched.scheduler import WeightConfig

SMALL = ["--set", "arrivals.count=8", "--set", "arrivals.horizon=20"]

HEADER = (
    "scenario_id,scheduler,seed,sweep_param,sweep_value,alpha,beta,gamma,eta,device_count,"
    "instances,successes,mean_latency,empirical_pf,mean_cost,max_load_share"
)


@pytest.fixture
def default_path(scenario_dir):
    return str(scenario_dir / "default.json")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- formatting and parsing ------------------------------------------------


def test_header_is_stable():
    assert ",".join(ResultRow.header()) == HEADER


@pytest.mark.parametrize(
    "value, text",
    [(None, ""), (math.nan, ""), (-0.0, "0"), (3, "3"), (0.1 + 0.2, "0.3"), (1 / 3, "0.333333333"), ("x", "x")],
)
def test_fmt(value, text):
    assert fmt(value) == text


def test_grid_forms():
    assert parse_grid("1.0:3.0:0.2") == [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0]
    assert parse_grid("5, 8,11") == [5.0, 8.0, 11.0]
    for bad in ("1:0:1", "a,b", "1:2", ""):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_weight_sweep_derives_the_third_weight():
    base = WeightConfig()
    w = sweep_weights(SweepParam.GAMMA_AT_ALPHA_FIXED, 0.3, 0.1, base)
    assert (w.alpha, w.beta, w.gamma) == (0.1, 0.6, 0.3)
    w = sweep_weights(SweepParam.BETA_AT_GAMMA_FIXED, 0.7, 0.1, base)
    assert (w.alpha, w.beta, w.gamma) == (0.2, 0.7, 0.1)
    with pytest.raises(ConfigError, match="alpha"):
        sweep_weights(SweepParam.BETA_AT_GAMMA_FIXED, 0.95, 0.1, base)


def test_device_subsets_nest(default_scenario):
    ids = default_scenario.participator_ids
    for seed in range(5):
        subsets = [set(device_subset(ids, n, seed)) for n in (5, 8, 11, 14)]
        assert [len(s) for s in subsets] == [5, 8, 11, 14]
        assert all(a <= b for a, b in zip(subsets, subsets[1:]))
    with pytest.raises(ConfigError):
        device_subset(ids, len(ids) + 1, 0)


def test_sweep_rejects_bad_points_before_running(default_scenario):
    with pytest.raises(ConfigError, match="eta"):
        sweep_jobs(default_scenario, "eta", [1.0, 0.5])
    with pytest.raises(ConfigError, match="integer"):
        sweep_jobs(default_scenario, "device_count", [5, 6.5])
    with pytest.raises(ConfigError, match="unknown sweep parameter"):
        sweep_jobs(default_scenario, "delta", [1])


def test_aggregate_and_improvement():
    def row(sched, n, ok, lat, cost):
        return ResultRow("s", sched, 0, "", None, 0.4, 0.4, 0.2, 1.5, 3, n, ok, lat, (n - ok) / n, cost, 0.5)

    agg = aggregate([row("a", 10, 10, 2.0, 1.0), row("a", 10, 5, 4.0, 3.0)])
    assert agg.mean_latency == pytest.approx((20 + 20) / 15)
    assert agg.empirical_pf == pytest.approx(0.25)
    assert agg.mean_cost == pytest.approx(2.0)
    assert improvement_pct(8.0, 10.0) == pytest.approx(20.0)
    assert improvement_pct(5.0, 5.0) == 0.0
    assert math.isnan(improvement_pct(math.nan, 1.0))


# --- command line ----------------------------------------------------------


def test_run_writes_one_row_per_seed(tmp_path, default_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--scenario", default_path, *SMALL, "--seed", "0", "1", "2", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == HEADER
    rows = read_rows(out)
    assert [r["seed"] for r in rows] == ["0", "1", "2"]
    assert all(r["scheduler"] == "mtec" and r["instances"] == "8" for r in rows)


def test_simplex_violation_exits_with_message(tmp_path, default_path, capsys):
    code = main(["run", "--scenario", default_path, "--set", "weights.alpha=0.9", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and "simplex" in err and "= 1.5" in err
    assert not (tmp_path / "x.csv").exists()


def test_unknown_scheduler_exits(tmp_path, default_path, capsys):
    assert main(["run", "--scenario", default_path, "--scheduler", "greedy", "--out", str(tmp_path / "x.csv")]) == 2
    assert "greedy" in capsys.readouterr().err


def test_sweep_row_count_and_values(tmp_path, default_path):
    out = tmp_path / "s.csv"
    argv = ["sweep", "--scenario", default_path, *SMALL, "--param", "gamma_at_alpha_fixed", "--grid", "0.1:0.3:0.1",
            "--schedulers", "mtec,latency_only", "--seed", "0", "1", "--out", str(out)]
    assert main(argv) == 0
    rows = read_rows(out)
    assert len(rows) == 3 * 2 * 2
    for r in rows:
        assert r["alpha"] == "0.1"
        assert float(r["beta"]) + float(r["gamma"]) == pytest.approx(0.9)
        assert r["gamma"] == r["sweep_value"]


def test_eta_sweep_covers_the_grid(tmp_path, default_path):
    out = tmp_path / "eta.csv"
    argv = ["sweep", "--scenario", default_path, "--set", "arrivals.count=2", "--param", "eta",
            "--grid", "1.0:3.0:0.2", "--seed", "0", "--out", str(out)]
    assert main(argv) == 0
    assert [r["eta"] for r in read_rows(out)] == [fmt(1.0 + 0.2 * i) for i in range(11)]


def test_device_count_sweep_records_count(tmp_path, default_path):
    out = tmp_path / "d.csv"
    argv = ["sweep", "--scenario", default_path, *SMALL, "--param", "device_count", "--grid", "5,8",
            "--seed", "0", "--out", str(out)]
    assert main(argv) == 0
    assert [r["device_count"] for r in read_rows(out)] == ["5", "8"]


def test_csv_is_byte_identical_with_and_without_workers(tmp_path, default_path):
    argv = ["sweep", "--scenario", default_path, *SMALL, "--param", "eta", "--grid", "1,2",
            "--schedulers", "mtec,random", "--seed", "0", "1"]
    outs = []
    for i, jobs in enumerate(("1", "1", "3")):
        path = tmp_path / f"o{i}.csv"
        assert main([*argv, "--jobs", jobs, "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_compare_against_itself_is_zero(tmp_path, default_path):
    out = tmp_path / "c.csv"
    assert main(["compare", "--scenario", default_path, *SMALL, "--schedulers", "mtec,mtec",
                 "--seed", "0", "1", "--out", str(out)]) == 0
    summary = list(csv.DictReader(io.StringIO((tmp_path / "c.summary.csv").read_text())))
    pct = [r for r in summary if r["kind"] == "improvement_pct"]
    assert len(pct) == 2
    for r in pct:
        assert r["mean_latency"] == "0" and r["mean_cost"] == "0"


def test_compare_needs_two(tmp_path, default_path):
    assert main(["compare", "--scenario", default_path, "--schedulers", "mtec", "--out", str(tmp_path / "c.csv")]) == 2


def test_validate_prints_summary(default_path, capsys):
    assert main(["validate", "--scenario", default_path]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "stages" in out


def test_module_entry_point(tmp_path, default_path):
    proc = subprocess.run([sys.executable, "-m", "edgesched", "validate", "--scenario", default_path],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
