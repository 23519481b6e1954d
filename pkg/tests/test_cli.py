import json
import subprocess
import sys

import pytest

from sdiotsim.cli import EXIT_INVARIANT, EXIT_OK, EXIT_SCENARIO, EXIT_USAGE, main, parse_seeds
from sdiotsim.metrics import read_csv
from sdiotsim.runner import compare, run_scenario
from sdiotsim.scenario import parse_scenario

from test_scenario import MINIMAL


def test_parse_seeds():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("4,8,9") == [4, 8, 9]
    assert parse_seeds("5-7") == [5, 6, 7]


def test_validate_ok(capsys):
    assert main(["validate", "sdiot_sectionV"]) == EXIT_OK
    assert "6 base, 30 switches" in capsys.readouterr().out


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["compare", "toy_2x3", "--axis", "sideways"])
    assert info.value.code == EXIT_USAGE


def test_scenario_errors(tmp_path):
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_SCENARIO
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL + "colour: blue\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == EXIT_SCENARIO


def test_invariant_violation_exit(monkeypatch, tmp_path):
    from sdiotsim import cli
    from sdiotsim.errors import InvariantViolation

    def boom(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run_scenario", boom)
    assert main(["run", "toy_2x3", "--out-dir", str(tmp_path)]) == EXIT_INVARIANT


def _csvs(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_run_writes_byte_identical_csvs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "toy_2x3", "--seeds", "2", "--out-dir", str(a)]) == EXIT_OK
    assert main(["run", "toy_2x3", "--seeds", "2", "--out-dir", str(b)]) == EXIT_OK
    ca, cb = _csvs(a), _csvs(b)
    assert ca and ca == cb
    assert "toy_2x3/replications/seed_1_variant/response_time.csv" in ca


def test_run_with_trace_dump(tmp_path):
    assert main(["run", "failover", "--seeds", "1", "--dump-trace", "--out-dir", str(tmp_path)]) == EXIT_OK
    trace = tmp_path / "failover" / "replications" / "seed_0_variant" / "trace.tsv"
    kinds = {line.split("\t")[1] for line in trace.read_text().splitlines()}
    assert {"Migration", "ReElection", "ServiceCompletion", "FailureInjection"} <= kinds


def test_env_var_sets_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SDIOTSIM_OUT_DIR", str(tmp_path))
    assert main(["run", "toy_2x3", "--seeds", "1"]) == EXIT_OK
    assert (tmp_path / "toy_2x3" / "summary.csv").exists()


def test_ten_seed_summaries(tmp_path):
    cfg = parse_scenario("failover")
    report = run_scenario(cfg, out_dir=tmp_path)
    assert len(report.replications) == 10
    rows = read_csv(tmp_path / "failover" / "summary.csv")
    assert {r["seed"] for r in rows} == {str(s) for s in range(10)}
    agg = json.loads((tmp_path / "failover" / "report.json").read_text())
    assert "response_std" in agg["aggregate"]["variant"]


def test_zero_horizon_clean(tmp_path):
    cfg = parse_scenario("toy_2x3")
    cfg = cfg.with_overrides(run={"horizon": 0.0})
    report = run_scenario(cfg, seeds=[0], out_dir=tmp_path)
    assert any("horizon is 0" in w for w in report.warnings)
    assert read_csv(tmp_path / "toy_2x3" / "response_time.csv") == []


def test_csvs_parse_back(tmp_path):
    cfg = parse_scenario("toy_2x3")
    run_scenario(cfg, seeds=[0], out_dir=tmp_path)
    for p in (tmp_path / "toy_2x3").glob("*.csv"):
        rows = read_csv(p)
        for r in rows:
            if "time" in r and r["time"]:
                float(r["time"])
            float(r["value"]) if r.get("value") not in (None, "") else None


def test_compare_election_axis(tmp_path):
    rep = compare(parse_scenario("failover"), "election_algorithm", seeds=[0, 1, 2], out_dir=tmp_path)
    s = rep.summary
    assert s["variant_mean_election_time"] < s["baseline_mean_election_time"]
    assert s["variant_uncontested_messages"] < s["baseline_uncontested_messages"]
    assert s["same_leader_fraction"] == 1.0
    assert (tmp_path / "failover" / "compare_election_algorithm.csv").exists()


def test_compare_single_rate_sweep(tmp_path):
    cfg = parse_scenario("toy_2x3").with_overrides(sweep={"rates": [1.0]})
    sweep = compare(cfg, "rate_sweep", seeds=[0], out_dir=tmp_path)
    pair = compare(cfg, "balancer_on_off", seeds=[0], out_dir=tmp_path)
    assert sweep.summary["response_std_on"] == pair.summary["response_std_on"]
    assert sweep.summary["response_std_off"] == pair.summary["response_std_off"]
    assert sweep.summary["slope_on"] == 0.0


def test_paired_seeds_share_traffic():
    from sdiotsim.runner import build_engine

    cfg = parse_scenario("toy_2x3")
    a = build_engine(cfg, 3, balancer=True).run_until(cfg.run.horizon).packets
    b = build_engine(cfg, 3, balancer=False).run_until(cfg.run.horizon).packets
    # same emissions in both arms; only routing differs
    assert sorted(a.emit.tolist()) == sorted(b.emit.tolist())


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "sdiotsim.cli", "validate", "toy_2x3"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "toy_2x3: ok" in out.stdout
