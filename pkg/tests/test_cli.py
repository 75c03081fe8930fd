import csv
import json

import numpy as np
import pytest

from behavior_engine import cli, harness
from behavior_engine.config import ConfigError, config_from_mapping, load_config
from behavior_engine.curation import interactivity_score
from behavior_engine.harness import load_scenario_set


@pytest.fixture
def scenario_dir(tmp_path):
    out = tmp_path / "scenarios"
    assert cli.main(["gen", "--template", "multi_lane_traffic", "--count", "3", "--seed", "1", "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def run_eval(scenarios, out, *extra):
    return cli.main([
        "eval", "--scenarios", str(scenarios), "--planners", "idm,pdm", "--traffic", "idm,expert",
        "--out", str(out), *extra,
    ])


def test_eval_writes_one_row_per_episode(scenario_dir, tmp_path):
    out = tmp_path / "run"
    assert run_eval(scenario_dir, out) == 0
    rows = read_csv(out / "results.csv")
    assert len(rows) == 12
    assert {(r["planner"], r["traffic_agent"]) for r in rows} == {
        ("idm", "idm"), ("idm", "expert"), ("pdm", "idm"), ("pdm", "expert")
    }
    assert all(r["wall_time_ms"] == "" for r in rows)
    agg = read_csv(out / "aggregate.csv")
    assert [r["planner"] for r in agg] == ["idm", "pdm"]
    assert set(agg[0]) == {"planner", "expert", "idm"}
    for a in agg:
        for t in ("expert", "idm"):
            vals = [float(r["combined"]) for r in rows if r["planner"] == a["planner"] and r["traffic_agent"] == t]
            assert float(a[t]) == pytest.approx(100 * np.mean(vals), abs=1e-9)
    assert len(json.loads((out / "results.json").read_text())) == 12
    assert not (out / "errors.csv").exists()


def test_eval_reruns_are_byte_identical(scenario_dir, tmp_path):
    run_eval(scenario_dir, tmp_path / "a")
    run_eval(scenario_dir, tmp_path / "b", "--workers", "2")
    for name in ("results.csv", "results.json", "aggregate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_planner_fails_before_running(scenario_dir, tmp_path, monkeypatch):
    def boom(job):
        raise AssertionError("no episode may run")

    monkeypatch.setattr(cli, "run_matrix", boom)
    with pytest.raises(SystemExit) as info:
        cli.main(["eval", "--scenarios", str(scenario_dir), "--planners", "idm,warp", "--traffic", "idm",
                  "--out", str(tmp_path / "x")])
    assert info.value.code == 2
    assert not (tmp_path / "x").exists()


def test_unknown_traffic_fails(scenario_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["eval", "--scenarios", str(scenario_dir), "--planners", "idm", "--traffic", "ghost",
                  "--out", str(tmp_path / "x")])
    assert info.value.code == 2


def test_report_reaggregates(scenario_dir, tmp_path, capsys):
    out = tmp_path / "run"
    run_eval(scenario_dir, out)
    capsys.readouterr()
    assert cli.main(["report", str(out / "results.csv")]) == 0
    assert capsys.readouterr().out == (out / "aggregate.csv").read_text()


def test_record_timing_fills_wall_time(scenario_dir, tmp_path):
    out = tmp_path / "timed"
    cli.main(["eval", "--scenarios", str(scenario_dir), "--planners", "idm", "--traffic", "idm",
              "--out", str(out), "--record-timing"])
    assert all(float(r["wall_time_ms"]) > 0 for r in read_csv(out / "results.csv"))


def test_failed_episode_goes_to_errors_csv(scenario_dir, tmp_path, monkeypatch):
    real = harness.run_episode

    def flaky(sc, *args, **kw):
        if sc.id.endswith("0001"):
            raise RuntimeError("synthetic failure")
        return real(sc, *args, **kw)

    monkeypatch.setattr(harness, "run_episode", flaky)
    out = tmp_path / "run"
    assert cli.main(["eval", "--scenarios", str(scenario_dir), "--planners", "idm", "--traffic", "idm",
                     "--out", str(out)]) == 1
    assert len(read_csv(out / "results.csv")) == 2
    errors = read_csv(out / "errors.csv")
    assert len(errors) == 1 and "synthetic failure" in errors[0]["error"]


@pytest.fixture(scope="module")
def pool_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pool")
    assert cli.main(["gen", "--template", "multi_lane_traffic", "--count", "50", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_curate_interactive_top_k(pool_dir, tmp_path):
    manifest_path = tmp_path / "splits" / "top.json"
    assert cli.main(["curate", "--scenarios", str(pool_dir), "--k", "10", "--out", str(manifest_path)]) == 0
    manifest = json.loads(manifest_path.read_text())
    assert len(manifest["ids"]) == 10
    scores = {sc.id: interactivity_score(sc).score for sc in load_scenario_set(pool_dir)}
    expected = sorted(scores, key=lambda i: (-scores[i], i))[:10]
    assert manifest["ids"] == expected
    assert [r["scenario_id"] for r in manifest["reports"]] == expected
    # the manifest is itself a loadable scenario set
    assert [sc.id for sc in load_scenario_set(manifest_path)] == expected


def test_curate_random_is_seeded(pool_dir, capsys):
    args = ["curate", "--scenarios", str(pool_dir), "--mode", "random", "--k", "10", "--seed", "4"]
    cli.main(args)
    first = capsys.readouterr().out
    cli.main(args)
    assert capsys.readouterr().out == first
    assert len(json.loads(first)["ids"]) == 10


def test_curate_too_large_k_fails(pool_dir):
    assert cli.main(["curate", "--scenarios", str(pool_dir), "--mode", "random", "--k", "51"]) == 1
    assert cli.main(["curate", "--scenarios", str(pool_dir), "--k", "51"]) == 1


def test_curate_fit_thresholds_reports_percentiles(pool_dir, capsys):
    cli.main(["curate", "--scenarios", str(pool_dir), "--k", "3", "--fit-thresholds"])
    manifest = json.loads(capsys.readouterr().out)
    assert set(manifest["percentiles"]["ttc"]) == {"p75", "p90"}


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["gen", "--template", "blocked_lane", "--count", "5", "--seed", "7", "--out", str(out)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert len(files) == 5
    contents = [(a / f).read_bytes() for f in files]
    assert len(set(contents)) == 5
    assert contents == [(b / f).read_bytes() for f in files]


def test_gen_zero_and_unknown_template(tmp_path):
    assert cli.main(["gen", "--template", "blocked_lane", "--count", "0", "--out", str(tmp_path / "z")]) == 0
    assert list((tmp_path / "z").iterdir()) == []
    with pytest.raises(SystemExit) as info:
        cli.main(["gen", "--template", "roundabout", "--count", "1", "--out", str(tmp_path / "r")])
    assert info.value.code == 2


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_mapping({"k": 4, "warp_factor": 9})
    with pytest.raises(ConfigError):
        config_from_mapping({"accel_range": [4, -4]})
    with pytest.raises(ConfigError):
        config_from_mapping({"k": 0})


def test_config_json_and_toml_agree(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"k": 4, "h2_steps": 5, "accel_range": [-3, 3]}))
    (tmp_path / "run.toml").write_text("k = 4\nh2_steps = 5\naccel_range = [-3, 3]\n")
    a, b = load_config(tmp_path / "run.json"), load_config(tmp_path / "run.toml")
    assert a == b
    engine, hybrid = a
    assert hybrid.k == 4 and hybrid.h2_steps == 5
    assert engine.accel_range == (-3.0, 3.0)


def test_bad_config_is_a_usage_error(scenario_dir, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nope": 1}))
    with pytest.raises(SystemExit) as info:
        cli.main(["eval", "--scenarios", str(scenario_dir), "--planners", "idm", "--traffic", "idm",
                  "--out", str(tmp_path / "o"), "--config", str(cfg)])
    assert info.value.code == 2
