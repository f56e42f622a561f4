import json

import pandas as pd
import pytest

from signal_evo import cli, version_info_cli
from signal_evo.skilldsl import seed_skill

SHORT = ["--scenario", "desk_T", "--set", "duration=300"]


@pytest.fixture
def seed_file(tmp_path):
    path = tmp_path / "seed.json"
    path.write_text(json.dumps(seed_skill().to_dict()), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def evolved(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["evolve", *SHORT, "--pop", "2", "--gens", "2", "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


def test_evaluate_is_deterministic(tmp_path, seed_file):
    for name in ("a", "b"):
        assert cli.main(["evaluate", "--skill", str(seed_file), *SHORT, "--seeds", "7", "--out", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "metrics.csv").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "metrics.csv").read_text(encoding="utf-8")
    table = pd.read_csv(tmp_path / "a" / "metrics.csv")
    assert list(table["seed"]) == [7]
    assert table.loc[0, "method"] == "seed"


def test_evaluate_writes_manifest(tmp_path, seed_file):
    assert cli.main(["evaluate", "--skill", str(seed_file), *SHORT, "--seeds", "1", "2", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "evaluate"
    assert manifest["seeds"] == [1, 2]
    assert manifest["deterministic"] is True
    assert {"signal_evo", "python", "numpy", "scipy", "pandas"} <= set(manifest["versions"])


def test_malformed_skill_is_rejected_at_parse_stage(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert cli.main(["evaluate", "--skill", str(bad), *SHORT, "--seeds", "0"]) == 1
    assert "rejected at parse stage" in capsys.readouterr().err


def test_disallowed_variable_is_rejected_at_whitelist_stage(tmp_path, capsys):
    data = seed_skill().to_dict()
    data["inlane_code"] = "value[0] += os_environ"
    path = tmp_path / "sneaky.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    assert cli.main(["inspect", "--skill", str(path)]) == 1
    assert "rejected at" in capsys.readouterr().err


def test_unknown_scenario_is_a_usage_error(seed_file):
    assert cli.main(["evaluate", "--skill", str(seed_file), "--scenario", "Z9", "--seeds", "0"]) == 2


def test_bad_arguments_exit_with_two():
    assert cli.main(["baseline", "--method", "telepathy"]) == 2
    assert cli.main([]) == 2


def test_compare_method_with_itself_shows_no_difference(tmp_path):
    args = ["compare", "--method", "fixed_time", "--method", "fixed_time", *SHORT, "--seeds", "0", "1", "2", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    sig = pd.read_csv(tmp_path / "significance.csv")
    assert not sig.empty
    assert (sig["t"] == 0).all()
    assert (sig["p"] == 1).all()
    assert set(sig["method_a"]) == {"fixed_time#0"}


def test_compare_needs_two_methods_and_two_seeds():
    assert cli.main(["compare", "--method", "fixed_time", *SHORT, "--seeds", "0", "1"]) == 2
    assert cli.main(["compare", "--method", "fixed_time", "--method", "max_pressure", *SHORT, "--seeds", "0"]) == 2


def test_baseline_summary_covers_every_seed(tmp_path):
    assert cli.main(["baseline", "--method", "max_pressure", *SHORT, "--seeds", "0", "1", "--out", str(tmp_path)]) == 0
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert set(summary["n"]) == {2}
    assert "avg_delay" in set(summary["metric"])


def test_evolve_summary_never_regresses(evolved):
    summary = pd.read_csv(evolved / "summary.csv")
    assert summary.loc[0, "improvement_pct"] >= 0
    assert summary.loc[0, "best_fitness"] >= summary.loc[0, "initial_fitness"]
    manifest = json.loads((evolved / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seeds"] == [3]
    assert manifest["run_id"] == "run-3"


def test_evolve_refuses_a_used_directory_without_resume(evolved):
    assert cli.main(["evolve", *SHORT, "--pop", "2", "--gens", "2", "--seed", "3", "--out", str(evolved)]) == 2


def test_export_writes_one_curve_row_per_generation(evolved, tmp_path):
    assert cli.main(["export", "--run", str(evolved), "--out", str(tmp_path)]) == 0
    curve = pd.read_csv(tmp_path / "curve.csv")
    assert list(curve["generation"]) == [1, 2]
    assert curve["best_fitness"].is_monotonic_increasing
    metrics = pd.read_csv(tmp_path / "metrics.csv")
    assert len(metrics) == 1 + 2 * 2


def test_export_of_an_empty_directory_is_unknown_run(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["export", "--run", str(tmp_path / "empty"), "--out", str(tmp_path / "x")]) == 2


def test_inspect_and_replay_read_a_run(evolved, capsys):
    assert cli.main(["inspect", "--run", str(evolved)]) == 0
    assert "run run-3" in capsys.readouterr().out
    assert cli.main(["inspect", "--run", str(evolved), "--id", "seed"]) == 0
    assert cli.main(["inspect", "--run", str(evolved), "--id", "ghost"]) == 2
    assert cli.main(["replay", "--run", str(evolved)]) == 0


def test_evaluate_capsule_from_a_run(evolved, tmp_path):
    capsule = json.loads((evolved / "capsules.jsonl").read_text(encoding="utf-8").splitlines()[-1])
    skill_id = capsule["payload"]["skill"]["id"]
    args = ["evaluate", "--capsule", skill_id, "--run", str(evolved), *SHORT, "--seeds", "0", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert pd.read_csv(tmp_path / "metrics.csv").loc[0, "method"] == skill_id


def test_version_info_logs_each_package(caplog):
    caplog.set_level("INFO")
    version_info_cli.main()
    text = "\n".join(r.message for r in caplog.records)
    for name in ("signal-evo", "numpy", "scipy", "pandas", "PyYAML", "requests"):
        assert f"{name} version:" in text
