import json

import numpy as np
import pytest

from cobrand.cli import CliConfig, execute, main, parse_invocation
from cobrand.environment import load_history, load_spec
from cobrand.graph import BudgetAllocation, expected_reward, load_graph
from cobrand.optimizer import brute_force_opt


def config_dict(**kw):
    base = {
        "schema": "cobrand-config-v1",
        "environment": {
            "num_initiators": 4,
            "num_targets": 6,
            "plans": [[1, 2]] * 4,
            "caps": [2] * 4,
        },
        "learner": {"policies": ["CBOL", "EMP"], "epsilon": 0.1, "history_seasons": 8},
        "optimizer": {"k": 1, "budget": 3},
        "harness": {"horizon": 6, "repetitions": 2, "seed": 21, "oracle": True},
    }
    for key, value in kw.items():
        base[key] = {**base.get(key, {}), **value}
    return base


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_dict()))
    return path


# ------------------------------------------------------------------ parsing


def test_parse_run_with_seed():
    cli = parse_invocation(["run", "--config", "c.json", "--seed", "7"])
    assert cli.command == "run"
    assert cli.config_path == "c.json"
    assert cli.seed == 7
    assert cli.k is None


def test_parse_policy_list():
    cli = parse_invocation(["run", "--config", "c.json", "--policy", "CBOL,TS"])
    assert cli.policies == ("CBOL", "TS")


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        parse_invocation(["frobnicate", "--config", "c.json"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        parse_invocation(["run", "--config", "c.json", "--bogus"])
    assert err.value.code == 2


# ----------------------------------------------------------------- commands


def test_unreadable_config_exits_3(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 3
    assert "ConfigError" in capsys.readouterr().err


def test_bad_schema_exits_3(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema": "other"}))
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_run_outputs_are_byte_identical(tmp_path, config_file):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_file), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(config_file), "--out", str(out2)]) == 0
    for name in ("results.csv", "summary.csv", "run_meta.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        assert (out1 / name).stat().st_size > 0


def test_seed_override_changes_results(tmp_path, config_file):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_file), "--out", str(out1)]) == 0
    assert main(
        ["run", "--config", str(config_file), "--out", str(out2), "--seed", "99"]
    ) == 0
    assert (out1 / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()
    meta = json.loads((out2 / "run_meta.json").read_text())
    assert meta["seed"] == 99


def test_gen_env_writes_spec_and_graph(tmp_path, config_file):
    out = tmp_path / "env"
    assert main(["gen-env", "--config", str(config_file), "--out", str(out)]) == 0
    spec = load_spec(out / "spec.json")
    assert spec.num_initiators == 4 and spec.num_targets == 6
    graph = load_graph(out / "truth_graph.json")
    assert graph.validate() == []
    assert graph.mu_is_monotone()


def test_gen_history_writes_history(tmp_path, config_file):
    out = tmp_path / "hist"
    assert main(["gen-history", "--config", str(config_file), "--out", str(out)]) == 0
    history = load_history(out / "history.json")
    assert history.num_seasons == 8
    assert all(st.count <= 8 for st in history.arm_stats.values())


def test_gen_history_requires_explicit_grid(tmp_path):
    raw = config_dict()
    del raw["environment"]["plans"]
    del raw["environment"]["caps"]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    assert main(["gen-history", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_oracle_matches_direct_library_call(tmp_path, config_file):
    env_out = tmp_path / "env"
    main(["gen-env", "--config", str(config_file), "--out", str(env_out)])
    opt_cfg = tmp_path / "opt.json"
    opt_cfg.write_text(json.dumps({
        "schema": "cobrand-config-v1",
        "optimizer": {"graph": str(env_out / "truth_graph.json"), "budget": 3},
    }))
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", str(opt_cfg), "--out", str(out)]) == 0
    payload = json.loads((out / "oracle.json").read_text())
    graph = load_graph(env_out / "truth_graph.json")
    alloc, value = brute_force_opt(graph, 3)
    assert tuple(payload["allocation"]) == alloc.levels
    assert payload["expected_reward"] == pytest.approx(value)


def test_optimize_reports_reward_and_seed_count(tmp_path, config_file):
    env_out = tmp_path / "env"
    main(["gen-env", "--config", str(config_file), "--out", str(env_out)])
    opt_cfg = tmp_path / "opt.json"
    opt_cfg.write_text(json.dumps({
        "schema": "cobrand-config-v1",
        "optimizer": {"graph": str(env_out / "truth_graph.json"), "budget": 3, "k": 2},
    }))
    out = tmp_path / "opt"
    assert main(["optimize", "--config", str(opt_cfg), "--out", str(out)]) == 0
    payload = json.loads((out / "optimize.json").read_text())
    graph = load_graph(env_out / "truth_graph.json")
    alloc = BudgetAllocation(tuple(payload["allocation"]), 3)
    assert payload["expected_reward"] == pytest.approx(expected_reward(graph, alloc))
    assert payload["K"] == 2
    assert payload["seeds_evaluated"] >= 1
    assert payload["elapsed_ms"] >= 0


def test_optimize_k_override(tmp_path, config_file):
    env_out = tmp_path / "env"
    main(["gen-env", "--config", str(config_file), "--out", str(env_out)])
    opt_cfg = tmp_path / "opt.json"
    opt_cfg.write_text(json.dumps({
        "schema": "cobrand-config-v1",
        "optimizer": {"graph": str(env_out / "truth_graph.json"), "budget": 3, "k": 3},
    }))
    out = tmp_path / "opt"
    assert main(
        ["optimize", "--config", str(opt_cfg), "--out", str(out), "--K", "1"]
    ) == 0
    assert json.loads((out / "optimize.json").read_text())["K"] == 1


def test_sweep_k_override_collapses_list(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert main(
        ["sweep-k", "--config", str(config_file), "--out", str(out),
         "--K", "2", "--reps", "1"]
    ) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "K,mean_reward,mean_runtime_ms"
    assert len(lines) == 2
    assert lines[1].startswith("2,")


def test_infeasible_instance_exits_4(tmp_path, capsys):
    raw = config_dict(optimizer={"budget": 0, "k": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 4
    assert "InfeasibleConfigError" in capsys.readouterr().err


def test_oracle_limit_exits_5(tmp_path, config_file, monkeypatch, capsys):
    env_out = tmp_path / "env"
    main(["gen-env", "--config", str(config_file), "--out", str(env_out)])
    opt_cfg = tmp_path / "opt.json"
    opt_cfg.write_text(json.dumps({
        "schema": "cobrand-config-v1",
        "optimizer": {"graph": str(env_out / "truth_graph.json"), "budget": 3},
    }))
    monkeypatch.setenv("COBRAND_ORACLE_LIMIT", "2")
    assert main(["oracle", "--config", str(opt_cfg), "--out", str(tmp_path)]) == 5
    assert "OracleLimitError" in capsys.readouterr().err
    assert not (tmp_path / "oracle.json").exists()


def test_summary_line_lists_outputs(tmp_path, config_file, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("run: wrote ")
    assert "results.csv" in line and "summary.csv" in line


def test_execute_direct_unknown_command_guard(tmp_path, config_file):
    # parse_invocation cannot produce this, but execute still rejects it
    cli = CliConfig(command="run", config_path=str(config_file), out_dir=str(tmp_path))
    assert execute(cli) == 0
