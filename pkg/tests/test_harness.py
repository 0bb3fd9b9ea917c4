import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from qigmn import cli
from qigmn.gmm import Mixture
from qigmn.harness import (
    CSV_HEADER,
    ExperimentConfig,
    SeedResult,
    evaluate,
    load_agent,
    read_returns,
    run_experiment,
    run_seed,
    summarize,
)

FAST = dict(env="cartpole_v0", seeds=[0, 1], max_episodes=5, sigma_fraction=0.3, replay_size=50)


def test_unknown_config_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys: bogus"):
        ExperimentConfig.from_dict({"env": "cartpole_v0", "bogus": 1})


@pytest.mark.parametrize("bad", [{"env": "nope"}, {"seeds": []}, {"max_episodes": 0}])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_config_load_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(FAST))
    cfg = ExperimentConfig.load(path)
    assert cfg == ExperimentConfig(**FAST)
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        ExperimentConfig.load(path)


def test_hash_ignores_output_dir():
    a = ExperimentConfig(**FAST)
    assert a.hash() == replace(a, out_dir="elsewhere").hash()
    assert a.hash() != replace(a, gamma=0.5).hash()


def test_run_writes_csv_models_and_summary(tmp_path):
    cfg = ExperimentConfig(**FAST, out_dir=str(tmp_path))
    summary = run_experiment(cfg)
    for seed in cfg.seeds:
        with open(tmp_path / f"seed_{seed}.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_HEADER
        assert [int(r[0]) for r in rows[1:]] == list(range(5))
        assert all(float(r[4]) == 0.0 for r in rows[1:])
        assert all(int(r[3]) >= 1 for r in rows[1:])
        assert (tmp_path / f"seed_{seed}.model").exists()
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["config_hash"] == cfg.hash() == summary["config_hash"]
    # five episodes can never fill a 100-episode window
    assert on_disk["solved_count"] == 0 and on_disk["solve_median_all"] is None
    assert all(s["solve_episode"] is None for s in on_disk["seeds"])


def test_identical_runs_give_identical_csv(tmp_path):
    a = ExperimentConfig(**FAST, out_dir=str(tmp_path / "a"))
    run_experiment(a)
    run_experiment(replace(a, out_dir=str(tmp_path / "b")))
    for seed in a.seeds:
        assert (tmp_path / "a" / f"seed_{seed}.csv").read_bytes() == (tmp_path / "b" / f"seed_{seed}.csv").read_bytes()
        assert (tmp_path / "a" / f"seed_{seed}.model").read_bytes() == (tmp_path / "b" / f"seed_{seed}.model").read_bytes()


def test_parallel_matches_sequential(tmp_path):
    cfg = ExperimentConfig(**FAST, out_dir=str(tmp_path / "seq"))
    run_experiment(cfg)
    run_experiment(replace(cfg, out_dir=str(tmp_path / "par")), parallel=True)
    for seed in cfg.seeds:
        assert (tmp_path / "seq" / f"seed_{seed}.csv").read_bytes() == (tmp_path / "par" / f"seed_{seed}.csv").read_bytes()


def test_wall_time_recorded_when_asked():
    res = run_seed(ExperimentConfig(**{**FAST, "record_wall_time": True}), 0)
    assert all(r.ms > 0 for r in res.records)


def test_summary_statistics():
    cfg = ExperimentConfig(**FAST)

    def res(seed, solve):
        return SeedResult(seed, [], solve, 3, False)

    s = summarize(cfg, [res(0, 4), res(1, None), res(2, 10)])
    assert s["solved_count"] == 2
    assert s["solve_median_all"] == 10
    assert s["solve_mean_successful"] == 7
    assert s["solve_std_successful"] == pytest.approx(np.std([4, 10], ddof=1))
    s = summarize(cfg, [res(0, None), res(1, None), res(2, 3)])
    assert s["solve_median_all"] is None


def test_numerical_failure_aborts_only_that_seed(monkeypatch, tmp_path):
    from qigmn import harness
    from qigmn.gmm import NumericalFailure

    real = harness.run_episode

    def flaky(agent, env, obs):
        if agent.config.seed == harness._seeds(1)[0]:
            raise NumericalFailure("forced")
        return real(agent, env, obs)

    monkeypatch.setattr(harness, "run_episode", flaky)
    summary = run_experiment(ExperimentConfig(**FAST, out_dir=str(tmp_path)))
    by_seed = {s["seed"]: s for s in summary["seeds"]}
    assert by_seed[1]["error"] and by_seed[0]["error"] is None
    assert by_seed[0]["episodes"] == 5
    assert summary["aborted"] == 1


def test_evaluate_saved_model(tmp_path):
    run_experiment(ExperimentConfig(**FAST, out_dir=str(tmp_path)))
    out = evaluate(tmp_path / "seed_0.model", "cartpole_v0", episodes=3, seed=5)
    assert out["episodes"] == 3 and 1 <= out["mean_return"] <= 200
    assert out == evaluate(tmp_path / "seed_0.model", "cartpole_v0", episodes=3, seed=5)
    with pytest.raises(ValueError):
        evaluate(tmp_path / "seed_0.model", "cartpole_v0", episodes=0, seed=5)
    with pytest.raises(ValueError, match="dimension"):
        load_agent(tmp_path / "seed_0.model", "mountain_car_v0")


def test_loaded_agent_is_frozen(tmp_path):
    run_experiment(ExperimentConfig(**FAST, out_dir=str(tmp_path)))
    agent, _ = load_agent(tmp_path / "seed_0.model", "cartpole_v0")
    assert agent.frozen and agent.epsilon == 0.0
    model, meta = Mixture.load(tmp_path / "seed_0.model")
    assert meta["seed"] == 0 and meta["env"] == "cartpole_v0"


def write_config(tmp_path, **over):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**FAST, "out_dir": str(tmp_path / "out"), **over}))
    return path


def test_cli_train_and_evaluate(tmp_path, capsys):
    path = write_config(tmp_path)
    assert cli.main(["train", "--config", str(path), "--seeds", "3"]) == 0
    out = capsys.readouterr().out
    assert "seed 3: not solved" in out
    assert len(read_returns(tmp_path / "out" / "seed_3.csv")) == 5
    assert cli.main(["evaluate", "--model", str(tmp_path / "out" / "seed_3.model"), "--env", "cartpole_v0", "--episodes", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["episodes"] == 2


def test_cli_overrides(tmp_path):
    path = write_config(tmp_path)
    assert cli.main(["train", "--config", str(path), "--out", str(tmp_path / "o2"), "--max-episodes", "2"]) == 0
    assert len(read_returns(tmp_path / "o2" / "seed_0.csv")) == 2


def test_cli_bad_config_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, extra_key=1)
    assert cli.main(["train", "--config", str(path)]) == 2
    assert "extra_key" in capsys.readouterr().err


def test_cli_evaluate_zero_episodes(tmp_path, capsys):
    path = write_config(tmp_path)
    cli.main(["train", "--config", str(path)])
    code = cli.main(["evaluate", "--model", str(tmp_path / "out" / "seed_0.model"), "--env", "cartpole_v0", "--episodes", "0"])
    assert code == 2


def test_cli_list_envs(capsys):
    assert cli.main(["list-envs"]) == 0
    out = capsys.readouterr().out
    assert "mountain_car_v0" in out and "acrobot_v1" in out
