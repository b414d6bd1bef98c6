import json

import numpy as np
import pytest
import yaml

from gridrisk import cli
from gridrisk.config import ConfigError, RunConfig, load_config
from gridrisk.scenarios import DEFAULT_CORRELATION, DEFAULT_MARGINALS, ScenarioSet, load_scenarios, save_scenarios


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_generate_single_sample(tmp_path, capsys):
    assert run(tmp_path, "generate", "--samples", "1", "--horizon", "12") == 0
    sset = load_scenarios(tmp_path / "scenarios.bin")
    assert sset.values.shape == (1, 12, 6)
    assert "KS" in capsys.readouterr().out


def test_generate_default_shape(tmp_path):
    assert run(tmp_path, "generate", "--samples", "1000", "--horizon", "12", "--seed", "3") == 0
    assert load_scenarios(tmp_path / "scenarios.bin").values.shape == (1000, 12, 6)


def test_non_pd_covariance_exits_numeric(tmp_path, capsys):
    bad = DEFAULT_CORRELATION.copy()
    bad[0, 1] = bad[1, 0] = 1.5
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"correlation": bad.tolist(), "samples": 3}))
    assert run(tmp_path, "generate", "--config", str(cfg)) == 2
    assert "pivot" in capsys.readouterr().err


def test_usage_and_config_errors_exit_one(tmp_path):
    assert cli.main([]) == 1
    assert cli.main(["explode"]) == 1
    assert run(tmp_path, "generate", "--samples", "0") == 1
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("nonsense_key: 3\n")
    assert run(tmp_path, "generate", "--config", str(cfg)) == 1
    assert run(tmp_path, "solve") == 1  # no scenario file yet


def test_config_overrides_and_round_trip(tmp_path):
    cfg = load_config(None, samples=7, horizon=1)
    assert (cfg.samples, cfg.horizon) == (7, 1)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert load_config(path, seed=5).seed == 5
    with pytest.raises(ConfigError):
        RunConfig(correlation=np.eye(2))


def test_zero_load_scenario_gives_zero_qoi(tmp_path):
    values = np.zeros((2, 1, 6))
    save_scenarios(ScenarioSet(values, 0, tuple(DEFAULT_MARGINALS), DEFAULT_CORRELATION), tmp_path / "scenarios.bin")
    assert run(tmp_path, "solve") == 0
    ids, qoi = cli.qoi_from_csv(tmp_path / "labels.csv")
    assert ids.tolist() == [0, 1]
    assert qoi.shape == (2, 3, 1, 2)
    assert np.all(qoi == 0.0)


def test_qoi_csv_round_trip(tmp_path):
    qoi = np.random.default_rng(0).uniform(0, 50, size=(3, 3, 2, 2))
    (tmp_path / "q.csv").write_text(cli.qoi_to_csv(np.array([4, 7, 9]), qoi))
    ids, back = cli.qoi_from_csv(tmp_path / "q.csv")
    assert ids.tolist() == [4, 7, 9]
    assert back.tobytes() == qoi.tobytes()
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ConfigError):
        cli.qoi_from_csv(tmp_path / "bad.csv")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["pipeline", "--out", str(out), "--samples", "30", "--horizon", "1", "--epochs", "3", "--seed", "4"])
    assert code == 0
    return out


def test_pipeline_outputs(small_run):
    names = ["scenarios.bin", "labels.csv", "model.ckpt", "train_history.csv", "predictions.csv",
             "risk_oracle.csv", "risk_gnn.csv", "compare.csv", "solve_timing.json", "predict_timing.json"]
    for name in names:
        assert (small_run / name).is_file(), name
    ids, preds = cli.qoi_from_csv(small_run / "predictions.csv")
    assert ids.size == 6  # 20% test split of 30
    compare = (small_run / "compare.csv").read_text().splitlines()
    assert len(compare) == 1 + 4  # header + three zones and the system, one hour
    timing = json.loads((small_run / "predict_timing.json").read_text())
    assert timing["n"] == 6 and len(timing["per_sample_seconds"]) == 6


def test_compare_to_self_is_zero(small_run, tmp_path):
    for name in ("risk_oracle.csv",):
        (tmp_path / name).write_bytes((small_run / name).read_bytes())
    (tmp_path / "risk_gnn.csv").write_bytes((small_run / "risk_oracle.csv").read_bytes())
    deltas = cli.cmd_compare(tmp_path)
    assert all(d.dp == 0 and d.dr == 0 for d in deltas)


def test_misaligned_labels_rejected(small_run, tmp_path):
    for name in ("scenarios.bin", "labels.csv"):
        (tmp_path / name).write_bytes((small_run / name).read_bytes())
    short = load_scenarios(tmp_path / "scenarios.bin").subset(slice(0, 10))
    save_scenarios(short, tmp_path / "scenarios.bin")
    assert run(tmp_path, "train", "--epochs", "1") == 1


def test_predict_rejects_foreign_checkpoint(small_run, tmp_path):
    for name in ("scenarios.bin", "model.ckpt"):
        (tmp_path / name).write_bytes((small_run / name).read_bytes())
    assert run(tmp_path, "predict", "--all") == 0
    assert cli.qoi_from_csv(tmp_path / "predictions.csv")[0].size == 30
    other = tmp_path / "grid.json"
    g = json.loads(RunConfig().grid_path.read_text())
    g["branches"][0]["flow_limit"] = float(g["branches"][0]["flow_limit"]) + 1.0
    other.write_text(json.dumps(g))
    assert run(tmp_path, "predict", "--grid", str(other)) == 1


def test_stages_are_idempotent(small_run, tmp_path):
    (tmp_path / "scenarios.bin").write_bytes((small_run / "scenarios.bin").read_bytes())
    (tmp_path / "labels.csv").write_bytes((small_run / "labels.csv").read_bytes())
    assert run(tmp_path, "train", "--samples", "30", "--horizon", "1", "--epochs", "3", "--seed", "4") == 0
    assert (tmp_path / "model.ckpt").read_bytes() == (small_run / "model.ckpt").read_bytes()
