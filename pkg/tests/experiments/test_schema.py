import json

import pytest

from tvo_gpbandit.core.errors import ConfigError
from tvo_gpbandit.experiments.schema import load_config, parse_config, resolved


def fields_of(error: ConfigError):
    return [e["field"] for e in error.errors]


def test_minimal_config_fills_defaults():
    config = parse_config({"experiment": "tvo-train"})
    assert config.model.kind == "bernoulli"
    assert config.scheduler.name == "gp-bandit"
    assert config.d == 5
    assert config.T == 600
    assert config.seeds == [0]


def test_parses_json_text():
    config = parse_config('{"experiment": "regret-lab", "regret": {"rounds": 10}}')
    assert config.regret.rounds == 10


def test_unknown_scheduler_names_the_field():
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"experiment": "tvo-train", "scheduler": {"name": "cosine"}})
    assert fields_of(excinfo.value) == ["scheduler.name"]
    assert "scheduler.name" in str(excinfo.value)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"experiment": "tvo-train", "epochs": 3})
    assert fields_of(excinfo.value) == ["epochs"]


def test_duplicate_seeds():
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"experiment": "tvo-train", "seeds": [1, 2, 1]})
    assert fields_of(excinfo.value) == ["seeds"]


@pytest.mark.parametrize(
    "payload",
    [
        {"d": 0},
        {"T": 0},
        {"scheduler": {"beta1": 1.0}},
        {"acquisition": {"delta": 1.5}},
        {"ablation": {"d_values": [1, 3]}},
        {"log_sweep": {"beta1_grid": [0.0]}},
    ],
)
def test_out_of_range_values(payload):
    with pytest.raises(ConfigError):
        parse_config({"experiment": "tvo-train", **payload})


def test_model_kind_follows_fixture():
    config = parse_config(
        {"experiment": "tvo-train", "model": {"fixture": "linear_gaussian_m2_n4"}}
    )
    assert config.model.kind == "linear-gaussian"


def test_model_kind_must_match_fixture():
    with pytest.raises(ConfigError) as excinfo:
        parse_config(
            {
                "experiment": "tvo-train",
                "model": {"kind": "linear-gaussian", "fixture": "bernoulli_k8_d12"},
            }
        )
    assert fields_of(excinfo.value) == ["model"]


def test_unknown_fixture():
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"experiment": "tvo-train", "model": {"fixture": "mnist"}})
    assert fields_of(excinfo.value) == ["model.fixture"]


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "train.json"
    path.write_text(json.dumps({"experiment": "tvo-train", "T": 30}))
    assert load_config(path).T == 30


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError) as excinfo:
        load_config(path)
    assert fields_of(excinfo.value) == ["<file>"]


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_resolved_is_json_ready():
    payload = resolved(parse_config({"experiment": "bound-check"}))
    assert payload["model"]["kind"] == "bernoulli"
    assert payload["output_dir"] is None
    assert json.loads(json.dumps(payload)) == payload


class TestBanditConfig:
    def test_defaults(self):
        cfg = parse_config({"experiment": "tvo-train"}).bandit_config()
        assert cfg.d == 5
        assert cfg.acquisition.d == 4
        assert cfg.acquisition.T == 600
        assert cfg.acquisition.w == 6
        assert cfg.hyp.permutation_invariant
        assert cfg.reward_estimator == "exact"
        assert cfg.snis_samples == 100

    def test_fixed_window_sets_horizon_width(self):
        config = parse_config({"experiment": "tvo-train", "window": {"fixed_w": 10}})
        assert config.bandit_config().acquisition.w == 10

    def test_overrides(self):
        cfg = parse_config({"experiment": "tvo-train"}).bandit_config(
            d=3, reward_estimator="snis", kappa_override=0.0, permutation_invariant=False
        )
        assert cfg.d == 3
        assert cfg.acquisition.d == 2
        assert cfg.acquisition.kappa_override == 0.0
        assert not cfg.hyp.permutation_invariant
        assert cfg.reward_estimator == "snis"


@pytest.mark.parametrize(
    "payload, fields",
    [
        ({"experiment": "tvo-train", "T": 3}, ["T"]),
        ({"experiment": "tvo-train", "d": 1}, ["d"]),
        ({"experiment": "tvo-train", "d": 1, "scheduler": {"name": "random"}}, ["d"]),
        ({"experiment": "tvo-train", "d": 1, "T": 3}, ["d", "T"]),
        ({"experiment": "ablation", "ablation": {"budgets": [3]}}, ["ablation.budgets"]),
        ({"experiment": "ablation", "ablation": {"budgets": [0]}}, ["ablation.budgets"]),
        ({"experiment": "log-sweep", "log_sweep": {"d_values": [1]}}, ["log_sweep.d_values"]),
        ({"experiment": "log-sweep", "d": 1}, ["d"]),
        (
            {"experiment": "regret-lab", "regret": {"grid_d": 2, "grid_points": 64}},
            ["regret.grid_points"],
        ),
        (
            {"experiment": "regret-lab", "regret": {"grid_points": 64, "rounds": 200}},
            ["regret.rounds"],
        ),
        ({"experiment": "bound-check", "T": 1200, "regret": {"grid_points": 64}}, ["T"]),
    ],
)
def test_unrunnable_combinations_name_the_field(payload, fields):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(payload)
    assert fields_of(excinfo.value) == fields


@pytest.mark.parametrize(
    "payload",
    [
        {"experiment": "tvo-train", "d": 1, "scheduler": {"name": "linear"}},
        {"experiment": "tvo-train", "T": 3, "scheduler": {"name": "log"}},
        {"experiment": "ablation", "d": 1, "ablation": {"d_values": [2]}},
        {"experiment": "regret-lab", "regret": {"grid_d": 2, "grid_points": 16, "rounds": 32}},
    ],
)
def test_runnable_edge_combinations(payload):
    assert parse_config(payload).run_errors() == []
