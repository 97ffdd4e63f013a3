import numpy as np
import pytest
import yaml

from core.config import (
    parse_config,
    parse_config_text,
    resolve_scenario,
    serialize_config,
    validate_config,
)
from core.errors import ScenarioParseError, ScenarioValidationError
from estimation.graph import is_connected
from estimation.sysmodel import information_terms


def test_bundled_twenty_node_scenario():
    cfg = parse_config("scenario_paper_sec4")
    assert cfg.name == "scenario_paper_sec4"
    assert len(cfg.sensors) == 20
    assert cfg.step_size == 0.015
    assert cfg.algorithms == ["ckf", "a0", "a1"]
    assert cfg.sigma_threshold == 1e-8

    scenario = resolve_scenario(cfg)
    assert scenario.graph.n == 20
    assert is_connected(scenario.graph)
    np.testing.assert_array_equal(np.round(scenario.process.a, 4), [[0.9990, -0.0450], [0.0450, 0.9990]])
    u_mat, _ = information_terms(scenario.sensors[0], np.zeros(2))
    np.testing.assert_allclose(u_mat, 100.0 * np.eye(2), rtol=1e-12)
    np.testing.assert_array_equal(scenario.initial_truth, [5.0, 5.0])


@pytest.mark.parametrize("name", ["scenario_paper_sec4", "scenario_small_n5", "scenario_noisy_a2"])
def test_bundled_scenarios_validate(name):
    cfg = parse_config(name)
    assert cfg.step_size is not None
    assert len(cfg.initial_truth) == 2


def test_noisy_scenario_uses_noisy_rank_threshold():
    assert parse_config("scenario_noisy_a2").sigma_threshold == 1e-4


def test_default_step_size_without_sampling_period(make_scenario):
    raw = make_scenario(n=5)
    raw["process"] = {"kind": "discrete", "a": [[1.0, 0.0], [0.0, 1.0]], "b": [[1.0, 0.0], [0.0, 1.0]],
                      "q_cov": [[1.0, 0.0], [0.0, 1.0]]}
    # path graph: max degree 2, so min(1/2, 2/7) is the binding bound
    assert validate_config(raw).step_size == pytest.approx(0.9 * 2.0 / 7.0)


def test_step_size_defaults_to_sampling_period(make_scenario):
    assert validate_config(make_scenario(n=5)).step_size == 0.015


def test_sampling_period_defaults_to_step_size(make_scenario):
    raw = make_scenario(n=3, step_size=0.2)
    del raw["process"]["dt"]
    cfg = validate_config(raw)
    assert cfg.process.dt == 0.2


def test_missing_sensors(make_scenario):
    raw = make_scenario(n=3)
    del raw["sensors"]
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(raw)
    assert info.value.field == "sensors"


def test_step_size_above_bound(make_scenario):
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(make_scenario(n=5, step_size=0.5))
    assert info.value.field == "step_size"
    assert info.value.bound == pytest.approx(0.5)


def test_step_size_above_filter_bound_only_warns(make_scenario, caplog):
    cfg = validate_config(make_scenario(n=5, step_size=0.4))
    assert cfg.step_size == 0.4
    assert "stability bound" in caplog.text


def test_node_count_mismatch(make_scenario):
    raw = make_scenario(n=3)
    raw["graph"]["n"] = 4
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(raw)
    assert info.value.field == "graph.n"


def test_sensor_needs_exactly_one_noise_matrix(make_scenario):
    raw = make_scenario(n=2)
    raw["sensors"][0]["r_inv"] = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(raw)
    assert info.value.field.startswith("sensors[0]")


def test_indefinite_noise_covariance(make_scenario):
    raw = make_scenario(n=2)
    raw["sensors"][1]["r_cov"] = [[1.0, 0.0], [0.0, -1.0]]
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(raw)
    assert info.value.field == "sensors[1].r_cov"


def test_sensor_shape_mismatch(make_scenario):
    raw = make_scenario(n=2)
    raw["sensors"][0]["h"] = [[1.0, 0.0, 0.0]]
    raw["sensors"][0]["r_cov"] = [[1.0]]
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(raw)
    assert info.value.field == "sensors[0].h"


def test_unknown_key(make_scenario):
    with pytest.raises(ScenarioValidationError):
        validate_config(make_scenario(n=2, colour="blue"))


def test_unknown_algorithm(make_scenario):
    with pytest.raises(ScenarioValidationError) as info:
        validate_config(make_scenario(n=2, algorithms=["ckf", "a9"]))
    assert info.value.field.startswith("algorithms")


def test_duplicate_algorithms_are_dropped(make_scenario):
    assert validate_config(make_scenario(n=2, algorithms=["ckf", "a1", "a1"])).algorithms == ["ckf", "a1"]


def test_malformed_yaml_reports_line():
    with pytest.raises(ScenarioParseError) as info:
        parse_config_text("name: broken\nsteps: [1, 2\n", path="broken.yaml")
    assert info.value.line is not None
    assert info.value.path == "broken.yaml"


def test_non_mapping_document():
    with pytest.raises(ScenarioParseError):
        parse_config_text("- just\n- a list\n")


def test_unknown_scenario_name():
    with pytest.raises(ScenarioParseError):
        parse_config("no_such_scenario")


def test_overrides_replace_file_values():
    cfg = parse_config("scenario_small_n5", {"steps": 12, "run_seed": 9, "sigma_threshold": None})
    assert cfg.steps == 12
    assert cfg.run_seed == 9
    assert cfg.sigma_threshold == 1e-8


def test_serialized_scenario_parses_to_the_same_config(tmp_path):
    cfg = parse_config("scenario_paper_sec4")
    path = tmp_path / "round_trip.yaml"
    path.write_text(serialize_config(cfg), encoding="utf-8")
    assert parse_config(path).model_dump() == cfg.model_dump()


def test_serialized_scenario_is_plain_yaml():
    loaded = yaml.safe_load(serialize_config(parse_config("scenario_small_n5")))
    assert loaded["graph"]["n"] == 5
    assert loaded["process"]["kind"] == "continuous"


def test_random_graph_scenario(make_scenario):
    raw = make_scenario(n=8)
    raw["graph"] = {"n": 8, "random": {"edge_probability": 0.3, "seed": 5}}
    raw["step_size"] = None
    del raw["process"]["dt"]
    first = resolve_scenario(validate_config(raw))
    second = resolve_scenario(validate_config(raw))
    assert first.graph == second.graph
    assert is_connected(first.graph)
