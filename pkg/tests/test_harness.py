import numpy as np
import pytest

from core.config import parse_config, validate_config
from core.errors import NodeFailure, SimulationError, SingularCovariance
from core.metrics import (
    a0_convergence_step,
    error_traces,
    node_consensus_steps,
    s_observations,
    theorem_check,
    time_to_consensus_stats,
)
from estimation.graph import Graph, default_step_size
from estimation.mintime import Detection
from estimation.sysmodel import is_positive_semidefinite
from systems.dkf import DetectorBank, NodeFilterBank, element_messages
from systems.harness import exact_observation_limit, run_scenario


@pytest.fixture(scope="module")
def small_run():
    cfg = parse_config("scenario_small_n5", {"steps": 120})
    return cfg, run_scenario(cfg)


def test_result_shapes(small_run):
    _, res = small_run
    assert res.truth.shape == (120, 2)
    assert res.estimates["ckf"].shape == (120, 2)
    assert res.estimates["a0"].shape == (120, 5, 2)
    assert res.estimates["a1"].shape == (120, 5, 2)
    assert res.s_trace.shape == (120, 5, 2, 2)
    assert s_observations(res).shape == (121, 5, 2, 2)
    assert res.g_error.shape == (120, 5)


def test_run_is_deterministic(small_run):
    cfg, res = small_run
    again = run_scenario(cfg)
    np.testing.assert_array_equal(again.truth, res.truth)
    for name in res.estimates:
        np.testing.assert_array_equal(again.estimates[name], res.estimates[name])
    np.testing.assert_array_equal(again.done_at["a1"], res.done_at["a1"])


def test_different_seeds_give_different_truth(small_run):
    cfg, res = small_run
    other = run_scenario(cfg.model_copy(update={"run_seed": cfg.run_seed + 1}))
    assert not np.array_equal(other.truth[1:], res.truth[1:])


def test_a0_and_a1_coincide_until_the_switch(small_run):
    _, res = small_run
    done_at = res.done_at["a1"]
    for node in range(res.n):
        last_shared = res.steps if done_at[node] < 0 else min(done_at[node], res.steps)
        np.testing.assert_array_equal(res.estimates["a1"][:last_shared, node], res.estimates["a0"][:last_shared, node])


def test_every_node_detects(small_run):
    _, res = small_run
    assert np.all(res.done_at["a1"] >= 0)
    assert len(res.detections) == res.n * 3
    assert res.detector_failures == 0


def test_band_pass_trace_starts_from_sensor_information(small_run):
    _, res = small_run
    np.testing.assert_allclose(res.s_initial.mean(axis=0), res.s_consensus)


def test_message_counts(small_run):
    _, res = small_run
    degrees = np.array([1, 3, 2, 3, 1])
    assert res.messages["a0"] == 120 * degrees.sum()
    assert res.messages["a1"] == int(np.sum(res.done_at["a1"] * degrees))
    assert res.messages["a1"] < res.messages["a0"]


def test_element_messages_for_undetected_nodes():
    assert element_messages(np.array([4, -1]), np.array([2, 1]), 10) == 4 * 2 + 10 * 1


def test_timing_table(small_run):
    _, res = small_run
    table = time_to_consensus_stats(res)
    assert list(table.index) == ["a0", "a1"]
    assert table.loc["a1", "unconverged"] == 0
    assert table.loc["a1", "longest"] == pytest.approx(np.max(res.done_at["a1"]) * res.step_size)
    assert table.loc["a1", "shortest"] <= table.loc["a1", "average"] <= table.loc["a1", "longest"]


def test_a0_convergence_uses_persistent_entry(small_run):
    _, res = small_run
    steps = node_consensus_steps(res, "a0")
    for node in range(res.n):
        if not np.isnan(steps[node]):
            assert a0_convergence_step(res, node) == int(steps[node])
            deviation = np.max(np.abs(s_observations(res)[int(steps[node]):, node] - res.s_consensus))
            assert deviation <= res.a0_tolerance * np.max(np.abs(res.s_consensus))


def test_single_node_network_matches_centralized_filter(make_scenario):
    raw = make_scenario(n=1, steps=40, step_size=1.0)
    raw["graph"] = {"n": 1}
    res = run_scenario(validate_config(raw))
    np.testing.assert_allclose(res.estimates["a0"][:, 0], res.estimates["ckf"], rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(res.estimates["a1"][:, 0], res.estimates["ckf"], rtol=1e-9, atol=1e-9)
    assert res.done_at["a1"].tolist() == [1]
    np.testing.assert_allclose(res.assembled["a1"][0], res.s_consensus)
    assert time_to_consensus_stats(res).loc["a1", "shortest"] == pytest.approx(1.0)


def test_oracle_information_vector(make_scenario):
    res = run_scenario(validate_config(make_scenario(n=4, steps=30, g_oracle=True)))
    assert res.g_oracle
    np.testing.assert_array_equal(res.g_error, np.zeros((30, 4)))


def test_consensus_information_vector_error_is_tracked(make_scenario):
    res = run_scenario(validate_config(make_scenario(n=4, steps=30)))
    assert np.all(res.g_error[0] > 0)


def test_zero_steps(make_scenario):
    res = run_scenario(validate_config(make_scenario(n=3, steps=0)))
    assert res.truth.shape == (0, 2)
    assert res.done_at["a1"].tolist() == [-1, -1, -1]
    assert theorem_check(res) == (0, [])


def test_verbatim_form_runs(make_scenario):
    raw = make_scenario(n=4, steps=60, bandpass_form="verbatim")
    raw["step_size"] = default_step_size(Graph.path(4))
    res = run_scenario(validate_config(raw))
    assert np.all(np.isfinite(res.estimates["a0"]))
    assert np.all(np.isfinite(error_traces(res, "a1")))


def test_robust_algorithm_with_noisy_observations():
    cfg = parse_config("scenario_noisy_a2", {"steps": 200})
    res = run_scenario(cfg)
    assert set(res.done_at) == {"a1", "a2"}
    assert np.all(res.done_at["a2"] >= 0)
    detected = ~np.isnan(res.assembled["a2"]).any(axis=(1, 2))
    deviation = np.max(np.abs(res.assembled["a2"][detected] - res.s_consensus))
    assert deviation <= 5e-2 * np.max(np.abs(res.s_consensus))


class _EchoDetector:
    """Accepts every sample from the second one on as its own final value."""

    def __init__(self):
        self.history = []
        self.result = None

    def push_observation(self, y):
        self.history.append(float(y))
        if len(self.history) >= 2:
            self.result = Detection(beta=np.ones(1), phi=float(y), detected_at=len(self.history) - 1)

    def reject(self):
        self.result = None


def test_indefinite_assembled_matrix_is_rejected():
    bank = DetectorBank("a1", 1, 2, detector_factory=_EchoDetector)
    indefinite = np.array([[[1.0, 10.0], [10.0, 1.0]]])
    band = np.array([[[2.0, 0.0], [0.0, 2.0]]])
    bank.push(0, indefinite)
    bank.push(1, indefinite)
    assert bank.failures == 1
    assert bank.done_at == [None]
    np.testing.assert_array_equal(bank.s_used(band, 5), band)

    bank.push(2, np.array([[[4.0, 1.0], [1.0, 4.0]]]))
    assert bank.failures == 1
    assert bank.done_at == [2]
    np.testing.assert_array_equal(bank.s_used(band, 3)[0], [[4.0, 1.0], [1.0, 4.0]])


def test_node_filter_bank_names_the_failing_node(rotation_process):
    bank = NodeFilterBank("a1", rotation_process, 3)
    s = np.zeros((3, 2, 2))
    s[2] = -1e6 * np.eye(2)
    with pytest.raises(NodeFailure) as info:
        bank.step(np.zeros((3, 2)), s)
    assert info.value.node == 2
    assert isinstance(info.value.original_error, SingularCovariance)


def test_simulation_error_carries_the_node(make_scenario, monkeypatch):
    def failing_step(self, g, s):
        raise NodeFailure(1, SingularCovariance("matrix is not positive definite"))

    monkeypatch.setattr(NodeFilterBank, "step", failing_step)
    with pytest.raises(SimulationError) as info:
        run_scenario(validate_config(make_scenario(n=3, steps=5)))
    assert info.value.node == 1
    assert info.value.step == 0
    assert info.value.is_numerical
    assert "node 1, step 0" in info.value.message


def _assert_assembled_matrices_are_valid(res, name, rtol):
    scale = np.max(np.abs(res.s_consensus))
    for node, assembled in enumerate(res.assembled[name]):
        if np.isnan(assembled).any():
            continue
        assert is_positive_semidefinite(assembled), f"node {node}: {assembled}"
        if rtol is not None:
            assert np.max(np.abs(assembled - res.s_consensus)) <= rtol * scale, f"node {node}: {assembled}"


def test_short_twenty_node_run_completes():
    res = run_scenario(parse_config("scenario_paper_sec4", {"steps": 20, "algorithms": ["ckf", "a1"]}))
    assert np.all(np.isfinite(res.estimates["a1"]))
    assert res.detector_failures == 0
    _assert_assembled_matrices_are_valid(res, "a1", 1e-6)


def test_short_twenty_node_run_with_float_detection_completes():
    cfg = parse_config("scenario_paper_sec4", {"steps": 20, "algorithms": ["ckf", "a1"], "exact_detection": False})
    assert not cfg.exact_a1
    res = run_scenario(cfg)
    assert np.all(np.isfinite(res.estimates["a1"]))
    _assert_assembled_matrices_are_valid(res, "a1", None)


@pytest.fixture(scope="module")
def twenty_node_detection_run():
    n = 20
    return run_scenario(parse_config("scenario_paper_sec4", {"steps": exact_observation_limit(n) + 1,
                                                            "algorithms": ["ckf", "a0", "a1"]}))


def test_every_twenty_node_detection_is_exact_and_in_time(twenty_node_detection_run):
    res = twenty_node_detection_run
    assert np.all(res.done_at["a1"] >= 0)
    assert np.all(res.done_at["a1"] <= 4 * res.n + 2)
    assert res.detector_failures == 0
    _assert_assembled_matrices_are_valid(res, "a1", 1e-6)


def test_exact_detection_is_recorded_in_the_config():
    assert parse_config("scenario_paper_sec4").exact_a1
    assert not parse_config("scenario_noisy_a2").exact_a1
