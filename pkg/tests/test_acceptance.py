"""
End-to-end checks on the bundled twenty-node scenario and on seeded random networks with the same sensor layout.
"""

from functools import partial

import numpy as np
import pytest

from core.config import parse_config
from core.log import LOG
from core.metrics import theorem_check, time_to_consensus_stats
from estimation.confilter import ConsensusFilterState, StackedForm, build_stacked_system, iterate_bandpass, \
    spectrum_check
from estimation.exact import ExactBandpass, ExactDetector
from estimation.graph import Graph, default_step_size, derive_matrices, max_step_size, random_connected_graph
from estimation.kalman import exact_averages, network_information_terms
from estimation.mintime import MatrixConsensus
from estimation.sysmodel import mixed_sensor_models
from systems.harness import run_scenario

INNER_MODULUS_BOUND = 1.0 - 1e-6


def _long_run_limit(s, p_band, graph, u_mats, eps, max_steps=100_000, chunk=1_000):
    for _ in range(max_steps // chunk):
        s, p_band, change = iterate_bandpass(s, p_band, graph, u_mats, eps, chunk)
        if change <= 1e-13 * np.max(np.abs(s)):
            break
    return s


def _detect_network(graph, u_mats, eps, max_observations):
    n = graph.n
    exact = ExactBandpass.initial(graph, u_mats, eps)
    factory = partial(ExactDetector, leading_zero_limit=2 * (n - 1))
    banks = [MatrixConsensus(2, detector_factory=factory) for _ in range(n)]
    for observation in range(max_observations + 1):
        if observation > 0:
            exact.step()
        values = exact.values()
        for node, bank in enumerate(banks):
            failures = bank.push(values[node])
            assert not failures, f"node {node} observation {observation}: {failures}"
        if all(bank.done for bank in banks):
            break
    return [bank.matrix_consensus() for bank in banks]


@pytest.mark.parametrize("n", [5, 10, 20])
def test_minimum_time_consensus_on_random_networks(n):
    graph = random_connected_graph(n, 0.3, seed=n)
    models = mixed_sensor_models(n)
    s_exact, _ = exact_averages(models, [np.zeros(2)] * n)
    u_mats, _ = network_information_terms(models, [np.zeros(2)] * n)
    eps = default_step_size(graph)

    results = _detect_network(graph, u_mats, eps, 4 * n + 2)
    state = ConsensusFilterState.initial(u_mats, 2)
    limit = _long_run_limit(state.s, state.p_band, graph, u_mats, eps)
    scale = np.max(np.abs(s_exact))

    np.testing.assert_allclose(limit, np.broadcast_to(s_exact, limit.shape), rtol=0, atol=1e-8 * scale)
    for node, (assembled, done_at) in enumerate(results):
        assert assembled is not None, f"node {node} did not detect within {4 * n + 2} observations"
        assert done_at <= 4 * n + 2
        error = np.max(np.abs(assembled - s_exact)) / scale
        to_limit = np.max(np.abs(assembled - limit[node])) / scale
        LOG.info(f"n={n} node={node} done_at={done_at} relative error to S^c {error:.3e}, "
                 f"to the long-run limit {to_limit:.3e}")
        assert error <= 1e-6
        assert to_limit <= 1e-8


def _predicted_inner_modulus(graph, eps, form):
    """Largest non-unit eigenvalue modulus from the two diagonal blocks of the block upper triangular A."""
    _, degree, laplacian = derive_matrices(graph)
    eye = np.eye(graph.n)
    upper = laplacian + degree if StackedForm(form) is StackedForm.PRINTED else laplacian + degree + eye
    upper_eigs = 1.0 - eps * np.linalg.eigvalsh(upper)
    lower_eigs = 1.0 - eps * np.linalg.eigvalsh(laplacian)
    return float(max(np.max(np.abs(upper_eigs)), np.max(np.abs(lower_eigs[1:]))))


def _inner_modulus_outcomes(graph, eps):
    outcomes = {}
    for form in StackedForm:
        report = spectrum_check(build_stacked_system(graph, eps, 0, form))
        assert report.unit_eigs == 1
        assert report.max_inner_modulus == pytest.approx(_predicted_inner_modulus(graph, eps, form), abs=1e-7)
        outcomes[form] = report.max_inner_modulus <= INNER_MODULUS_BOUND
    return outcomes


@pytest.mark.parametrize("seed", range(20))
def test_stacked_forms_at_ninety_percent_of_the_step_bound(seed):
    graph = random_connected_graph(4 + seed % 17, 0.3, seed)
    eps = 0.9 * max_step_size(graph)
    outcomes = _inner_modulus_outcomes(graph, eps)
    # the VECTORIZED S block is the PRINTED one minus eps I
    if outcomes[StackedForm.VECTORIZED]:
        assert outcomes[StackedForm.PRINTED]
    assert outcomes[StackedForm.VECTORIZED] == outcomes[StackedForm.CASCADE]
    summary = ", ".join(f"{form.value} {'meets' if met else 'misses'}" for form, met in outcomes.items())
    LOG.info(f"seed={seed} eps={eps:.4g}: {summary}")


@pytest.mark.parametrize("seed", range(20))
def test_stacked_forms_at_the_default_step_size(seed):
    graph = random_connected_graph(4 + seed % 17, 0.3, seed)
    outcomes = _inner_modulus_outcomes(graph, default_step_size(graph))
    assert all(outcomes.values()), outcomes


def test_printed_form_on_a_star_meets_the_bound_the_vectorized_form_misses():
    star = Graph.star(4)
    eps = 0.9 * max_step_size(star)
    report = spectrum_check(build_stacked_system(star, eps, 0, StackedForm.PRINTED))
    assert report.max_inner_modulus == pytest.approx(abs(1.0 - eps * (4.0 + np.sqrt(7.0))), abs=1e-9)
    assert _inner_modulus_outcomes(star, eps) == {StackedForm.PRINTED: True, StackedForm.VECTORIZED: False,
                                                   StackedForm.CASCADE: False}


def test_printed_form_on_a_path_misses_the_bound():
    path = Graph.path(4)
    eps = 0.9 * max_step_size(path)
    report = spectrum_check(build_stacked_system(path, eps, 0, StackedForm.PRINTED))
    assert not report.stable
    assert report.max_inner_modulus == pytest.approx(eps * (7.0 + np.sqrt(13.0)) / 2.0 - 1.0, abs=1e-9)
    assert not any(_inner_modulus_outcomes(path, eps).values())


@pytest.fixture(scope="module")
def twenty_node_run():
    cfg = parse_config("scenario_paper_sec4")
    return run_scenario(cfg)


def test_minimum_time_consensus_is_faster_than_asymptotic(twenty_node_run):
    table = time_to_consensus_stats(twenty_node_run)
    LOG.info(f"Timing table:\n{table.to_string()}")
    assert table.loc["a1", "average"] <= 0.3 * table.loc["a0", "average"]


def test_minimum_time_run_uses_fewer_messages(twenty_node_run):
    assert twenty_node_run.messages["a1"] < twenty_node_run.messages["a0"]


@pytest.mark.parametrize("seed", range(10))
def test_assembled_information_never_worsens_the_estimate(seed):
    cfg = parse_config("scenario_paper_sec4", {"run_seed": seed, "steps": 150})
    res = run_scenario(cfg)
    checked, violations = theorem_check(res)
    assert checked > 0
    assert violations == []
