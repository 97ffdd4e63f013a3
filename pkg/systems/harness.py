from functools import partial
from typing import Dict, Optional

import numpy as np

from core.config import ResolvedScenario, resolve_scenario
from core.errors import DkfError, NodeFailure, SimulationError
from core.log import LOG
from core.metrics import RunResult
from core.schemas import ScenarioConfig
from estimation.confilter import BandpassForm, ConsensusFilterState, consensus_step
from estimation.exact import ExactBandpass, ExactDetector
from estimation.kalman import CkfState, ckf_step, exact_averages, network_information_terms
from estimation.mintime import MinTimeDetector
from estimation.robust import RobustDetector
from estimation.sysmodel import measure, step_process
from systems.dkf import DetectorBank, NodeFilterBank, message_counts

# stream tags of the per-run noise generators
_PROCESS_STREAM = 0
_MEASUREMENT_STREAM = 1
_OBSERVATION_STREAM = 2

_PROGRESS_EVERY = 500


def _observation_noise(cfg: ScenarioConfig, n: int, m: int, observation: int) -> np.ndarray:
    if cfg.observation_noise <= 0:
        return np.zeros((n, m, m))
    return np.stack([
        np.random.default_rng([cfg.run_seed, _OBSERVATION_STREAM, node, observation]).normal(0.0, cfg.observation_noise, (m, m))
        for node in range(n)
    ])


def _detector_banks(cfg: ScenarioConfig, n: int, m: int) -> Dict[str, DetectorBank]:
    leading_zero_limit = 2 * (n - 1)
    banks = {}
    if "a1" in cfg.algorithms:
        if cfg.exact_a1:
            factory = partial(ExactDetector, leading_zero_limit=leading_zero_limit)
        else:
            factory = partial(MinTimeDetector, sigma_threshold=cfg.sigma_threshold,
                              leading_zero_limit=leading_zero_limit)
        banks["a1"] = DetectorBank("a1", n, m, symmetric=cfg.symmetric_detectors, detector_factory=factory)
    if "a2" in cfg.algorithms:
        banks["a2"] = DetectorBank("a2", n, m, symmetric=cfg.symmetric_detectors, detector_factory=lambda: RobustDetector(
            rho=cfg.rho, noise_std=cfg.observation_noise, sigma_threshold=cfg.sigma_threshold,
            leading_zero_limit=leading_zero_limit))
    return banks


def exact_observation_limit(n: int) -> int:
    """Last observation an exact detector can need: 2(n-1) skipped zeros, then a recurrence of order <= 2n."""
    return 2 * (n - 1) + 4 * n + 1


class _ExactFeed:
    """Steps the exact band-pass filter alongside the float one while the A1 detectors still collect."""

    def __init__(self, bank: DetectorBank, filt: ExactBandpass, limit: int):
        self.bank = bank
        self.filter = filt
        self.limit = limit

    def push(self, observation: int) -> None:
        if self.bank.all_done or observation > self.limit:
            return
        if observation > 0:
            self.filter.step()
        self.bank.push(observation, self.filter.values())
        if observation == self.limit and not self.bank.all_done:
            LOG.warning(f"a1 nodes {[node for node, d in enumerate(self.bank.done_at) if d is None]} found no "
                        f"exact recurrence by observation {self.limit}, they stay on the band-pass estimate")


def run_scenario(cfg: ScenarioConfig, scenario: Optional[ResolvedScenario] = None) -> RunResult:
    """
    Runs the CKF and the distributed filters of a scenario side by side in synchronous rounds.

    Each step k: the nodes measure x(k); the CKF processes the stacked measurements; every node performs one
    low-pass and one band-pass consensus round, producing observation k+1; the detectors of A1 (minimum-time)
    and A2 (robust) see that observation, with additive noise when the scenario asks for it; the local filters
    update with g_i (or g^c when g_oracle is set) and S_i, except that A1/A2 nodes use their assembled S^c once
    the observation index is past their last detection. A0 and A1 share the consensus filter state, so they
    differ only in the S they feed to the local filter. The truth then advances.

    With ``exact_a1`` the A1 detectors see the same band-pass outputs computed in exact rational arithmetic
    instead of the float ones.

    Noise streams are keyed by (run_seed, stream, node, step), making the run deterministic.

    :param cfg: A validated scenario.
    :param scenario: The numerical models of ``cfg`` if they were already built.
    :return: The traces and detection data of the run.
    :raises SimulationError: If a module fails, with the step (and node, where known) it failed at.
    """
    scenario = scenario or resolve_scenario(cfg)
    pm, sensors, graph, eps = scenario.process, scenario.sensors, scenario.graph, scenario.step_size
    n, m, steps = len(sensors), pm.m, cfg.steps
    form = BandpassForm(cfg.bandpass_form)
    LOG.info(f"--- Running scenario={cfg.name} n={n} steps={steps} eps={eps} algorithms={cfg.algorithms} "
             f"seed={cfg.run_seed} ---")

    u_mats, _ = network_information_terms(sensors, [np.zeros(sm.h.shape[0]) for sm in sensors])
    s_consensus = u_mats.mean(axis=0)
    consensus = ConsensusFilterState.initial(u_mats, m)
    ckf = CkfState.initial(m, n, cfg.prior_scale)
    filters = {name: NodeFilterBank(name, pm, n, cfg.prior_scale) for name in ("a0", "a1", "a2")
               if name in cfg.algorithms}
    detectors = _detector_banks(cfg, n, m)
    exact_feed = None
    if cfg.exact_a1 and "a1" in detectors:
        exact_feed = _ExactFeed(detectors["a1"], ExactBandpass.initial(graph, u_mats, eps, form),
                                exact_observation_limit(n))
    float_banks = [bank for name, bank in detectors.items() if exact_feed is None or name != "a1"]

    truth = np.zeros((steps, m))
    estimates = {"ckf": np.zeros((steps, m))}
    estimates.update({name: np.zeros((steps, n, m)) for name in filters})
    s_trace = np.zeros((steps, n, m, m))
    g_error = np.zeros((steps, n))

    observed = consensus.s + _observation_noise(cfg, n, m, 0)
    for bank in float_banks:
        bank.push(0, observed)
    if exact_feed is not None:
        exact_feed.push(0)

    x = np.array(scenario.initial_truth, dtype=float)
    for k in range(steps):
        try:
            truth[k] = x
            z_all = [measure(sm, x, np.random.default_rng([cfg.run_seed, _MEASUREMENT_STREAM, node, k]))
                     for node, sm in enumerate(sensors)]
            _, u_vecs = network_information_terms(sensors, z_all)
            _, g_c = exact_averages(sensors, z_all)

            ckf = ckf_step(ckf, sensors, pm, z_all)
            estimates["ckf"][k] = ckf.x_post

            consensus = consensus_step(consensus, graph, u_vecs, u_mats, eps, form)
            s_trace[k] = consensus.s
            g_used = np.broadcast_to(g_c, (n, m)) if cfg.g_oracle else consensus.g
            g_error[k] = np.linalg.norm(g_used - g_c, axis=1)

            observation = k + 1
            if exact_feed is not None:
                exact_feed.push(observation)
            if float_banks and not all(bank.all_done for bank in float_banks):
                observed = consensus.s + _observation_noise(cfg, n, m, observation)
                for bank in float_banks:
                    bank.push(observation, observed)

            for name, bank in filters.items():
                s_used = consensus.s if name == "a0" else detectors[name].s_used(consensus.s, observation)
                estimates[name][k] = bank.step(g_used, s_used)

            x = step_process(pm, x, np.random.default_rng([cfg.run_seed, _PROCESS_STREAM, k]))
        except NodeFailure as e:
            raise SimulationError(e.node, k, e.original_error)
        except DkfError as e:
            raise SimulationError(None, k, e)

        if (k + 1) % _PROGRESS_EVERY == 0:
            LOG.debug(f"{cfg.name}: step {k + 1}/{steps}, CKF estimate {estimates['ckf'][k]}")

    degrees = np.array([len(graph.neighbors(node)) for node in range(n)])
    result = RunResult(
        scenario=cfg.name,
        algorithms=list(cfg.algorithms),
        n=n,
        m=m,
        steps=steps,
        step_size=eps,
        truth=truth,
        estimates=estimates,
        s_initial=np.array(u_mats),
        s_trace=s_trace,
        s_consensus=s_consensus,
        g_error=g_error,
        g_oracle=cfg.g_oracle,
        detections=[event for bank in detectors.values() for event in bank.events],
        done_at={name: bank.done_at_array() for name, bank in detectors.items()},
        assembled={name: bank.assembled_array(m) for name, bank in detectors.items()},
        messages=message_counts(steps, degrees, detectors),
        detector_failures=sum(bank.failures for bank in detectors.values()),
        a0_tolerance=cfg.a0_tolerance,
        theorem_rho=cfg.theorem_rho,
    )
    LOG.info(f"--- Finished scenario={cfg.name}: "
             + ", ".join(f"{name} done_at max={int(np.max(bank.done_at_array()))}" for name, bank in detectors.items())
             + " ---")
    return result
