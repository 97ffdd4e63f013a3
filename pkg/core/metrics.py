from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from core.constants import SETTLING_TOLERANCE, THEOREM_SLACK
from core.errors import NeverConverged
from core.log import LOG


@dataclass
class RunResult:
    """
    Traces and detection data of one scenario run.

    Per-step arrays have ``steps`` rows; row k belongs to simulation step k, whose consensus update produced
    observation index k+1. ``s_initial`` holds observation 0, the band-pass state before any update.
    """
    scenario: str
    algorithms: List[str]
    n: int
    m: int
    steps: int
    step_size: float
    truth: np.ndarray
    estimates: Dict[str, np.ndarray]
    s_initial: np.ndarray
    s_trace: np.ndarray
    s_consensus: np.ndarray
    g_error: np.ndarray
    g_oracle: bool
    detections: list = field(default_factory=list)
    done_at: Dict[str, np.ndarray] = field(default_factory=dict)
    assembled: Dict[str, np.ndarray] = field(default_factory=dict)
    messages: Dict[str, int] = field(default_factory=dict)
    detector_failures: int = 0
    a0_tolerance: float = 1e-3
    theorem_rho: float = 1e-9


def s_observations(res: RunResult) -> np.ndarray:
    """Band-pass observations 0..steps stacked as (steps+1, n, m, m)."""
    return np.concatenate([res.s_initial[None], res.s_trace], axis=0)


def a0_convergence_step(res: RunResult, node: int, tolerance: Optional[float] = None) -> int:
    """
    Observation index after which ‖S_i - S^c‖ stays within tolerance · ‖S^c‖, both max-abs over elements.

    :raises NeverConverged: If the last recorded observation is still outside the tube.
    """
    tolerance = res.a0_tolerance if tolerance is None else tolerance
    deviation = np.max(np.abs(s_observations(res)[:, node] - res.s_consensus), axis=(1, 2))
    outside = np.flatnonzero(deviation > tolerance * np.max(np.abs(res.s_consensus)))
    if outside.size == 0:
        return 0
    if outside[-1] == deviation.size - 1:
        raise NeverConverged(node, tolerance)
    return int(outside[-1] + 1)


def node_consensus_steps(res: RunResult, algorithm: str) -> np.ndarray:
    """Per-node observation index of reaching S^c, NaN where it never happened."""
    if algorithm == "a0":
        steps = []
        for node in range(res.n):
            try:
                steps.append(a0_convergence_step(res, node))
            except NeverConverged as e:
                LOG.warning(f"A0 {e.message}")
                steps.append(np.nan)
        return np.asarray(steps, dtype=float)
    done_at = res.done_at[algorithm].astype(float)
    done_at[done_at < 0] = np.nan
    return done_at


def time_to_consensus_stats(res: RunResult, eps_seconds: Optional[float] = None) -> pd.DataFrame:
    """
    Shortest, longest and average time (seconds) the nodes took to obtain S^c, one row per algorithm.

    A0 counts the persistent entry into the tolerance tube, A1 and A2 the last element detection. Nodes that
    never got there are left out of the aggregates and counted in ``unconverged``.
    """
    eps_seconds = res.step_size if eps_seconds is None else eps_seconds
    rows = {}
    for algorithm in [a for a in res.algorithms if a in ("a0", "a1", "a2")]:
        times = node_consensus_steps(res, algorithm) * eps_seconds
        reached = times[~np.isnan(times)]
        rows[algorithm] = {
            "shortest": float(np.min(reached)) if reached.size else np.nan,
            "longest": float(np.max(reached)) if reached.size else np.nan,
            "average": float(np.mean(reached)) if reached.size else np.nan,
            "unconverged": int(np.count_nonzero(np.isnan(times))),
        }
    return pd.DataFrame.from_dict(rows, orient="index", columns=["shortest", "longest", "average", "unconverged"])


def error_trace(res: RunResult, node: int, algorithm: str) -> np.ndarray:
    """Per-step ‖x̂_i - x̂_c‖₂ of one node."""
    return np.linalg.norm(res.estimates[algorithm][:, node] - res.estimates["ckf"], axis=1)


def error_traces(res: RunResult, algorithm: str) -> np.ndarray:
    """(steps, n) error norms of every node."""
    return np.linalg.norm(res.estimates[algorithm] - res.estimates["ckf"][:, None, :], axis=2)


def settling_step(trace: np.ndarray, reference: np.ndarray, tolerance: float = SETTLING_TOLERANCE) -> Optional[int]:
    """First step after which trace <= tolerance · max(1, reference) holds until the end of the run."""
    bound = tolerance * np.maximum(1.0, reference)
    outside = np.flatnonzero(trace > bound)
    if outside.size == 0:
        return 0
    if outside[-1] == trace.size - 1:
        return None
    return int(outside[-1] + 1)


def estimate_settling_times(res: RunResult) -> Dict[str, Optional[float]]:
    """Seconds until every node's estimate stays close to the CKF estimate."""
    reference = np.linalg.norm(res.estimates["ckf"], axis=1) if res.steps else np.zeros(0)
    settling = {}
    for algorithm in [a for a in res.algorithms if a in ("a0", "a1", "a2")]:
        worst = np.max(error_traces(res, algorithm), axis=1) if res.steps else np.zeros(0)
        step = settling_step(worst, reference)
        settling[algorithm] = None if step is None else step * res.step_size
    return settling


def theorem_check(res: RunResult, improved: str = "a1", baseline: str = "a0"
                  ) -> Tuple[int, List[Tuple[int, int, float]]]:
    """
    Compares ‖x̂_i^{improved} - x̂_c‖ with ‖x̂_i^{baseline} - x̂_c‖ on every step where node i already uses the
    assembled S^c and its g estimate is within theorem_rho of g^c.

    :return: (number of checked (step, node) points, list of (step, node, excess) violations).
    """
    if res.steps == 0:
        return 0, []
    improved_error = error_traces(res, improved)
    baseline_error = error_traces(res, baseline)
    observation = np.arange(1, res.steps + 1)[:, None]
    done_at = res.done_at[improved][None, :]
    mask = (done_at >= 0) & (observation > done_at) & (res.g_error <= res.theorem_rho)
    excess = improved_error - baseline_error - THEOREM_SLACK
    violations = [(int(k), int(i), float(excess[k, i])) for k, i in zip(*np.nonzero(mask & (excess > 0)))]
    return int(np.count_nonzero(mask)), violations


def assembled_relative_error(res: RunResult, algorithm: str) -> Optional[float]:
    """Largest max-abs deviation of an assembled S^c from the exact one, relative to ‖S^c‖, over detected nodes."""
    assembled = res.assembled.get(algorithm)
    if assembled is None:
        return None
    detected = ~np.isnan(assembled).any(axis=(1, 2))
    if not detected.any():
        return None
    deviation = np.max(np.abs(assembled[detected] - res.s_consensus))
    return float(deviation / np.max(np.abs(res.s_consensus)))
