"""
Network-level filters compared by the harness.

NodeFilterBank runs the local DKF update of every node at once. DetectorBank holds the per-node minimum-time
(or robust) detectors of the band-pass output and decides, per node, whether the node still uses its
band-pass estimate S_i or has switched to the assembled S^c.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from core.errors import DkfError, NodeFailure
from core.log import LOG
from estimation.kalman import information_update, predict
from estimation.mintime import MatrixConsensus
from estimation.sysmodel import ProcessModel, is_positive_semidefinite


@dataclass(frozen=True)
class DetectionEvent:
    algorithm: str
    node: int
    element: Tuple[int, int]
    observation: int
    phi: float


class NodeFilterBank:
    """
    Local Kalman filters of all n nodes: prior P_i = prior_scale I and scaled process noise n Q.
    """

    def __init__(self, name: str, pm: ProcessModel, n: int, prior_scale: float = 10.0):
        self.name = name
        self.pm = pm
        m = pm.m
        self.x_prior = np.zeros((n, m))
        self.p_kf = np.broadcast_to(prior_scale * np.eye(m), (n, m, m)).copy()
        self.q_scaled = n * pm.q_cov
        self.x_post = np.zeros((n, m))
        self.m_kf = self.p_kf.copy()

    def step(self, g: np.ndarray, s: np.ndarray) -> np.ndarray:
        """
        Update with per-node (g_i, S_i) and predict.

        :param g: (n, m) estimates of g^c.
        :param s: (n, m, m) estimates of S^c.
        :return: The (n, m) posterior estimates of this step.
        :raises NodeFailure: With the first node whose update fails.
        """
        try:
            self.x_post, self.m_kf = information_update(self.x_prior, self.p_kf, g, s)
        except DkfError as e:
            raise NodeFailure(self._failing_node(g, s), e)
        self.x_prior, self.p_kf = predict(self.pm, self.x_post, self.m_kf, self.q_scaled)
        return self.x_post

    def _failing_node(self, g: np.ndarray, s: np.ndarray) -> Optional[int]:
        for node in range(self.x_prior.shape[0]):
            try:
                information_update(self.x_prior[node], self.p_kf[node], g[node], s[node])
            except DkfError:
                return node
        return None


class DetectorBank:
    """
    One MatrixConsensus per node fed with the (possibly noisy) band-pass outputs.
    """

    def __init__(self, algorithm: str, n: int, m: int, detector_factory: Callable, symmetric: bool = True):
        self.algorithm = algorithm
        self.nodes = [MatrixConsensus(m, symmetric=symmetric, detector_factory=detector_factory) for _ in range(n)]
        self.assembled: List[Optional[np.ndarray]] = [None] * n
        self.done_at: List[Optional[int]] = [None] * n
        self.events: List[DetectionEvent] = []
        self.failures = 0

    @property
    def all_done(self) -> bool:
        return all(d is not None for d in self.done_at)

    def push(self, observation: int, s_observed: np.ndarray) -> None:
        """
        Feeds observation index ``observation`` of every node still collecting.

        :param s_observed: (n, m, m) values seen by the detectors.
        """
        for node, bank in enumerate(self.nodes):
            if self.done_at[node] is not None:
                continue
            pending = [element for element, detector in bank.detectors.items() if detector.result is None]
            for element, error in bank.push(s_observed[node]):
                self.failures += 1
                LOG.warning(f"{self.algorithm} node {node} element {element} observation {observation}: "
                            f"{error.message}, still collecting")
            for element in pending:
                result = bank.detectors[element].result
                if result is not None:
                    self.events.append(DetectionEvent(self.algorithm, node, element, result.detected_at, result.phi))
            consensus, done_at = bank.matrix_consensus()
            if consensus is None:
                continue
            if not is_positive_semidefinite(consensus):
                self.failures += 1
                LOG.warning(f"{self.algorithm} node {node} observation {observation}: assembled S^c is not "
                            f"symmetric positive semidefinite, detections dropped, still collecting")
                bank.reject()
                continue
            self.assembled[node] = consensus
            self.done_at[node] = done_at
            LOG.debug(f"{self.algorithm} node {node} assembled S^c at observation {done_at}")

    def s_used(self, s_band: np.ndarray, observation: int) -> np.ndarray:
        """
        S_i for nodes still running the band-pass filter, the assembled S^c for nodes whose last detection is
        strictly older than ``observation``.
        """
        s = np.array(s_band, copy=True)
        for node, done_at in enumerate(self.done_at):
            if done_at is not None and observation > done_at:
                s[node] = self.assembled[node]
        return s

    def done_at_array(self) -> np.ndarray:
        return np.array([-1 if d is None else d for d in self.done_at], dtype=int)

    def assembled_array(self, m: int) -> np.ndarray:
        return np.stack([np.full((m, m), np.nan) if a is None else a for a in self.assembled])


def element_messages(done_at: np.ndarray, degrees: np.ndarray, steps: int) -> int:
    """
    Matrix messages sent for the S exchange: node i broadcasts to its deg_i neighbours every step until it has
    assembled S^c (or for the whole run).
    """
    rounds = np.where(done_at >= 0, np.minimum(done_at, steps), steps)
    return int(np.sum(rounds * degrees))


def message_counts(steps: int, degrees: np.ndarray, banks: Dict[str, DetectorBank]) -> Dict[str, int]:
    counts = {"a0": int(steps * np.sum(degrees))}
    for name, bank in banks.items():
        counts[name] = element_messages(bank.done_at_array(), degrees, steps)
    return counts
