"""
Minimum-time consensus detection.

A node's scalar output sequence of a linear consensus filter obeys a linear recurrence. Once a Hankel matrix
of its first differences loses rank, the kernel of that matrix gives the recurrence and therefore the final
value of the sequence, long before the filter itself settles.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import hankel

from core.constants import (
    FINAL_VALUE_DENOMINATOR_TOL,
    KERNEL_NORMALIZATION_TOL,
    ROOT_AT_ONE_TOL,
    SIGMA_THRESHOLD_NOISELESS,
)
from core.errors import DegenerateKernel, DkfError, NoRootAtOne, NumericalFailure, WrongLength
from core.log import LOG


class DetectorStatus(str, Enum):
    COLLECTING = "collecting"
    DETECTED = "detected"


@dataclass(frozen=True)
class Detection:
    beta: np.ndarray
    phi: float
    # observation index of the sample the detection was accepted at
    detected_at: int


def hankel_of_differences(diffs: Sequence[float]) -> np.ndarray:
    """
    Square Hankel matrix with entry (i, j) = diffs[i + j].

    :param diffs: 2k+1 first differences.
    :return: The (k+1)×(k+1) Hankel matrix.
    :raises WrongLength: For an even number of differences.
    """
    diffs = np.asarray(diffs, dtype=float)
    if diffs.ndim != 1 or diffs.size % 2 == 0:
        raise WrongLength(f"a square Hankel matrix needs an odd number of differences, got {diffs.size}")
    k = diffs.size // 2
    return hankel(diffs[:k + 1], diffs[k:])


def final_value(history: Sequence[float], beta: Sequence[float]) -> float:
    """
    φ = y_dᵀ β / 1ᵀ β with y_d = [y(0), ..., y(d)].

    Evaluated as y(0) + (y_d - y(0))ᵀ β / 1ᵀ β, the same value with fewer digits lost to cancellation when the
    roots of β crowd around 1.

    :raises NumericalFailure: If |1ᵀ β| is below the tolerance.
    """
    beta = np.asarray(beta, dtype=float)
    y_d = np.asarray(history, dtype=float)[:beta.size]
    denominator = float(np.sum(beta))
    if abs(denominator) <= FINAL_VALUE_DENOMINATOR_TOL:
        raise NumericalFailure(f"final value denominator 1ᵀβ = {denominator:.3e} vanished")
    return float(y_d[0]) + float((y_d - y_d[0]) @ beta) / denominator


def beta_from_alpha(alpha: Sequence[float]) -> np.ndarray:
    """
    Coefficients of q(t) / (t - 1) for the monic polynomial q(t) = t^{d+1} + α_d t^d + ... + α_0.

    β_j = 1 + Σ_{i=j+1}^{d} α_i for j < d and β_d = 1.

    :param alpha: α_0..α_d, the leading coefficient 1 is implied.
    :raises NoRootAtOne: If q(1) = 1 + Σ α is not zero within tolerance.
    """
    alpha = np.asarray(alpha, dtype=float)
    if abs(1.0 + float(np.sum(alpha))) > ROOT_AT_ONE_TOL:
        raise NoRootAtOne(f"q(1) = {1.0 + float(np.sum(alpha)):.3e}, the polynomial has no root at 1")
    tail_sums = np.cumsum(alpha[::-1])[::-1]
    return np.append(1.0 + tail_sums[1:], 1.0)


def normalized_kernel(v: np.ndarray) -> np.ndarray:
    """Scales a kernel vector to last component 1."""
    if abs(v[-1]) < KERNEL_NORMALIZATION_TOL:
        raise DegenerateKernel(f"kernel vector has last component {v[-1]:.3e}, cannot normalize")
    return v / v[-1]


def _annihilates(gamma: np.ndarray, beta: np.ndarray, tolerance: float) -> bool:
    """True when both shifts of β, [β; 0] and [0; β], lie in the numerical kernel of the one-larger Hankel matrix."""
    bound = tolerance * float(np.linalg.norm(beta))
    return max(float(np.linalg.norm(gamma[:, :-1] @ beta)), float(np.linalg.norm(gamma[:, 1:] @ beta))) <= bound


@dataclass
class MinTimeDetector:
    """
    Accumulates one scalar signal and watches the difference Hankel matrices for rank loss.

    Exactly zero leading differences are skipped, up to ``leading_zero_limit`` of them, by moving the origin of
    the sequence forward. A recurrence is shift invariant, so the kernel found on the shifted sequence still
    yields the final value.

    With ``confirm`` set, a rank loss is only a candidate: its recurrence must also annihilate the Hankel matrix
    one size larger, two samples later, or the candidate is dropped and collection goes on.
    """
    sigma_threshold: float = SIGMA_THRESHOLD_NOISELESS
    leading_zero_limit: int = 0
    confirm: bool = True
    history: List[float] = field(default_factory=list)
    origin: int = 0
    candidate: Optional[Detection] = None
    result: Optional[Detection] = None

    @property
    def status(self) -> DetectorStatus:
        return DetectorStatus.DETECTED if self.result is not None else DetectorStatus.COLLECTING

    @property
    def diffs(self) -> np.ndarray:
        return np.diff(np.asarray(self.history, dtype=float))

    def reject(self) -> None:
        """Drops the detection and keeps collecting from the current history."""
        self.result = None
        self.candidate = None

    def push_observation(self, y: float) -> DetectorStatus:
        """
        Appends y and runs the rank test whenever the effective sequence holds 2k+2 samples.

        :raises DegenerateKernel: If the detected kernel cannot be normalized. The detector keeps collecting.
        :raises NumericalFailure: If the final value denominator vanishes. The detector keeps collecting.
        """
        if self.result is not None:
            return self.status

        self.history.append(float(y))
        index = len(self.history) - 1
        if index >= 1 and self.origin == index - 1 and self.origin < self.leading_zero_limit \
                and self.history[index] == self.history[index - 1]:
            self.origin = index

        samples = self.history[self.origin:]
        if len(samples) < 2 or len(samples) % 2 != 0:
            return self.status

        gamma = hankel_of_differences(np.diff(samples))
        _, singular_values, vh = np.linalg.svd(gamma)
        sigma_min, sigma_max = singular_values[-1], singular_values[0]
        tolerance = self.sigma_threshold * max(1.0, sigma_max)

        if self.candidate is not None:
            candidate, self.candidate = self.candidate, None
            if _annihilates(gamma, candidate.beta, tolerance):
                self.result = replace(candidate, detected_at=index)
                LOG.debug(f"Rank loss of observation {candidate.detected_at} confirmed at observation {index}, "
                          f"phi={candidate.phi:.12g}")
                return self.status
            LOG.debug(f"Rank loss of observation {candidate.detected_at} not confirmed at observation {index}")

        if sigma_min > tolerance:
            return self.status

        beta = normalized_kernel(vh[-1])
        phi = final_value(samples, beta)
        detection = Detection(beta=beta, phi=phi, detected_at=index)
        LOG.debug(f"Rank loss at observation {index}: Hankel size {gamma.shape[0]}, "
                  f"sigma_min={sigma_min:.3e}, phi={phi:.12g}")
        if self.confirm:
            self.candidate = detection
        else:
            self.result = detection
        return self.status


class MatrixConsensus:
    """
    Per-element detectors of an m×m signal.

    In symmetric mode only the elements (h, l) with h <= l are watched and the assembled matrix is mirrored.
    """

    def __init__(self, m: int, sigma_threshold: float = SIGMA_THRESHOLD_NOISELESS, symmetric: bool = True,
                 leading_zero_limit: int = 0, confirm: bool = True, detector_factory=None):
        self.m = m
        self.symmetric = symmetric
        self.elements: List[Tuple[int, int]] = [(h, l) for h in range(m) for l in range(m) if not symmetric or h <= l]
        factory = detector_factory or (lambda: MinTimeDetector(sigma_threshold=sigma_threshold,
                                                               leading_zero_limit=leading_zero_limit,
                                                               confirm=confirm))
        self.detectors: Dict[Tuple[int, int], object] = {element: factory() for element in self.elements}

    def push(self, s: np.ndarray) -> List[Tuple[Tuple[int, int], DkfError]]:
        """
        Pushes one m×m observation to every element detector still collecting.

        :return: The (element, error) pairs of detectors whose rank test failed numerically on this sample.
        """
        failures = []
        for (h, l), detector in self.detectors.items():
            if detector.result is None:
                try:
                    detector.push_observation(s[h, l])
                except DkfError as e:
                    failures.append(((h, l), e))
        return failures

    @property
    def done(self) -> bool:
        return all(d.result is not None for d in self.detectors.values())

    def reject(self) -> None:
        """Drops every element detection, the detectors keep their histories and go on collecting."""
        for detector in self.detectors.values():
            detector.reject()

    def matrix_consensus(self) -> Tuple[Optional[np.ndarray], Optional[int]]:
        """
        :return: (assembled S^c, done_at) once every element detected, (None, None) before that.
        """
        if not self.done:
            return None, None
        consensus = np.zeros((self.m, self.m))
        for (h, l), detector in self.detectors.items():
            consensus[h, l] = detector.result.phi
            if self.symmetric:
                consensus[l, h] = detector.result.phi
        done_at = max(d.result.detected_at for d in self.detectors.values())
        return consensus, done_at


def matrix_consensus(detectors: MatrixConsensus) -> Tuple[Optional[np.ndarray], Optional[int]]:
    return detectors.matrix_consensus()
