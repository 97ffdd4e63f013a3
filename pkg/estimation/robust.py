"""
Consensus value from noisy observations through the nearest rank-deficient Hankel matrix.

A noisy difference Hankel matrix is generically full rank. Once its smallest singular value drops below the
acceptance threshold rho, the matrix is moved by exactly that singular value along a unit-norm Hankel
direction D with D v = v, which makes the smallest singular vector an exact kernel vector.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.linalg import circulant, hankel

from core.constants import (
    LEMMA_CHECK_TOL,
    RHO_NOISE_FACTOR,
    SIGMA_THRESHOLD_NOISELESS,
)
from core.errors import PropertyViolation, ZeroVector
from core.log import LOG
from estimation.mintime import Detection, DetectorStatus, final_value, hankel_of_differences, normalized_kernel


@dataclass(frozen=True)
class RobustApproximation:
    gamma_hat: np.ndarray
    d_mat: np.ndarray
    sigma_min: float
    v_min: np.ndarray
    rho: float


@dataclass(frozen=True)
class NotYetAcceptable:
    sigma_min: float
    rho: float


def hvec(mat: np.ndarray) -> np.ndarray:
    """Distinct antidiagonal values of a square Hankel matrix, length 2k+1 for size k+1."""
    return np.concatenate([mat[0, :], mat[1:, -1]])


def hankel_from_hvec(values: np.ndarray) -> np.ndarray:
    k = (values.size - 1) // 2
    return hankel(values[:k + 1], values[k:])


def build_cx(v: np.ndarray) -> np.ndarray:
    """
    Circulant band matrix of a kernel candidate.

    For v of length k+1 the matrix is (2k+1)×(2k+1); its first row is [v, 0, ..., 0] and every following row is
    the previous one shifted right with wrap-around.

    :raises ZeroVector: If v is zero.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ZeroVector("kernel candidate vector is zero")
    padded = np.concatenate([v, np.zeros(v.size - 1)])
    return circulant(padded).T


def perturbation_direction(v: np.ndarray) -> np.ndarray:
    """
    Hankel matrix D with D v = v and ‖D‖₂ <= 1, from hvec(D) = C_x⁺ C_xᵀ e₁.

    :raises PropertyViolation: If the constructed D fails either property.
    """
    c_x = build_cx(v)
    e_1 = np.zeros(c_x.shape[0])
    e_1[0] = 1.0
    d_mat = hankel_from_hvec(np.linalg.pinv(c_x) @ c_x.T @ e_1)

    scale = max(1.0, float(np.max(np.abs(v))))
    fixed_point_error = float(np.max(np.abs(d_mat @ v - v)))
    norm = float(np.linalg.norm(d_mat, 2))
    if fixed_point_error > LEMMA_CHECK_TOL * scale or norm > 1.0 + LEMMA_CHECK_TOL:
        raise PropertyViolation(f"perturbation direction failed its checks: |Dv - v| = {fixed_point_error:.3e}, "
                                f"|D| = {norm:.12g}")
    return d_mat


def nearest_defective_hankel(gamma: np.ndarray, rho: float) -> Union[RobustApproximation, NotYetAcceptable]:
    """
    Nearest singular Hankel matrix once the smallest singular value is acceptable.

    A square Hankel matrix is symmetric, so its smallest singular pair is an eigenpair Γ v = λ v with
    |λ| = σ_min. Γ̂ = Γ - λ D then satisfies Γ̂ v = 0 and ‖Γ̂ - Γ‖₂ = σ_min.

    :param gamma: Square Hankel matrix of noisy differences.
    :param rho: Acceptance threshold for the smallest singular value.
    :return: The approximation, or NotYetAcceptable when σ_min > rho.
    """
    u, singular_values, vh = np.linalg.svd(gamma)
    sigma_min = float(singular_values[-1])
    if sigma_min > rho:
        return NotYetAcceptable(sigma_min=sigma_min, rho=rho)

    v_min = vh[-1]
    d_mat = perturbation_direction(v_min)
    signed_sigma = sigma_min if float(u[:, -1] @ v_min) >= 0 else -sigma_min
    gamma_hat = gamma - signed_sigma * d_mat
    return RobustApproximation(gamma_hat=gamma_hat, d_mat=d_mat, sigma_min=sigma_min, v_min=v_min, rho=rho)


def robust_final_value(history, approx: RobustApproximation) -> float:
    """
    Final value of the original observations with β = v_min normalized to last component 1.

    :raises DegenerateKernel: If v_min cannot be normalized.
    :raises NumericalFailure: If 1ᵀβ vanishes.
    """
    return final_value(history, normalized_kernel(approx.v_min))


def default_rho(noise_std: float, k: int) -> float:
    """rho = 10 · std(differences) · sqrt(k+1), a difference of two noisy samples having std sqrt(2)·noise."""
    return RHO_NOISE_FACTOR * np.sqrt(2.0) * noise_std * np.sqrt(k + 1)


@dataclass
class RobustDetector:
    """
    Streaming form of the robust detector, interchangeable with MinTimeDetector.

    The threshold is ``rho`` when fixed, otherwise the noise schedule of ``default_rho`` when a noise level is
    known, otherwise the relative rank test σ̄ · max(1, σ_max).
    """
    rho: Optional[float] = None
    noise_std: float = 0.0
    sigma_threshold: float = SIGMA_THRESHOLD_NOISELESS
    leading_zero_limit: int = 0
    history: List[float] = field(default_factory=list)
    origin: int = 0
    result: Optional[Detection] = None
    approximation: Optional[RobustApproximation] = None

    @property
    def status(self) -> DetectorStatus:
        return DetectorStatus.DETECTED if self.result is not None else DetectorStatus.COLLECTING

    def threshold(self, gamma: np.ndarray) -> float:
        if self.rho is not None:
            return self.rho
        k = gamma.shape[0] - 1
        if self.noise_std > 0:
            return default_rho(self.noise_std, k)
        return self.sigma_threshold * max(1.0, float(np.linalg.norm(gamma, 2)))

    def reject(self) -> None:
        self.result = None
        self.approximation = None

    def push_observation(self, y: float) -> DetectorStatus:
        """
        Appends y and tests the difference Hankel matrix whenever the effective sequence holds 2k+2 samples.

        Leading differences within the 1×1 acceptance threshold count as zero, so a node whose first
        differences are pure noise does not accept them as a converged sequence.
        """
        if self.result is not None:
            return self.status

        self.history.append(float(y))
        index = len(self.history) - 1
        if index >= 1 and self.origin == index - 1 and self.origin < self.leading_zero_limit \
                and abs(self.history[index] - self.history[index - 1]) <= self.threshold(np.zeros((1, 1))):
            self.origin = index

        samples = self.history[self.origin:]
        if len(samples) < 2 or len(samples) % 2 != 0:
            return self.status

        gamma = hankel_of_differences(np.diff(samples))
        approx = nearest_defective_hankel(gamma, self.threshold(gamma))
        if isinstance(approx, NotYetAcceptable):
            return self.status

        phi = robust_final_value(samples, approx)
        self.approximation = approx
        self.result = Detection(beta=normalized_kernel(approx.v_min), phi=phi, detected_at=index)
        LOG.debug(f"Accepted defective Hankel at observation {index}: size {gamma.shape[0]}, "
                  f"sigma_min={approx.sigma_min:.3e}, rho={approx.rho:.3e}, phi={phi:.12g}")
        return self.status
