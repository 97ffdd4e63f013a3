"""
Process dynamics, per-node sensing models and the information terms fed to the consensus filters.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from core.constants import CHOLESKY_PIVOT_TOL, PSD_TOL
from core.errors import SingularCovariance


@dataclass(frozen=True)
class ProcessModel:
    """Discrete dynamics x(k+1) = A x(k) + B w(k), w ~ N(0, Q)."""
    a: np.ndarray
    b: np.ndarray
    q_cov: np.ndarray

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def noise_cov(self) -> np.ndarray:
        """B Q Bᵀ, the process noise covariance in state coordinates."""
        return self.b @ self.q_cov @ self.b.T


@dataclass(frozen=True)
class ContinuousModel:
    """Continuous dynamics dx/dt = F x + G w."""
    f: np.ndarray
    g: np.ndarray
    q_cov: np.ndarray


@dataclass(frozen=True)
class SensorModel:
    h: np.ndarray
    r_cov: np.ndarray
    r_inv: np.ndarray

    @classmethod
    def from_covariance(cls, h: np.ndarray, r_cov: np.ndarray) -> "SensorModel":
        r_cov = np.atleast_2d(np.asarray(r_cov, dtype=float))
        return cls(h=np.atleast_2d(np.asarray(h, dtype=float)), r_cov=r_cov, r_inv=spd_inverse(r_cov))

    @classmethod
    def from_inverse(cls, h: np.ndarray, r_inv: np.ndarray) -> "SensorModel":
        r_inv = np.atleast_2d(np.asarray(r_inv, dtype=float))
        return cls(h=np.atleast_2d(np.asarray(h, dtype=float)), r_cov=spd_inverse(r_inv), r_inv=r_inv)


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return (mat + np.swapaxes(mat, -1, -2)) / 2.0


def spd_inverse(mat: np.ndarray) -> np.ndarray:
    """
    Inverse of one or a stack of symmetric positive definite matrices through Cholesky factors.

    :raises SingularCovariance: If a factorization fails or a pivot falls below the tolerance.
    """
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as e:
        raise SingularCovariance("matrix is not positive definite", e)
    pivots = np.diagonal(lower, axis1=-2, axis2=-1)
    if np.any(pivots <= CHOLESKY_PIVOT_TOL):
        raise SingularCovariance(f"Cholesky pivot {float(np.min(pivots)):.3e} below tolerance {CHOLESKY_PIVOT_TOL}")
    lower_inv = np.linalg.inv(lower)
    return symmetrize(np.swapaxes(lower_inv, -1, -2) @ lower_inv)


def is_positive_semidefinite(mat: np.ndarray, tol: float = PSD_TOL) -> bool:
    """True for a finite symmetric matrix whose eigenvalues are all >= -tol · max(1, max|mat|)."""
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        return False
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > tol * scale:
        return False
    return bool(np.min(np.linalg.eigvalsh(symmetrize(mat))) >= -tol * scale)


def discretize(cm: ContinuousModel, dt: float) -> ProcessModel:
    """
    Exact zero-order-hold discretization through the augmented matrix exponential.

    exp([[F, G], [0, 0]] dt) = [[exp(F dt), ∫ exp(F τ) dτ G], [0, I]], so both A and B come out of a
    single expm call.

    :param cm: The continuous-time model.
    :param dt: Sampling period in seconds, strictly positive.
    :return: The discrete process model, Q carried through unchanged.
    """
    if dt <= 0:
        raise ValueError(f"sampling period must be positive, got {dt}")
    f = np.atleast_2d(np.asarray(cm.f, dtype=float))
    g = np.atleast_2d(np.asarray(cm.g, dtype=float))
    m, q = g.shape

    augmented = np.zeros((m + q, m + q))
    augmented[:m, :m] = f
    augmented[:m, m:] = g
    phi = expm(augmented * dt)
    return ProcessModel(a=phi[:m, :m], b=phi[:m, m:], q_cov=np.atleast_2d(np.asarray(cm.q_cov, dtype=float)))


def step_process(pm: ProcessModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w = rng.multivariate_normal(np.zeros(pm.q_cov.shape[0]), pm.q_cov)
    return pm.a @ x + pm.b @ w


def measure(sm: SensorModel, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    z = H x + v with v ~ N(0, R). Without a generator the noiseless measurement is returned.
    """
    z = sm.h @ x
    if rng is None:
        return z
    return z + rng.multivariate_normal(np.zeros(sm.r_cov.shape[0]), sm.r_cov)


def information_terms(sm: SensorModel, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    The node's summands of the network averages: U = Hᵀ R⁻¹ H and u = Hᵀ R⁻¹ z.
    """
    ht_rinv = sm.h.T @ sm.r_inv
    u_mat = ht_rinv @ sm.h
    return (u_mat + u_mat.T) / 2.0, ht_rinv @ z


def mixed_sensor_models(n: int) -> List[SensorModel]:
    """
    Mixed sensor layout: the first half of the nodes see the state directly, the second half
    through [[1, 2], [2, 1]]; node i (one-based) has R_i = 0.01 sqrt(i) I.
    """
    h_direct = np.eye(2)
    h_mixed = np.array([[1.0, 2.0], [2.0, 1.0]])
    models = []
    for i in range(1, n + 1):
        h = h_direct if i <= (n + 1) // 2 else h_mixed
        models.append(SensorModel.from_covariance(h, 0.01 * np.sqrt(i) * np.eye(2)))
    return models
