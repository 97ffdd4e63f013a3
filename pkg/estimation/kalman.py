"""
Centralized Kalman filter and the per-node DKF update.

The node update runs on arrays with an arbitrary leading batch shape, so a whole network of n nodes is
advanced with one call on (n, m) estimates and (n, m, m) covariances.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from estimation.sysmodel import ProcessModel, SensorModel, information_terms, spd_inverse, symmetrize


@dataclass(frozen=True)
class CkfState:
    x_prior: np.ndarray
    p_prior: np.ndarray
    x_post: np.ndarray
    m_post: np.ndarray

    @classmethod
    def initial(cls, m: int, n: int, prior_scale: float = 10.0) -> "CkfState":
        """Zero prior with P_c = prior_scale I / n, the CKF counterpart of a DKF prior prior_scale I."""
        p = prior_scale * np.eye(m) / n
        return cls(x_prior=np.zeros(m), p_prior=p, x_post=np.zeros(m), m_post=p.copy())


@dataclass(frozen=True)
class DkfNodeState:
    x_prior: np.ndarray
    p_kf: np.ndarray
    x_post: np.ndarray
    m_kf: np.ndarray
    q_scaled: np.ndarray

    @classmethod
    def initial(cls, pm: ProcessModel, n: int, prior_scale: float = 10.0) -> "DkfNodeState":
        m = pm.m
        p = prior_scale * np.eye(m)
        return cls(x_prior=np.zeros(m), p_kf=p, x_post=np.zeros(m), m_kf=p.copy(), q_scaled=n * pm.q_cov)


def information_update(x_prior: np.ndarray, p_prior: np.ndarray, g: np.ndarray, s: np.ndarray
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """
    M = (P⁻¹ + S)⁻¹ and x̂ = x̄ + M (g - S x̄), batched over leading axes.

    :return: (x_post, m_post)
    """
    m_post = spd_inverse(spd_inverse(p_prior) + symmetrize(s))
    innovation = g - (s @ x_prior[..., None])[..., 0]
    x_post = x_prior + (m_post @ innovation[..., None])[..., 0]
    return x_post, m_post


def predict(pm: ProcessModel, x_post: np.ndarray, m_post: np.ndarray, q: np.ndarray
            ) -> Tuple[np.ndarray, np.ndarray]:
    """x̄ ← A x̂, P ← A M Aᵀ + B Q Bᵀ, batched over leading axes."""
    x_prior = (pm.a @ x_post[..., None])[..., 0]
    p_prior = symmetrize(pm.a @ m_post @ pm.a.T + pm.b @ q @ pm.b.T)
    return x_prior, p_prior


def stacked_measurement_model(models: Sequence[SensorModel]) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked H_c and block diagonal R_c⁻¹ of the whole network."""
    return np.vstack([sm.h for sm in models]), block_diag(*[sm.r_inv for sm in models])


def ckf_step(st: CkfState, models: Sequence[SensorModel], pm: ProcessModel, z_all: Sequence[np.ndarray]) -> CkfState:
    """
    One centralized step on the stacked measurements, followed by the prediction.

    :param st: Current CKF state, its prior is consumed.
    :param models: All n sensor models.
    :param pm: Process model.
    :param z_all: The n measurements of the current step.
    :return: State holding the posterior of this step and the prior of the next one.
    """
    h_c, r_c_inv = stacked_measurement_model(models)
    z_c = np.concatenate([np.atleast_1d(z) for z in z_all])
    info = h_c.T @ r_c_inv
    x_post, m_post = information_update(st.x_prior, st.p_prior, info @ z_c, info @ h_c)
    x_prior, p_prior = predict(pm, x_post, m_post, pm.q_cov)
    return CkfState(x_prior=x_prior, p_prior=p_prior, x_post=x_post, m_post=m_post)


def ckf_information_form_step(st: CkfState, s_c: np.ndarray, g_c: np.ndarray, n: int, pm: ProcessModel) -> CkfState:
    """The same centralized step written with the network averages: x̂_c = x̄_c + n M_c (g^c - S^c x̄_c)."""
    m_post = spd_inverse(spd_inverse(st.p_prior) + n * s_c)
    x_post = st.x_prior + n * m_post @ (g_c - s_c @ st.x_prior)
    x_prior, p_prior = predict(pm, x_post, m_post, pm.q_cov)
    return CkfState(x_prior=x_prior, p_prior=p_prior, x_post=x_post, m_post=m_post)


def dkf_local_update(st: DkfNodeState, g: np.ndarray, s: np.ndarray, pm: ProcessModel) -> DkfNodeState:
    """
    Local DKF update of one node followed by its prediction with the scaled process noise n Q.

    :param st: Node state, its prior is consumed.
    :param g: The node's estimate of g^c.
    :param s: The node's estimate of S^c.
    :param pm: Process model.
    :return: The updated node state.
    """
    x_post, m_kf = information_update(st.x_prior, st.p_kf, g, s)
    x_prior, p_kf = predict(pm, x_post, m_kf, st.q_scaled)
    return replace(st, x_prior=x_prior, p_kf=p_kf, x_post=x_post, m_kf=m_kf)


def exact_averages(models: Sequence[SensorModel], z_all: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Network averages S^c = mean of Hᵀ R⁻¹ H and g^c = mean of Hᵀ R⁻¹ z."""
    terms = [information_terms(sm, z) for sm, z in zip(models, z_all)]
    s_c = np.mean([u_mat for u_mat, _ in terms], axis=0)
    g_c = np.mean([u_vec for _, u_vec in terms], axis=0)
    return s_c, g_c


def network_information_terms(models: Sequence[SensorModel], z_all: Sequence[np.ndarray]
                              ) -> Tuple[np.ndarray, np.ndarray]:
    """Per-node (U_i, u_i) stacked as (n, m, m) and (n, m)."""
    terms: List[Tuple[np.ndarray, np.ndarray]] = [information_terms(sm, z) for sm, z in zip(models, z_all)]
    return np.stack([t[0] for t in terms]), np.stack([t[1] for t in terms])
