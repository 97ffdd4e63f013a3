"""
Low-pass and band-pass consensus filters run in synchronous rounds, and the stacked state-space form used
for the spectral checks.

Network states are stacked along a leading node axis: g is (n, m), s and p_band are (n, m, m). Matrix
signals are processed elementwise.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple

import numpy as np

from core.constants import UNIT_EIGENVALUE_TOL
from estimation.graph import Graph, check_step_size, derive_matrices


class BandpassForm(str, Enum):
    # S stage driven by the high-pass state P alone
    VERBATIM = "verbatim"
    # S stage driven by the high-pass output P + U
    CASCADE = "cascade"


class StackedForm(str, Enum):
    PRINTED = "printed"
    VECTORIZED = "vectorized"
    CASCADE = "cascade"


@dataclass(frozen=True)
class ConsensusFilterState:
    g: np.ndarray
    s: np.ndarray
    p_band: np.ndarray

    @classmethod
    def initial(cls, u_mats: np.ndarray, m: int) -> "ConsensusFilterState":
        """g_i(0) = 0, S_i(0) = U_i, P_i(0) = 0."""
        n = u_mats.shape[0]
        return cls(g=np.zeros((n, m)), s=np.array(u_mats, dtype=float), p_band=np.zeros_like(u_mats, dtype=float))


@dataclass(frozen=True)
class StackedConsensusSystem:
    a_mat: np.ndarray
    b_mat: np.ndarray
    c_row: np.ndarray
    form: StackedForm


@dataclass(frozen=True)
class SpectrumReport:
    unit_eigs: int
    stable: bool
    spectral_radius: float
    # largest modulus among eigenvalues not counted as unit eigenvalues
    max_inner_modulus: float


@lru_cache(maxsize=64)
def _weights(graph: Graph) -> Tuple[np.ndarray, np.ndarray]:
    adjacency, degree, _ = derive_matrices(graph)
    adjacency.setflags(write=False)
    d = np.diag(degree).copy()
    d.setflags(write=False)
    return adjacency, d


def _node_scale(d: np.ndarray, values: np.ndarray) -> np.ndarray:
    return d.reshape((-1,) + (1,) * (values.ndim - 1)) * values


def _neighbor_sum(adjacency: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.tensordot(adjacency, values, axes=(1, 0))


def disagreement(adjacency: np.ndarray, d: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Σ_{j∈N_i} w_ij (x_j - x_i) at every node."""
    return _neighbor_sum(adjacency, values) - _node_scale(d, values)


def tracking(adjacency: np.ndarray, d: np.ndarray, source: np.ndarray, state: np.ndarray,
             self_weight: float = 1.0) -> np.ndarray:
    """Σ_{j∈N_i∪{i}} w_ij (src_j - x_i) at every node, with w_ii = self_weight."""
    return _neighbor_sum(adjacency, source) + self_weight * source - _node_scale(d + self_weight, state)


def lowpass_step(states: np.ndarray, graph: Graph, inputs: np.ndarray, eps: float) -> np.ndarray:
    """
    g_i ← g_i + eps [Σ_{j∈N_i} (g_j - g_i) + Σ_{j∈N_i∪{i}} (u_j - g_i)] at every node from one snapshot.

    :param states: Current g values, shape (n, ...).
    :param graph: Network topology.
    :param inputs: Current u values, same shape as states.
    :param eps: Consensus step size.
    :return: The next g values.
    :raises StepSizeTooLarge: If eps violates the step-size bound.
    """
    check_step_size(graph, eps)
    adjacency, d = _weights(graph)
    return states + eps * (disagreement(adjacency, d, states) + tracking(adjacency, d, inputs, states))


def bandpass_step(s: np.ndarray, p_band: np.ndarray, graph: Graph, inputs: np.ndarray, eps: float,
                  form: BandpassForm = BandpassForm.CASCADE) -> Tuple[np.ndarray, np.ndarray]:
    """
    One synchronous round of the band-pass filter.

    P_i ← P_i + eps Σ_{j∈N_i} [(P_j - P_i) + (U_j - U_i)]
    S_i ← S_i + eps [Σ_{j∈N_i} (S_j - S_i) + Σ_{j∈N_i∪{i}} (V_j - S_i)]

    where V = P in the verbatim form and V = P + U in the cascade form. Both updates read the pre-step
    snapshot.

    :return: (s, p_band) after the round.
    :raises StepSizeTooLarge: If eps violates the step-size bound.
    """
    check_step_size(graph, eps)
    adjacency, d = _weights(graph)
    source = p_band if BandpassForm(form) is BandpassForm.VERBATIM else p_band + inputs
    p_next = p_band + eps * (disagreement(adjacency, d, p_band) + disagreement(adjacency, d, inputs))
    s_next = s + eps * (disagreement(adjacency, d, s) + tracking(adjacency, d, source, s))
    return s_next, p_next


def consensus_step(state: ConsensusFilterState, graph: Graph, u_vecs: np.ndarray, u_mats: np.ndarray, eps: float,
                   form: BandpassForm = BandpassForm.CASCADE) -> ConsensusFilterState:
    g = lowpass_step(state.g, graph, u_vecs, eps)
    s, p_band = bandpass_step(state.s, state.p_band, graph, u_mats, eps, form)
    return ConsensusFilterState(g=g, s=s, p_band=p_band)


def iterate_bandpass(s: np.ndarray, p_band: np.ndarray, graph: Graph, inputs: np.ndarray, eps: float, steps: int,
                     form: BandpassForm = BandpassForm.CASCADE) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Runs the band-pass filter with constant inputs for a number of rounds.

    :return: (s, p_band, change) where change is the max-abs difference of s over the last round.
    """
    change = float("nan")
    for _ in range(steps):
        s_next, p_band = bandpass_step(s, p_band, graph, inputs, eps, form)
        change = float(np.max(np.abs(s_next - s)))
        s = s_next
    return s, p_band, change


def build_stacked_system(graph: Graph, eps: float, node: int,
                         form: StackedForm = StackedForm.PRINTED) -> StackedConsensusSystem:
    """
    Stacked scalar consensus system [s; p](k+1) = A [s; p](k) + B u(k), output e_nodeᵀ s.

    PRINTED     A = [[I - eps L - eps D, eps Adj], [0, I - eps L]], B = [0; -eps L]
    VECTORIZED  A = [[I - eps (L + D + I), eps (Adj + I)], [0, I - eps L]], B = [0; -eps L]
    CASCADE     A as VECTORIZED, B = [eps (Adj + I); -eps L]
    """
    adjacency, degree, laplacian = derive_matrices(graph)
    n = graph.n
    eye = np.eye(n)
    lower_right = eye - eps * laplacian
    if StackedForm(form) is StackedForm.PRINTED:
        upper_left = eye - eps * laplacian - eps * degree
        coupling = eps * adjacency
    else:
        upper_left = eye - eps * (laplacian + degree + eye)
        coupling = eps * (adjacency + eye)

    a_mat = np.block([[upper_left, coupling], [np.zeros((n, n)), lower_right]])
    upper_input = coupling if StackedForm(form) is StackedForm.CASCADE else np.zeros((n, n))
    b_mat = np.vstack([upper_input, -eps * laplacian])
    c_row = np.zeros(2 * n)
    c_row[node] = 1.0
    return StackedConsensusSystem(a_mat=a_mat, b_mat=b_mat, c_row=c_row, form=StackedForm(form))


def spectrum_check(sys: StackedConsensusSystem, tol: float = UNIT_EIGENVALUE_TOL) -> SpectrumReport:
    eigenvalues = np.linalg.eigvals(sys.a_mat)
    moduli = np.abs(eigenvalues)
    at_one = np.abs(eigenvalues - 1.0) <= tol
    unit_eigs = int(np.count_nonzero(at_one))
    inner = moduli[~at_one]
    return SpectrumReport(
        unit_eigs=unit_eigs,
        stable=bool(np.all(moduli <= 1.0 + tol) and unit_eigs == 1),
        spectral_radius=float(np.max(moduli)),
        max_inner_modulus=float(np.max(inner)) if inner.size else 0.0,
    )
