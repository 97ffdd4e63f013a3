"""
Minimum-time detection on exactly computed band-pass outputs.

Every float is a dyadic rational, so the band-pass filter started from float inputs, weights and step size
stays dyadic at every round. Its state is kept as Python integers over one shared power-of-two denominator.
The order of each output recurrence is found without rounding by Berlekamp-Massey over a prime field, and
only the final value is computed numerically, in extended precision until two precisions agree.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from core.constants import (
    EXACT_FIELD_PRIME,
    FINAL_VALUE_AGREEMENT_BITS,
    FINAL_VALUE_MAX_PRECISION,
    FINAL_VALUE_START_PRECISION,
)
from core.errors import DegenerateKernel, NumericalFailure
from core.log import LOG
from estimation.confilter import BandpassForm, disagreement, tracking
from estimation.graph import Graph, derive_matrices
from estimation.mintime import Detection, DetectorStatus


def dyadic_numerators(values) -> Tuple[np.ndarray, int]:
    """
    Integer numerators of float values over their common denominator.

    :return: (object array of ints shaped like ``values``, denominator), the denominator a power of two.
    """
    fractions = [Fraction(float(v)) for v in np.ravel(values)]
    denominator = max((f.denominator for f in fractions), default=1)
    numerators = [f.numerator * (denominator // f.denominator) for f in fractions]
    return np.array(numerators, dtype=object).reshape(np.shape(values)), denominator


@dataclass
class ExactBandpass:
    """
    The band-pass filter on integer numerators: S = s / den, P = p_band / den, U = inputs / den.

    Adjacency weights are numerators over ``weight_den`` and the step size is eps_num / eps_den, so one round
    multiplies the shared denominator by eps_den · weight_den.
    """
    adjacency: np.ndarray
    degree: np.ndarray
    weight_den: int
    eps_num: int
    eps_den: int
    form: BandpassForm
    s: np.ndarray
    p_band: np.ndarray
    inputs: np.ndarray
    den: int

    @classmethod
    def initial(cls, graph: Graph, u_mats: np.ndarray, eps: float,
                form: BandpassForm = BandpassForm.CASCADE) -> "ExactBandpass":
        """S_i(0) = U_i and P_i(0) = 0, as in the float filter."""
        adjacency, _, _ = derive_matrices(graph)
        weights, weight_den = dyadic_numerators(adjacency)
        step = Fraction(float(eps))
        inputs, den = dyadic_numerators(u_mats)
        return cls(adjacency=weights, degree=weights.sum(axis=1), weight_den=weight_den, eps_num=step.numerator,
                   eps_den=step.denominator, form=BandpassForm(form), s=inputs.copy(),
                   p_band=np.zeros(inputs.shape, dtype=object), inputs=inputs, den=den)

    def step(self) -> None:
        grow = self.eps_den * self.weight_den
        source = self.p_band if self.form is BandpassForm.VERBATIM else self.p_band + self.inputs
        adjacency, degree = self.adjacency, self.degree
        p_next = grow * self.p_band + self.eps_num * (disagreement(adjacency, degree, self.p_band)
                                                      + disagreement(adjacency, degree, self.inputs))
        s_next = grow * self.s + self.eps_num * (disagreement(adjacency, degree, self.s)
                                                 + tracking(adjacency, degree, source, self.s, self.weight_den))
        self.s, self.p_band = s_next, p_next
        self.inputs = grow * self.inputs
        self.den *= grow

    def values(self) -> np.ndarray:
        """S as an object array of Fractions."""
        return np.frompyfunc(lambda numerator: Fraction(numerator, self.den), 1, 1)(self.s)


def residue(value: Fraction, prime: int = EXACT_FIELD_PRIME) -> int:
    return value.numerator * pow(value.denominator, -1, prime) % prime


@dataclass
class ModularRecurrence:
    """Shortest linear recurrence of a sequence over the integers mod ``prime``, one term at a time."""
    prime: int = EXACT_FIELD_PRIME
    terms: List[int] = field(default_factory=list)
    connection: List[int] = field(default_factory=lambda: [1])
    previous: List[int] = field(default_factory=lambda: [1])
    order: int = 0
    shift: int = 1
    last_discrepancy: int = 1

    def push(self, term: int) -> int:
        """
        Berlekamp-Massey update.

        :return: The linear complexity of the terms pushed so far.
        """
        p = self.prime
        self.terms.append(term % p)
        n = len(self.terms) - 1
        discrepancy = sum(self.connection[i] * self.terms[n - i]
                          for i in range(min(len(self.connection), self.order + 1))) % p
        if discrepancy == 0:
            self.shift += 1
            return self.order

        coefficient = discrepancy * pow(self.last_discrepancy, -1, p) % p
        updated = self.connection + [0] * max(0, len(self.previous) + self.shift - len(self.connection))
        for i, b in enumerate(self.previous):
            updated[i + self.shift] = (updated[i + self.shift] - coefficient * b) % p
        if 2 * self.order <= n:
            self.previous, self.last_discrepancy = self.connection, discrepancy
            self.order = n + 1 - self.order
            self.shift = 1
        else:
            self.shift += 1
        self.connection = updated
        return self.order


def _mpf(value: Fraction) -> mpmath.mpf:
    return mpmath.mpf(value.numerator) / value.denominator


def _final_value_at(samples: Sequence[Fraction], order: int, precision: int):
    diffs = [b - a for a, b in zip(samples, samples[1:])]
    with mpmath.workprec(precision):
        hankel = mpmath.matrix([[_mpf(diffs[i + j]) for j in range(order)] for i in range(order)])
        rhs = mpmath.matrix([-_mpf(diffs[order + j]) for j in range(order)])
        try:
            coefficients = mpmath.lu_solve(hankel, rhs)
        except ZeroDivisionError as e:
            raise DegenerateKernel(f"Hankel system of order {order} is singular", e)
        beta = [coefficients[i] for i in range(order)] + [mpmath.mpf(1)]
        total = mpmath.fsum(beta)
        if total == 0:
            raise NumericalFailure("final value denominator 1ᵀβ vanished")
        offset = mpmath.fsum(b * _mpf(y - samples[0]) for b, y in zip(beta, samples))
        return _mpf(samples[0]) + offset / total, beta


@lru_cache(maxsize=512)
def exact_final_value(samples: Tuple[Fraction, ...], order: int) -> Tuple[float, Tuple[float, ...]]:
    """
    Final value of an exact sequence whose first differences obey a recurrence of the given order.

    The recurrence coefficients solve the order×order Hankel system of the first 2·order differences, which is
    nonsingular when ``order`` is the linear complexity. The precision doubles until two consecutive results
    agree to FINAL_VALUE_AGREEMENT_BITS relative bits.

    :param samples: y(0), ..., y(2·order) at least.
    :return: (φ, β) with β normalized to last component 1.
    :raises NumericalFailure: If 1ᵀβ vanishes or no precision up to the cap settles φ.
    """
    if order == 0:
        return float(samples[0]), (1.0,)
    previous = None
    precision = FINAL_VALUE_START_PRECISION
    while precision <= FINAL_VALUE_MAX_PRECISION:
        phi, beta = _final_value_at(samples, order, precision)
        with mpmath.workprec(precision):
            if previous is not None and \
                    abs(phi - previous) <= mpmath.ldexp(max(mpmath.mpf(1), abs(phi)), -FINAL_VALUE_AGREEMENT_BITS):
                return float(phi), tuple(float(b) for b in beta)
        previous = phi
        precision *= 2
    raise NumericalFailure(f"final value of order {order} did not settle below {FINAL_VALUE_MAX_PRECISION} bits")


@dataclass
class ExactDetector:
    """
    Exact counterpart of MinTimeDetector for noiseless signals, interchangeable with it.

    Samples are kept as Fractions. A difference Hankel matrix of size k+1 is singular exactly when the linear
    complexity of its 2k+1 differences is at most k, which the running Berlekamp-Massey update tracks. Leading
    differences that are exactly zero are skipped up to ``leading_zero_limit``.
    """
    leading_zero_limit: int = 0
    prime: int = EXACT_FIELD_PRIME
    history: List[Fraction] = field(default_factory=list)
    origin: int = 0
    result: Optional[Detection] = None
    recurrence: ModularRecurrence = field(default_factory=ModularRecurrence)

    @property
    def status(self) -> DetectorStatus:
        return DetectorStatus.DETECTED if self.result is not None else DetectorStatus.COLLECTING

    def reject(self) -> None:
        self.result = None

    def push_observation(self, y) -> DetectorStatus:
        """
        :param y: The next sample, a Fraction or anything Fraction accepts exactly (ints, floats).
        :raises DegenerateKernel: If the recurrence system turns out singular. The detector keeps collecting.
        :raises NumericalFailure: If the final value cannot be settled. The detector keeps collecting.
        """
        if self.result is not None:
            return self.status

        value = Fraction(y)
        self.history.append(value)
        index = len(self.history) - 1
        if index >= 1 and self.origin == index - 1 and self.origin < self.leading_zero_limit \
                and value == self.history[index - 1]:
            self.origin = index
            self.recurrence = ModularRecurrence(self.prime)
        elif index > self.origin:
            self.recurrence.push(residue(value - self.history[index - 1], self.prime))

        samples = self.history[self.origin:]
        if len(samples) < 2 or len(samples) % 2 != 0:
            return self.status

        k = len(samples) // 2 - 1
        order = self.recurrence.order
        if order > k:
            return self.status

        phi, beta = exact_final_value(tuple(samples[:2 * order + 1]), order)
        self.result = Detection(beta=np.array(beta), phi=phi, detected_at=index)
        LOG.debug(f"Exact rank loss at observation {index}: Hankel size {k + 1}, recurrence order {order}, "
                  f"phi={phi:.12g}")
        return self.status
