"""Closed-form drift quantities of the (mu+1)-EA on Dynamic BinVal.

Everything that is a ratio of integers (acceptance and discard probabilities,
state drifts) is returned as an exact :class:`~fractions.Fraction`.  The drift
coefficients ``f0`` and ``f1`` involve ``exp(-c)`` and are evaluated in floating
point from truncated series whose tail is bounded by :class:`SeriesConfig`.

Notation: ``x0`` is the reference individual, ``x^(a-b)`` has ``a`` extra one-bits
and ``b`` extra zero-bits relative to ``x0``.  ``A(r, k)`` and ``B(r, k)`` are the
three-member states reached from ``{x0, x^(1-r)}`` when ``x0`` (A) or
``x^(1-r)`` (B) is mutated by flipping one zero-bit and ``k`` one-bits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

from pydantic import BaseModel, Field
from scipy import optimize

__all__ = [
    "BracketError",
    "DriftCoefficients",
    "FirstOrderBound",
    "SeriesConfig",
    "delta_A",
    "delta_B",
    "delta_F_first",
    "delta_F_second",
    "delta_i",
    "discard_probs_A",
    "discard_probs_B",
    "drift_coefficients",
    "epsilon_star",
    "f0",
    "f0_mu1",
    "f1",
    "find_c0",
    "find_c0_mu1",
    "first_order_bound",
    "geometric_threshold",
    "hat_p",
    "mu_zero",
    "one_bit_flip_probability",
    "reference_thresholds",
    "second_order_drift",
    "zero_and_one_flip_probability",
    "zero_flip_probability",
]

logger = logging.getLogger(__name__)

#: Absolute tolerance of the bisection root finders.
ROOT_TOLERANCE = 1e-9


class BracketError(ValueError):
    """Raised when a root-finding interval shows no sign change."""


class SeriesConfig(BaseModel):
    """Truncation of the infinite series behind ``f0`` and ``f1``."""

    terms: int = Field(default=60, ge=1, description="Largest summation index R for r and k")
    tail_target: float = Field(
        default=1e-12, gt=0, description="Upper bound on the neglected tail of each series"
    )

    @staticmethod
    def tail_bound(c: float, terms: int) -> float:
        """Bound on the neglected tail ``sum_{r > terms}`` of either coefficient series."""

        if c >= terms + 2:
            return math.inf
        log_term = (terms + 1) * math.log(c) - math.lgamma(terms + 2)
        coefficient = 8.0 * (1.0 + c) ** 3 * math.exp(2.0 * c) * (terms + 2)
        return math.exp(log_term) * coefficient / (1.0 - c / (terms + 2))

    def terms_for(self, c: float) -> int:
        """Smallest truncation ``>= terms`` whose tail bound meets ``tail_target``."""

        terms = self.terms
        while self.tail_bound(c, terms) > self.tail_target:
            terms += 10
            if terms > 5_000:
                raise ValueError(f"Series at c={c} cannot reach tail target {self.tail_target}")
        if terms != self.terms:
            logger.warning("Raised series truncation from %d to %d at c=%s", self.terms, terms, c)
        return terms


@dataclass(slots=True)
class DriftCoefficients:
    c: float
    f0: float
    f1: float


@dataclass(slots=True)
class FirstOrderBound:
    """Lower bounds on ``Delta(epsilon) / epsilon`` as ``epsilon -> 0``."""

    simplified: float
    sharper: float


def _check_c(c: float) -> None:
    if not c > 0:
        raise ValueError(f"Mutation parameter must be positive, got {c}")


def _poisson_weights(c: float, terms: int) -> Iterator[tuple[int, float]]:
    """Yield ``(j, c**j / j!)`` for ``j = 0..terms``."""

    value = 1.0
    for j in range(terms + 1):
        if j:
            value *= c / j
        yield j, value


def hat_p(mu: int, r: int) -> Fraction:
    """Probability that an accepted offspring in ``F(r)`` replaces a copy of ``x0``."""

    if mu < 1 or r < 0:
        raise ValueError(f"Need mu >= 1 and r >= 0, got mu={mu}, r={r}")
    return Fraction(1, 1 + (mu - 1) * r)


def delta_F_first(mu: int, r: int) -> Fraction:
    """``(1 - r) / (1 + (mu - 1) r)``: first-order drift from ``F(r)``.

    Exact for ``mu = 2`` and a lower bound for larger populations.
    """

    if mu < 2 or r < 1:
        raise ValueError(f"Need mu >= 2 and r >= 1, got mu={mu}, r={r}")
    return Fraction(1 - r, 1 + (mu - 1) * r)


def one_bit_flip_probability(c: float, k: int) -> float:
    """Limit probability that a mutation flips exactly ``k`` one-bits and no zero-bit."""

    _check_c(c)
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return math.exp(k * math.log(c) - math.lgamma(k + 1) - c)


def zero_flip_probability(c: float, epsilon: float) -> float:
    """Leading-order probability of flipping exactly one zero-bit and nothing else."""

    _check_c(c)
    return c * epsilon * math.exp(-c)


def zero_and_one_flip_probability(c: float, epsilon: float, k: int, one_share: bool = False) -> float:
    """Leading-order probability of flipping one zero-bit and ``k`` one-bits.

    With ``one_share`` the ``k`` flips are drawn from the ``(1 - epsilon) n``
    one-bits only, which multiplies the limit by ``(1 - epsilon) ** k``.
    """

    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    probability = epsilon * c * one_bit_flip_probability(c, k)
    if one_share:
        probability *= (1.0 - epsilon) ** k
    return probability


def first_order_bound(mu: int, c: float, cfg: SeriesConfig | None = None) -> FirstOrderBound:
    """Lower bounds on the first-order drift coefficient of the (mu+1)-EA.

    ``simplified`` is ``c e^-c (1 - e^c / (mu - 1))``, positive once
    ``mu > e^c + 1``.  ``sharper`` keeps the truncated sum
    ``c e^-c (1 - sum_r c^r / (r+1)! * (r-1) / (1 + (mu-1) r))``, built from
    :func:`one_bit_flip_probability` with the ``(1 - epsilon) ** r`` factor at
    ``epsilon -> 0``.
    """

    _check_c(c)
    if mu < 2:
        raise ValueError(f"Population bound needs mu >= 2, got {mu}")
    cfg = cfg or SeriesConfig()
    lead = c * math.exp(-c)
    simplified = lead * (1.0 - math.exp(c) / (mu - 1))
    correction = 0.0
    for r in range(1, cfg.terms_for(c) + 1):
        # c p_r is the epsilon -> 0 limit of P(one zero-bit, r one-bits) / epsilon.
        correction += c * one_bit_flip_probability(c, r) / (r + 1) * (r - 1) / (1 + (mu - 1) * r)
    return FirstOrderBound(simplified=simplified, sharper=lead - correction)


def delta_i(i: int, r: int, k: int = 1) -> Fraction:
    """First-order drift from the intermediate states ``G_2 .. G_9`` of the (2+1)-EA chain."""

    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if i in (2, 4, 7, 8) and k < 1:
        raise ValueError(f"Delta_{i} needs k >= 1, got {k}")
    if i == 2:
        return Fraction(1 - k, k + 1)
    if i == 3:
        return Fraction(1 - r, r + 1)
    if i == 4:
        return Fraction(2 - 2 * r * k, k + r + 2)
    if i == 5:
        return Fraction(2 * (2 - r), 2 + r)
    if i == 6:
        return Fraction(2 - r * r, r + 2)
    if i == 7:
        return Fraction(2 - r - r * k, k + 1)
    if i == 8:
        return Fraction(2 * (2 - r - k), r + k + 2)
    if i == 9:
        return Fraction(1 - r, r + 1)
    raise ValueError(f"Unknown intermediate state index {i}; expected 2..9")


def _check_rk(r: int, k: int) -> None:
    # k = 0 is the mutation that flips a single zero-bit and no one-bit.
    if r < 1 or k < 0:
        raise ValueError(f"Need r >= 1 and k >= 0, got r={r}, k={k}")


def discard_probs_A(r: int, k: int) -> tuple[Fraction, Fraction, Fraction]:
    """Discard probabilities of ``x^(1-r)``, ``x^(1-k)`` and ``x0`` in ``A(r, k)``."""

    _check_rk(r, k)
    return (
        Fraction(r * (r + 2), (r + k + 2) * (r + 1)),
        Fraction(k * (k + 2), (r + k + 2) * (k + 1)),
        Fraction(1, (r + 1) * (k + 1)),
    )


def discard_probs_B(r: int, k: int) -> tuple[Fraction, Fraction, Fraction]:
    """Discard probabilities of ``x0``, ``x^(1-r)`` and ``x^(2-r-k)`` in ``B(r, k)``."""

    _check_rk(r, k)
    return (
        Fraction(r + 2, (r + 1) * (r + k + 2)),
        Fraction(r, (r + 1) * (k + 1)),
        Fraction(k * (r + k + 1), (k + 1) * (r + k + 2)),
    )


def delta_A(r: int, k: int) -> Fraction:
    _check_rk(r, k)
    numerator = r * (r + 2) * (1 - k) + k * (k + 2) * (1 - r) + 2 - 2 * r * k
    return Fraction(numerator, (r + k + 2) * (r + 1) * (k + 1))


def delta_B(r: int, k: int) -> Fraction:
    _check_rk(r, k)
    numerator = (
        -2 * r * r * k - r * k * k - 3 * r * r - 4 * r * k + k * k + 4 * r + k + 4
    )
    return Fraction(numerator, (k + 1) * (r + 1) * (k + r + 2))


def f0(c: float, cfg: SeriesConfig | None = None) -> float:
    """First-order drift coefficient of the (2+1)-EA."""

    _check_c(c)
    cfg = cfg or SeriesConfig()
    total = 1.0
    for r, weight in _poisson_weights(c, cfg.terms_for(c)):
        if r >= 1:
            total += weight / (r + 1) * (1 - r) / (r + 1)
    return c * math.exp(-c) * total


def f1(c: float, cfg: SeriesConfig | None = None) -> float:
    """Second-order drift coefficient of the (2+1)-EA.

    The inner ``k`` sums start at ``k = 0``, where ``delta_A`` and ``delta_B``
    describe the offspring that flips only a single zero-bit.
    """

    _check_c(c)
    cfg = cfg or SeriesConfig()
    terms = cfg.terms_for(c)
    decay = math.exp(-c)
    weights = [weight for _, weight in _poisson_weights(c, terms + 2)]

    # weights[j] = c^j / j!
    direct = c * c * decay
    for r in range(1, terms + 1):
        direct += (r + 1) * decay * weights[r + 2] * float(delta_i(5, r))

    chained = 0.0
    for r in range(1, terms + 1):
        d5 = float(delta_i(5, r))
        d6 = float(delta_i(6, r))
        numerator = (2.0 + d6 + r * d5) / (r + 1)
        denominator = 0.0
        for k in range(terms + 1):
            numerator += weights[k] * float(delta_A(r, k) + delta_B(r, k))
            denominator += weights[k] * decay * (r + 1) / (r + k + 1)
        chained += c * weights[r + 1] * numerator / denominator
    return direct + math.exp(-2.0 * c) / 2.0 * chained


def delta_F_second(r: int, c: float, epsilon: float, cfg: SeriesConfig | None = None) -> float:
    """Drift from ``F(r)`` for the (2+1)-EA including the order-``epsilon`` correction.

    At ``epsilon = 0`` this reduces to ``(1 - r) / (r + 1)``.
    """

    _check_c(c)
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    cfg = cfg or SeriesConfig()
    d5 = float(delta_i(5, r))
    d6 = float(delta_i(6, r))
    numerator = zero_flip_probability(c, epsilon) * (2.0 + d6 + r * d5) / (r + 1)
    denominator = 0.0
    for k in range(cfg.terms_for(c) + 1):
        p_k = one_bit_flip_probability(c, k)
        numerator += p_k * (1 - r) / (r + k + 1)
        numerator += zero_and_one_flip_probability(c, epsilon, k) * float(delta_A(r, k) + delta_B(r, k))
        denominator += p_k * (r + 1) / (r + k + 1)
    return numerator / denominator


def drift_coefficients(c: float, cfg: SeriesConfig | None = None) -> DriftCoefficients:
    return DriftCoefficients(c=c, f0=f0(c, cfg), f1=f1(c, cfg))


def second_order_drift(c: float, epsilon: float, cfg: SeriesConfig | None = None) -> float:
    """``epsilon * f0(c) + epsilon**2 * f1(c)``, the finite-n factors ``1 + o(1)`` dropped."""

    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if epsilon == 0:
        return 0.0
    coefficients = drift_coefficients(c, cfg)
    return epsilon * coefficients.f0 + epsilon * epsilon * coefficients.f1


def _bisect(fn: Callable[[float], float], lower: float, upper: float, name: str) -> float:
    low_value, high_value = fn(lower), fn(upper)
    if low_value == 0:
        return lower
    if high_value == 0:
        return upper
    if (low_value > 0) == (high_value > 0):
        raise BracketError(
            f"{name} does not change sign on [{lower}, {upper}]: {low_value:.6g}, {high_value:.6g}"
        )
    return float(optimize.bisect(fn, lower, upper, xtol=ROOT_TOLERANCE))


def find_c0(cfg: SeriesConfig | None = None, lower: float = 1.0, upper: float = 4.0) -> float:
    """Unique positive root of ``f0``."""

    return _bisect(lambda c: f0(c, cfg), lower, upper, "f0")


def epsilon_star(c_star: float, cfg: SeriesConfig | None = None, tolerance: float = 1e-12) -> float:
    """``-f0(c*) / f1(c*)``, the approximate zero-crossing of the drift in ``epsilon``."""

    coefficients = drift_coefficients(c_star, cfg)
    if abs(coefficients.f1) <= tolerance:
        raise ValueError(f"f1({c_star}) = {coefficients.f1:.3g} is zero within tolerance")
    return -coefficients.f0 / coefficients.f1


def mu_zero(c: float) -> float:
    """Population size ``e^c + 2`` above which the drift near the optimum is positive."""

    _check_c(c)
    return math.exp(c) + 2.0


def f0_mu1(c: float, cfg: SeriesConfig | None = None) -> float:
    """First-order drift coefficient of the (1+1)-EA.

    An offspring that gains one zero-bit and loses ``r`` one-bits is accepted
    with probability ``1 / (r + 1)``.
    """

    _check_c(c)
    cfg = cfg or SeriesConfig()
    total = 0.0
    for r, weight in _poisson_weights(c, cfg.terms_for(c)):
        total += (1 - r) * weight / (r + 1)
    return c * math.exp(-c) * total


def find_c0_mu1(cfg: SeriesConfig | None = None, lower: float = 1.0, upper: float = 4.0) -> float:
    """Root of :func:`f0_mu1`, the (1+1)-EA threshold."""

    return _bisect(lambda c: f0_mu1(c, cfg), lower, upper, "f0_mu1")


def geometric_threshold(p: float) -> float:
    """Threshold ``(2 - p) / (1 - p)`` of the (1+1)-EA for geometric weights."""

    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return (2.0 - p) / (1.0 - p)


def reference_thresholds(p: float = 0.5) -> dict[str, float]:
    """Known (1+1)-EA thresholds on dynamic linear functions."""

    return {"exponential": 2.0, "geometric": geometric_threshold(p)}
