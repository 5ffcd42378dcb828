from __future__ import annotations

import math
from fractions import Fraction

import pytest

from dynbinval.services import analytic
from dynbinval.services.analytic import (
    BracketError,
    SeriesConfig,
    delta_A,
    delta_B,
    delta_F_first,
    delta_F_second,
    delta_i,
    discard_probs_A,
    discard_probs_B,
    epsilon_star,
    f0,
    f0_mu1,
    f1,
    find_c0,
    find_c0_mu1,
    first_order_bound,
    geometric_threshold,
    hat_p,
    mu_zero,
    one_bit_flip_probability,
    reference_thresholds,
    second_order_drift,
    zero_and_one_flip_probability,
)


def test_hat_p_and_first_order_state_drift() -> None:
    assert hat_p(2, 1) == Fraction(1, 2)
    assert hat_p(5, 2) == Fraction(1, 9)
    assert delta_F_first(2, 1) == 0
    assert delta_F_first(2, 3) == Fraction(-1, 2)
    assert delta_F_first(3, 2) == Fraction(-1, 5)
    with pytest.raises(ValueError):
        delta_F_first(1, 2)


@pytest.mark.parametrize("r,k", [(r, k) for r in range(1, 6) for k in range(0, 6)])
def test_discard_probabilities_sum_to_one(r: int, k: int) -> None:
    assert sum(discard_probs_A(r, k)) == 1
    assert sum(discard_probs_B(r, k)) == 1


@pytest.mark.parametrize("r,k", [(r, k) for r in range(1, 6) for k in range(1, 6)])
def test_pre_selection_drifts_are_weighted_intermediate_drifts(r: int, k: int) -> None:
    p_r, p_k, p_0 = discard_probs_A(r, k)
    q_0, q_r, q_rk = discard_probs_B(r, k)

    assert delta_A(r, k) == p_r * delta_i(2, r, k) + p_k * delta_i(3, r, k) + p_0 * delta_i(4, r, k)
    assert delta_B(r, k) == q_0 * delta_i(7, r, k) + q_r * delta_i(8, r, k) + q_rk * delta_i(9, r, k)


def test_known_discard_values() -> None:
    assert discard_probs_A(1, 1) == (Fraction(3, 8), Fraction(3, 8), Fraction(1, 4))
    assert discard_probs_B(1, 1) == (Fraction(3, 8), Fraction(1, 4), Fraction(3, 8))
    assert delta_A(1, 1) == 0
    assert delta_B(2, 1) == Fraction(-8, 15)


def test_delta_i_rejects_unknown_index() -> None:
    with pytest.raises(ValueError):
        delta_i(10, 1, 1)
    with pytest.raises(ValueError):
        delta_i(2, 1, 0)


def test_f0_reference_values() -> None:
    assert f0(1.0) == pytest.approx(0.337538, abs=1e-5)
    assert f0(2.0) == pytest.approx(0.132451, abs=1e-5)
    assert f0(2.4) == pytest.approx(0.02474744, abs=1e-6)
    assert f0(4.0) == pytest.approx(-0.334506, abs=1e-5)


def test_find_c0_and_second_order_coefficient() -> None:
    c0 = find_c0()

    assert c0 == pytest.approx(2.4931, abs=1e-3)
    assert abs(f0(c0)) < 1e-8
    assert f1(c0) == pytest.approx(-0.4845, abs=1e-3)


def test_f1_changes_sign_below_c0() -> None:
    assert f1(2.0) == pytest.approx(0.318409, abs=1e-4)
    assert f1(2.2) == pytest.approx(0.045812, abs=1e-4)
    assert f1(2.4) == pytest.approx(-0.299888, abs=1e-4)
    assert f1(2.25) < 0 < f1(2.2)


def test_epsilon_star_below_threshold() -> None:
    assert epsilon_star(2.4) == pytest.approx(0.082522, abs=1e-4)
    with pytest.raises(ValueError):
        epsilon_star(2.4, tolerance=10.0)


def test_second_order_drift_combines_coefficients() -> None:
    c, eps = 2.2, 0.01

    assert second_order_drift(c, eps) == pytest.approx(eps * f0(c) + eps * eps * f1(c))
    assert second_order_drift(c, 0.0) == 0.0
    with pytest.raises(ValueError):
        second_order_drift(c, 1.0)


def test_delta_F_second_reduces_to_first_order_at_zero_distance() -> None:
    for r in (1, 2, 3, 5):
        assert delta_F_second(r, 1.5, 0.0) == pytest.approx(float(delta_F_first(2, r)))


def test_mu_zero() -> None:
    assert mu_zero(1.0) == pytest.approx(math.e + 2)


def test_first_order_bound_is_positive_above_mu_zero() -> None:
    c = 2.0
    mu = math.ceil(mu_zero(c)) + 1

    bound = first_order_bound(mu, c)

    assert bound.simplified > 0
    assert bound.sharper >= bound.simplified
    assert first_order_bound(2, c).simplified < 0


def test_one_plus_one_threshold() -> None:
    c0_mu1 = find_c0_mu1()

    assert c0_mu1 == pytest.approx(1.59362426, abs=1e-6)
    assert f0_mu1(1.0) > 0 > f0_mu1(2.0)


def test_find_c0_without_sign_change_raises() -> None:
    with pytest.raises(BracketError):
        find_c0(lower=3.0, upper=4.0)


def test_reference_thresholds() -> None:
    assert reference_thresholds() == {"exponential": 2.0, "geometric": 3.0}
    assert geometric_threshold(0.25) == pytest.approx(1.75 / 0.75)
    with pytest.raises(ValueError):
        geometric_threshold(1.0)


def test_series_truncation_is_raised_when_tail_is_large(caplog: pytest.LogCaptureFixture) -> None:
    cfg = SeriesConfig(terms=5)

    with caplog.at_level("WARNING", logger=analytic.__name__):
        terms = cfg.terms_for(3.0)

    assert terms > 5
    assert SeriesConfig.tail_bound(3.0, terms) <= cfg.tail_target
    assert "Raised series truncation" in caplog.text


def test_truncation_does_not_change_coefficients() -> None:
    assert f0(2.0, SeriesConfig(terms=80)) == pytest.approx(f0(2.0), abs=1e-12)
    assert f1(2.0, SeriesConfig(terms=80)) == pytest.approx(f1(2.0), abs=1e-10)


def test_one_share_factor_of_zero_and_one_flips() -> None:
    c, eps = 2.0, 0.1

    for k in range(6):
        plain = zero_and_one_flip_probability(c, eps, k)
        assert plain == pytest.approx(eps * c * one_bit_flip_probability(c, k))
        assert zero_and_one_flip_probability(c, eps, k, one_share=True) == pytest.approx(plain * (1 - eps) ** k)
        assert zero_and_one_flip_probability(c, 0.0, k, one_share=True) == 0.0

    # Summed over k the one-bit flips are Poisson(c (1 - eps)).
    total = sum(zero_and_one_flip_probability(c, eps, k, one_share=True) for k in range(80))
    assert total == pytest.approx(eps * c * math.exp(-c * eps), abs=1e-12)
    with pytest.raises(ValueError):
        zero_and_one_flip_probability(c, 1.5, 1)


@pytest.mark.parametrize("mu", [2, 3, 10])
def test_sharper_bound_matches_factorial_series(mu: int) -> None:
    c = 1.5
    series = sum(c**r / math.factorial(r + 1) * (r - 1) / (1 + (mu - 1) * r) for r in range(1, 60))

    bound = first_order_bound(mu, c)

    assert bound.sharper == pytest.approx(c * math.exp(-c) * (1 - series), abs=1e-12)


def test_f0_bracket_is_strictly_decreasing() -> None:
    grid = [0.1 * step for step in range(1, 61)]
    brackets = [f0(c) / (c * math.exp(-c)) for c in grid]

    assert brackets[0] < 1
    assert all(later < earlier for earlier, later in zip(brackets, brackets[1:]))


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 2.5, 4.0, 6.0])
@pytest.mark.parametrize("r", [1, 2, 3, 5])
def test_rewritten_denominator_identity(c: float, r: int) -> None:
    weights = [one_bit_flip_probability(c, k) for k in range(120)]

    left = sum(p * (2 * k + r + 1) / (r + k + 1) for k, p in enumerate(weights))
    right = 2 - sum(p * (r + 1) / (r + k + 1) for k, p in enumerate(weights))

    assert abs(left - right) < 1e-12


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 3.0, 4.5, 6.0])
def test_coefficients_are_stable_under_longer_truncation(c: float) -> None:
    short, long = SeriesConfig(terms=60), SeriesConfig(terms=70)

    assert abs(f0(c, short) - f0(c, long)) < 1e-12
    assert abs(f1(c, short) - f1(c, long)) < 1e-12
    assert abs(f0_mu1(c, short) - f0_mu1(c, long)) < 1e-12
