"""Bayesian core: posterior updates, prob_greater, PPP, futility rule.

prob_greater is checked against two independent oracles: an exact
recurrence over half-integer shape parameters, and plain Monte Carlo for
arbitrary shapes.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import betaln
from scipy.stats import betabinom

from ppfutility.bayes import (
    DEFAULT_PRIOR,
    ArmData,
    BetaParams,
    Decision,
    PPPKey,
    ThresholdPair,
    beta_binomial_pmf,
    futility_decision,
    posterior,
    ppp_two_sample,
    prob_greater,
    prob_greater_table,
)


def pg_exact(a1, b1, a0, b0):
    """P(p1 > p0) for independent Betas, by the exact recurrence.

    g(a1+1) = g + h/a1, g(b1+1) = g - h/b1, g(a0+1) = g - h/a0,
    g(b0+1) = g + h/b0 with h = B(a1+a0, b1+b0) / (B(a1,b1) B(a0,b0)),
    anchored at g(1/2,1/2,1/2,1/2) = 1/2.  Exact for half-integer shapes.
    """

    def h(a1, b1, a0, b0):
        return math.exp(betaln(a1 + a0, b1 + b0) - betaln(a1, b1) - betaln(a0, b0))

    g = 0.5
    ca1 = cb1 = ca0 = cb0 = 0.5
    while a1 - ca1 > 0.25:
        g += h(ca1, cb1, ca0, cb0) / ca1
        ca1 += 1.0
    while b1 - cb1 > 0.25:
        g -= h(ca1, cb1, ca0, cb0) / cb1
        cb1 += 1.0
    while a0 - ca0 > 0.25:
        g -= h(ca1, cb1, ca0, cb0) / ca0
        ca0 += 1.0
    while b0 - cb0 > 0.25:
        g += h(ca1, cb1, ca0, cb0) / cb0
        cb0 += 1.0
    return g


def test_posterior_counts_add_to_prior():
    post = posterior(DEFAULT_PRIOR, ArmData(n=10, x=3))
    assert post == BetaParams(3.5, 7.5)
    assert posterior(BetaParams(2.0, 5.0), ArmData(0, 0)) == BetaParams(2.0, 5.0)


def test_arm_data_validation():
    with pytest.raises(ValueError):
        ArmData(n=5, x=6)
    with pytest.raises(ValueError):
        ArmData(n=-1, x=0)
    with pytest.raises(ValueError):
        BetaParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ThresholdPair(posterior=1.0, predictive=0.1)


def test_prob_greater_closed_forms():
    # identical posteriors: exactly the median case
    sym = prob_greater(BetaParams(3.5, 7.5), BetaParams(3.5, 7.5))
    assert abs(sym - 0.5) < 1e-10
    # Beta(2,1) vs Beta(1,1): P = integral 2x * x dx = 2/3
    assert abs(prob_greater(BetaParams(2, 1), BetaParams(1, 1)) - 2.0 / 3.0) < 1e-10
    # complement symmetry
    a, b = BetaParams(4.5, 2.5), BetaParams(1.5, 9.5)
    assert abs(prob_greater(a, b) + prob_greater(b, a) - 1.0) < 1e-10


def test_prob_greater_matches_recurrence_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(120):
        a1, b1, a0, b0 = (0.5 + rng.integers(0, 200, size=4)).astype(float)
        got = prob_greater(BetaParams(a1, b1), BetaParams(a0, b0))
        want = pg_exact(a1, b1, a0, b0)
        worst = max(worst, abs(got - want))
    assert worst < 1e-9, f"worst deviation {worst:.3e}"


def test_prob_greater_matches_monte_carlo():
    rng = np.random.default_rng(99)
    n_draws = 200_000
    for _ in range(10):
        a1, b1, a0, b0 = np.exp(rng.uniform(np.log(0.5), np.log(40.0), size=4))
        p1 = rng.beta(a1, b1, n_draws)
        p0 = rng.beta(a0, b0, n_draws)
        est = float(np.mean(p1 > p0))
        se = math.sqrt(max(est * (1 - est), 1e-12) / n_draws)
        got = prob_greater(BetaParams(a1, b1), BetaParams(a0, b0))
        assert abs(got - est) < 3 * se + 1e-4


def test_prob_greater_tolerance_floor():
    with pytest.raises(ValueError):
        prob_greater(BetaParams(1.5, 1.5), BetaParams(1.5, 1.5), tol=1e-12)
    prob_greater(BetaParams(1.5, 1.5), BetaParams(1.5, 1.5), tol=1e-10)


@given(
    a=st.floats(0.5, 300.0),
    b=st.floats(0.5, 300.0),
)
@settings(max_examples=40, deadline=None)
def test_prob_greater_self_is_half(a, b):
    assert abs(prob_greater(BetaParams(a, b), BetaParams(a, b)) - 0.5) < 2e-8


def test_prob_greater_monotone_in_successes():
    # adding a success to the treatment posterior can only raise the probability
    base = BetaParams(4.5, 6.5)
    ctl = BetaParams(2.5, 8.5)
    vals = [prob_greater(BetaParams(base.a + k, base.b), ctl) for k in range(6)]
    assert all(v2 > v1 for v1, v2 in zip(vals, vals[1:]))


def test_beta_binomial_pmf_matches_scipy_and_normalizes():
    post = BetaParams(3.5, 7.5)
    for n in (0, 1, 7, 500):
        pmf = beta_binomial_pmf(n, post)
        assert pmf.shape == (n + 1,)
        assert abs(pmf.sum() - 1.0) < 1e-12
        assert np.all(pmf >= 0.0)
    pmf = beta_binomial_pmf(4, post)
    want = betabinom.pmf(np.arange(5), 4, post.a, post.b)
    assert np.allclose(pmf, want, rtol=0, atol=1e-15)
    # n = 1 closed form: P(X=1) = a / (a+b)
    assert abs(beta_binomial_pmf(1, post)[1] - post.a / (post.a + post.b)) < 1e-14


@given(
    n=st.integers(0, 120),
    a=st.floats(0.5, 900.0),
    b=st.floats(0.5, 900.0),
)
@settings(max_examples=60, deadline=None)
def test_beta_binomial_pmf_normalization_property(n, a, b):
    pmf = beta_binomial_pmf(n, BetaParams(a, b))
    assert abs(pmf.sum() - 1.0) < 1e-12
    assert np.all(pmf >= 0.0)


def test_ppp_zero_remaining_is_indicator():
    # completed trial: PPP degenerates to I(prob_greater > theta)
    trt, ctl = ArmData(10, 7), ArmData(10, 2)
    pg = prob_greater(posterior(DEFAULT_PRIOR, trt), posterior(DEFAULT_PRIOR, ctl))
    for theta in (0.5, 0.9, 0.99):
        want = 1.0 if pg > theta else 0.0
        assert ppp_two_sample(trt, ctl, 10, 10, DEFAULT_PRIOR, theta) == want


def test_ppp_extreme_separation():
    val = ppp_two_sample(ArmData(10, 10), ArmData(10, 0), 20, 20, DEFAULT_PRIOR, 0.9)
    assert val > 0.99


def ppp_brute(trt, ctl, n_trt_max, n_ctl_max, prior, theta):
    """Joint enumeration over both future binomials with the exact oracle."""
    rem_t, rem_c = n_trt_max - trt.n, n_ctl_max - ctl.n
    pt = betabinom.pmf(np.arange(rem_t + 1), rem_t, prior.a + trt.x, prior.b + trt.n - trt.x)
    pc = betabinom.pmf(np.arange(rem_c + 1), rem_c, prior.a + ctl.x, prior.b + ctl.n - ctl.x)
    total = 0.0
    for j in range(rem_t + 1):
        for k in range(rem_c + 1):
            g = pg_exact(
                prior.a + trt.x + j, prior.b + n_trt_max - trt.x - j,
                prior.a + ctl.x + k, prior.b + n_ctl_max - ctl.x - k,
            )
            if g > theta:
                total += pt[j] * pc[k]
    return total


def test_ppp_matches_brute_force_enumeration():
    prior = DEFAULT_PRIOR
    for trt, ctl, theta in [
        (ArmData(3, 2), ArmData(3, 1), 0.8),
        (ArmData(6, 1), ArmData(4, 2), 0.9),
        (ArmData(0, 0), ArmData(0, 0), 0.95),
    ]:
        got = ppp_two_sample(trt, ctl, 8, 8, prior, theta)
        want = ppp_brute(trt, ctl, 8, 8, prior, theta)
        assert abs(got - want) < 1e-9, (trt, ctl, theta)


def test_ppp_monotone_in_current_responses():
    prior = DEFAULT_PRIOR
    vals_t = [
        ppp_two_sample(ArmData(10, x), ArmData(10, 4), 30, 30, prior, 0.9)
        for x in range(11)
    ]
    assert all(b >= a for a, b in zip(vals_t, vals_t[1:]))
    vals_c = [
        ppp_two_sample(ArmData(10, 6), ArmData(10, x), 30, 30, prior, 0.9)
        for x in range(11)
    ]
    assert all(b <= a for a, b in zip(vals_c, vals_c[1:]))


def test_ppp_memoization_and_prior_keying():
    args = (ArmData(10, 4), ArmData(10, 3), 50, 50)
    v1 = ppp_two_sample(*args, DEFAULT_PRIOR, 0.9)
    v2 = ppp_two_sample(*args, DEFAULT_PRIOR, 0.9)
    assert v1 == v2  # cached value is returned verbatim
    v3 = ppp_two_sample(*args, BetaParams(1.0, 1.0), 0.9)
    assert v3 != v1  # prior participates in the cache key
    key = PPPKey(4, 10, 3, 10, 40, 40, 0.9)
    assert key.prior_a == 0.5 and key.prior_b == 0.5


def test_prob_greater_table_bit_identical_to_scalar():
    prior = DEFAULT_PRIOR
    table = prob_greater_table(12, 12, prior)
    for x_t in range(13):
        for x_c in range(13):
            direct = prob_greater(
                posterior(prior, ArmData(12, x_t)), posterior(prior, ArmData(12, x_c))
            )
            assert table[x_t, x_c] == direct  # same nodes, same contraction


def test_futility_decision_boundaries():
    th = ThresholdPair(posterior=0.9, predictive=0.05)
    assert futility_decision(0.04, th) is Decision.STOP
    assert futility_decision(0.05, th) is Decision.CONTINUE  # strict <
    assert futility_decision(1.0, th) is Decision.CONTINUE
    with pytest.raises(ValueError):
        futility_decision(1.5, th)
    with pytest.raises(ValueError):
        futility_decision(float("nan"), th)
