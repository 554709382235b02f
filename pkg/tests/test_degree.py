"""Degree distribution checks against a test-local formula re-implementation."""

import math

import numpy as np
import pytest

from ratelesschain.degree import (
    DegreeDistribution,
    encoding_distribution,
    robust_soliton,
    shifted_distribution,
    soliton_components,
    spike_scale,
)


def reference_mu(k, c, delta):
    """Independent evaluation of the soliton mixture, kept deliberately naive."""
    s_scale = c * math.log(k / delta) * math.sqrt(k)
    spike = min(int(round(k / s_scale)), k)
    tau = [0.0] * (k + 1)
    for d in range(1, spike):
        tau[d] = s_scale / (d * k)
    tau[spike] = max(s_scale * math.log(s_scale / delta) / k, 0.0)
    rho = [0.0] * (k + 1)
    rho[1] = 1.0 / k
    for d in range(2, k + 1):
        rho[d] = 1.0 / (d * (d - 1))
    z = sum(tau) + sum(rho)
    return [(t + r) / z for t, r in zip(tau, rho)]


def test_rho_component_values():
    k = 50
    _tau, rho = soliton_components(k, 0.1, 0.5)
    assert rho[1] == pytest.approx(1.0 / k, abs=0)
    assert rho[2] == pytest.approx(0.5, abs=0)


def test_spike_scale_value():
    # direct evaluation of 0.1 * ln(2000) * sqrt(1000)
    expected = 0.1 * math.log(1000 / 0.5) * math.sqrt(1000)
    assert abs(expected - 24.036) < 1e-3
    assert spike_scale(1000, 0.1, 0.5) == pytest.approx(expected, abs=1e-6)
    assert spike_scale(1000, 0.1, 0.5) == pytest.approx(24.036, abs=1e-3)


@pytest.mark.parametrize("k", [10, 100, 1000])
def test_soliton_normalization(k):
    mu = robust_soliton(k, 0.1, 0.5)
    assert abs(float(mu.pmf.sum()) - 1.0) < 1e-12


def test_soliton_matches_reference():
    k = 100
    mu = robust_soliton(k, 0.1, 0.5)
    ref = reference_mu(k, 0.1, 0.5)
    assert np.allclose(mu.pmf, ref, atol=1e-12)


def test_encoding_distribution_no_degree_one():
    for k in (10, 100, 1000):
        omega = encoding_distribution(k, 0.1, 0.5)
        assert omega.prob(1) == 0.0
        assert abs(float(omega.pmf.sum()) - 1.0) < 1e-12


def test_encoding_distribution_redistribution_formula():
    k = 100
    omega = encoding_distribution(k, 0.1, 0.5)
    ref = reference_mu(k, 0.1, 0.5)
    expected_2 = ref[2] + ref[1] / (k - 1)
    assert omega.prob(2) == pytest.approx(expected_2, rel=1e-12)


def test_degenerate_spike_rejected():
    # huge c drives round(k/S) below 2
    with pytest.raises(ValueError):
        robust_soliton(100, 5.0, 0.5)


def test_parameter_validation():
    with pytest.raises(ValueError):
        robust_soliton(1, 0.1, 0.5)
    with pytest.raises(ValueError):
        robust_soliton(100, -1.0, 0.5)
    with pytest.raises(ValueError):
        robust_soliton(100, 0.1, 1.5)


def test_shifted_identity_when_no_departures():
    omega = encoding_distribution(40, 0.1, 0.5)
    shifted = shifted_distribution(omega, 40, 40)
    assert np.allclose(shifted.pmf, omega.pmf, atol=0)
    assert shifted.prob(1) == 0.0


def test_shifted_small_case_binomial_ratio():
    # n=10, n*=8, d=2: survival factor is C(8,2)/C(10,2) = 28/45
    pmf = np.zeros(11)
    pmf[2] = 0.5
    pmf[3] = 0.5
    omega = DegreeDistribution(pmf)
    shifted = shifted_distribution(omega, 10, 8)
    g2 = 28.0 / 45.0
    assert shifted.prob(2) == pytest.approx(0.5 * g2, rel=1e-12)
    g3 = (8 * 7 * 6) / (10 * 9 * 8)
    assert shifted.prob(3) == pytest.approx(0.5 * g3, rel=1e-12)
    assert shifted.prob(1) == pytest.approx(0.5 * (1 - g2) + 0.5 * (1 - g3), rel=1e-12)


def test_shifted_sums_to_one_random_cases():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(10, 200))
        n_star = int(rng.integers(0, n + 1))
        omega = encoding_distribution(n, 0.1, 0.5)
        shifted = shifted_distribution(omega, n, n_star)
        assert abs(float(shifted.pmf.sum()) - 1.0) < 1e-12


def test_shifted_never_exceeds_original_above_degree_one():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(10, 150))
        n_star = int(rng.integers(0, n + 1))
        omega = encoding_distribution(n, 0.1, 0.5)
        shifted = shifted_distribution(omega, n, n_star)
        assert np.all(shifted.pmf[2:] <= omega.pmf[2:] + 1e-15)


def test_shifted_validation():
    omega = encoding_distribution(20, 0.1, 0.5)
    with pytest.raises(ValueError):
        shifted_distribution(omega, 20, 21)
    with pytest.raises(ValueError):
        shifted_distribution(omega, 19, 5)


def test_sampling_respects_support_and_cdf():
    omega = encoding_distribution(50, 0.1, 0.5)
    rng = np.random.default_rng(3)
    draws = omega.sample_many(rng, 2000)
    assert draws.min() >= 2  # no degree-1 draws
    assert draws.max() <= 50
    singles = [omega.sample(rng) for _ in range(100)]
    assert all(2 <= d <= 50 for d in singles)


def test_distribution_constructor_validation():
    with pytest.raises(ValueError):
        DegreeDistribution([0.5, 0.5])  # pmf[0] nonzero
    with pytest.raises(ValueError):
        DegreeDistribution([0.0, -0.1, 1.1])
    with pytest.raises(ValueError):
        DegreeDistribution([0.0, 0.3, 0.3])  # does not sum to 1
