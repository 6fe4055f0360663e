import numpy as np
import pytest
from scipy import integrate

from coprime_mmse import (
    TruncatedNormalPrior,
    UniformPrior,
    bessel_j0,
    characteristic_integral,
    prior_from_config,
    sample_doas,
)
from coprime_mmse.distributions import prior_to_config

FULL_RANGE = UniformPrior(-np.pi / 2, np.pi / 2)
NARROW = UniformPrior(-np.pi / 4, np.pi / 6)
TRUNC = TruncatedNormalPrior(-np.pi / 8, np.pi / 8, 0.0, 1.0)
ALL_PRIORS = (FULL_RANGE, NARROW, TRUNC)


class TestPdf:
    def test_full_range_uniform_value(self):
        assert FULL_RANGE.pdf(0.0) == pytest.approx(1.0 / np.pi)

    def test_truncated_normal_exceeds_parent(self):
        # truncation renormalizes upward, so the peak beats the parent normal
        assert TRUNC.pdf(0.0) > 1.0 / np.sqrt(2 * np.pi)

    def test_truncated_normal_normalization_by_quadrature(self):
        # the closed-form normalizer must match quadrature of the raw density
        raw = lambda t: np.exp(-0.5 * t**2) / np.sqrt(2 * np.pi)
        mass, _ = integrate.quad(raw, TRUNC.a, TRUNC.b, epsabs=1e-12)
        assert TRUNC.pdf(0.05) == pytest.approx(raw(0.05) / mass, rel=1e-10)

    def test_outside_support_is_zero(self):
        for prior in ALL_PRIORS:
            assert prior.pdf(prior.b + 0.1) == 0.0
            assert prior.pdf(prior.a - 0.1) == 0.0

    def test_integrates_to_one(self):
        for prior in ALL_PRIORS:
            total, _ = integrate.quad(prior.pdf, prior.a, prior.b, epsabs=1e-10)
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_invalid_support_rejected(self):
        with pytest.raises(ValueError):
            UniformPrior(0.5, 0.1)
        with pytest.raises(ValueError):
            UniformPrior(-2.0, 0.1)
        with pytest.raises(ValueError):
            TruncatedNormalPrior(-0.1, 0.1, 0.0, -1.0)


class TestSampling:
    def test_uniform_mean(self):
        rng = np.random.default_rng(21)
        draws = sample_doas(NARROW, 100_000, rng)
        expected = (NARROW.a + NARROW.b) / 2
        width = NARROW.b - NARROW.a
        stderr = width / np.sqrt(12 * len(draws))
        assert abs(draws.mean() - expected) < 3 * stderr

    def test_truncated_normal_support(self):
        rng = np.random.default_rng(22)
        draws = sample_doas(TRUNC, 50_000, rng)
        assert np.all(draws > TRUNC.a)
        assert np.all(draws < TRUNC.b)

    def test_seed_determinism(self):
        for prior in ALL_PRIORS:
            a = sample_doas(prior, 1000, np.random.default_rng(33))
            b = sample_doas(prior, 1000, np.random.default_rng(33))
            np.testing.assert_array_equal(a, b)

    def test_size_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_doas(FULL_RANGE, 0, np.random.default_rng(0))


class TestCharacteristicIntegral:
    def test_at_zero_is_one(self):
        for prior in ALL_PRIORS:
            assert characteristic_integral(prior, 0.0) == 1.0 + 0.0j

    def test_full_range_matches_bessel(self):
        # closed form for the full-range uniform prior
        value = characteristic_integral(FULL_RANGE, 1.0)
        assert value.real == pytest.approx(bessel_j0(np.pi), abs=1e-10)
        assert value.real == pytest.approx(-0.3042421776, abs=1e-8)
        assert abs(value.imag) < 1e-10

    def test_symmetric_prior_is_real(self):
        for x in (0.5, 1.0, 3.7):
            assert abs(characteristic_integral(TRUNC, x).imag) < 1e-10
            assert abs(characteristic_integral(FULL_RANGE, x).imag) < 1e-10

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(23)
        for prior in ALL_PRIORS:
            for x in rng.uniform(-10, 10, 50):
                plus = characteristic_integral(prior, x)
                minus = characteristic_integral(prior, -x)
                assert minus == pytest.approx(np.conj(plus), abs=1e-10)

    def test_modulus_bounded_by_one(self):
        rng = np.random.default_rng(24)
        for prior in ALL_PRIORS:
            for x in rng.uniform(-30, 30, 50):
                assert abs(characteristic_integral(prior, x)) <= 1.0 + 1e-10

    def test_monte_carlo_agreement(self):
        # sample mean of the phase term must match quadrature at 5 standard errors
        rng = np.random.default_rng(25)
        n = 1_000_000
        for prior in ALL_PRIORS:
            thetas = prior.sample(n, rng)
            for x in range(1, 6):
                samples = np.exp(-1j * np.pi * x * np.sin(thetas))
                mean = samples.mean()
                stderr = np.sqrt(
                    (samples.real.var() + samples.imag.var()) / n
                )
                value = characteristic_integral(prior, float(x))
                assert abs(mean - value) < 5 * max(stderr, 1e-12)

    def test_cache_hit_consistency(self):
        prior = UniformPrior(-1.0, 1.0)
        first = characteristic_integral(prior, 2.0)
        second = characteristic_integral(prior, 2.0)
        assert first == second

    def test_conjugate_symmetry_exact_through_cache(self):
        # the mirrored argument is served from the cache as the exact conjugate
        prior = UniformPrior(-1.2, 0.7)
        plus = characteristic_integral(prior, 3.5)
        minus = characteristic_integral(prior, -3.5)
        assert minus == plus.conjugate()


class TestBesselJ0:
    def test_at_zero(self):
        assert bessel_j0(0.0) == 1.0

    def test_first_zero_via_integral_representation(self):
        # independent oracle: J0(z) = (1/pi) * integral_0^pi cos(z sin t) dt
        z = 2.404825557695773
        oracle, _ = integrate.quad(
            lambda t: np.cos(z * np.sin(t)) / np.pi, 0, np.pi, epsabs=1e-13
        )
        assert abs(oracle) < 1e-12
        assert bessel_j0(z) == pytest.approx(oracle, abs=1e-12)

    def test_against_integral_representation_wide_range(self):
        for z in (0.5, 1.0, 3.0, 7.9, 8.0, 13.9, 14.0, 14.1, 25.0, 60.0):
            oracle, _ = integrate.quad(
                lambda t: np.cos(z * np.sin(t)) / np.pi, 0, np.pi,
                epsabs=1e-13, limit=400,
            )
            assert bessel_j0(z) == pytest.approx(oracle, abs=1e-12), z

    def test_even_function(self):
        assert bessel_j0(-3.3) == bessel_j0(3.3)

    def test_cross_checks_quadrature(self):
        for x in (0.5, 1.0, 2.0):
            quad_value = characteristic_integral(FULL_RANGE, x)
            assert quad_value.real == pytest.approx(bessel_j0(np.pi * x), abs=1e-8)


class TestConfigRoundtrip:
    def test_uniform(self):
        cfg = {"kind": "uniform", "a": -0.5, "b": 0.25}
        prior = prior_from_config(cfg)
        assert isinstance(prior, UniformPrior)
        assert prior_to_config(prior) == cfg

    def test_truncated_normal(self):
        cfg = {"kind": "truncated_normal", "a": -0.4, "b": 0.4, "mu": 0.0, "sigma2": 1.0}
        prior = prior_from_config(cfg)
        assert isinstance(prior, TruncatedNormalPrior)
        assert prior_to_config(prior) == cfg

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            prior_from_config({"kind": "von_mises", "a": 0, "b": 1})
