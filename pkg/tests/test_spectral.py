import numpy as np
import pytest
from numpy.testing import assert_allclose

from qwalk.spectral import (
    Attractive,
    EigenvalueEnsemble,
    Repulsive,
    Spectrum,
    Uncorrelated,
    correlation_matrices,
    dephasing_factor,
    dephasing_rate,
    ideal_spectrum,
    linear_spectrum,
    sample_fluctuations,
    sample_spectrum,
    weight_function,
)

ALL_MODELS = [Uncorrelated(kappa=1.0), Attractive(kappa=1.0, a=1.0), Repulsive(kappa=1.0, b=2.0)]


def make_ensemble(model, n=6, means=None):
    if means is None:
        means = np.arange(n, dtype=float)
    return EigenvalueEnsemble(means=means, model=model)


class TestSpectra:
    def test_ideal_n3(self):
        assert_allclose(ideal_spectrum(3).energies, [0.0, 1.0, 1.0], atol=0)

    def test_ideal_n2(self):
        assert_allclose(ideal_spectrum(2).energies, [0.0, 1.0], atol=0)

    def test_linear_n10(self):
        s = linear_spectrum(10)
        assert_allclose(s.energies, np.arange(10.0), atol=0)
        assert s.energies[0] == 0.0

    def test_detailed_balance_flags(self):
        assert ideal_spectrum(4).detailed_balance
        assert linear_spectrum(4).detailed_balance

    def test_detailed_balance_requires_zero_first_level(self):
        with pytest.raises(ValueError, match="E_1 = 0"):
            Spectrum(np.array([0.5, 1.0]), detailed_balance=True)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            Spectrum(np.array([0.0, np.inf]))

    def test_rejects_too_small(self):
        with pytest.raises(ValueError):
            ideal_spectrum(1)

    def test_energies_immutable(self):
        s = linear_spectrum(5)
        with pytest.raises(ValueError):
            s.energies[0] = 3.0


class TestModelValidation:
    def test_kappa_positive(self):
        with pytest.raises(ValueError):
            Uncorrelated(kappa=0.0)
        with pytest.raises(ValueError):
            Attractive(kappa=-1.0, a=1.0)

    def test_a_positive(self):
        with pytest.raises(ValueError):
            Attractive(kappa=1.0, a=0.0)

    def test_b_above_one(self):
        with pytest.raises(ValueError):
            Repulsive(kappa=1.0, b=1.0)

    def test_rates(self):
        assert dephasing_rate(Uncorrelated(kappa=2.0)) == 2.0
        assert dephasing_rate(Attractive(kappa=1.0, a=1.0)) == 0.5
        assert dephasing_rate(Repulsive(kappa=1.0, b=3.0)) == 0.5


class TestCorrelationMatrices:
    def test_uncorrelated_diagonal(self):
        ens = make_ensemble(Uncorrelated(kappa=2.5), n=5)
        gamma, gamma_inv = correlation_matrices(ens)
        assert_allclose(gamma, np.eye(5) / 2.5, atol=0)
        assert_allclose(gamma_inv, np.eye(5) * 2.5, atol=0)

    def test_attractive_inverse_difference(self):
        # gamma_inv_kk - gamma_inv_kl = kappa / (1 + a) for k != l
        kappa, a = 1.3, 0.7
        ens = make_ensemble(Attractive(kappa=kappa, a=a), n=8)
        _, gamma_inv = correlation_matrices(ens)
        for k in range(8):
            for l in range(8):
                if k != l:
                    assert_allclose(gamma_inv[k, k] - gamma_inv[k, l], kappa / (1 + a), atol=1e-14)

    def test_repulsive_inverse_difference(self):
        kappa, b = 0.8, 2.4
        ens = make_ensemble(Repulsive(kappa=kappa, b=b), n=8)
        _, gamma_inv = correlation_matrices(ens)
        for k in range(8):
            for l in range(8):
                if k != l:
                    assert_allclose(gamma_inv[k, k] - gamma_inv[k, l], kappa / (b - 1), atol=1e-14)

    def test_product_is_identity_attractive(self):
        ens = make_ensemble(Attractive(kappa=1.0, a=1.0), n=10)
        gamma, gamma_inv = correlation_matrices(ens)
        assert np.abs(gamma @ gamma_inv - np.eye(10)).max() <= 1e-10

    @pytest.mark.parametrize("model", ALL_MODELS)
    @pytest.mark.parametrize("n", [4, 37, 256])
    def test_product_is_identity_all(self, model, n):
        gamma, gamma_inv = correlation_matrices(make_ensemble(model, n=n))
        assert np.abs(gamma @ gamma_inv - np.eye(n)).max() <= 1e-10

    @pytest.mark.parametrize("model", ALL_MODELS + [Attractive(kappa=0.1, a=5.0), Repulsive(kappa=3.0, b=1.2)])
    @pytest.mark.parametrize("n", [4, 64, 256])
    def test_gamma_positive_definite(self, model, n):
        gamma, _ = correlation_matrices(make_ensemble(model, n=n))
        assert_allclose(gamma, gamma.T, atol=0)
        assert np.linalg.eigvalsh(gamma).min() > 0


class TestDephasingFactor:
    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_diagonal_is_exactly_one(self, model):
        ens = make_ensemble(model)
        for t in (0.0, 0.5, 100.0):
            assert dephasing_factor(ens, 3, 3, t) == 1.0 + 0.0j

    def test_uncorrelated_equal_means(self):
        ens = make_ensemble(Uncorrelated(kappa=1.0), means=np.zeros(6))
        for t in (0.5, 1.0, 2.0):
            assert_allclose(dephasing_factor(ens, 1, 2, t), np.exp(-t * t / 2), atol=1e-15)

    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_modulus_bounded_and_pair_independent(self, model):
        ens = make_ensemble(model)
        t = 0.8
        mods = [
            abs(dephasing_factor(ens, k, l, t))
            for k in range(1, 7)
            for l in range(1, 7)
            if k != l
        ]
        assert max(mods) < 1.0
        assert max(mods) - min(mods) <= 1e-15
        assert abs(dephasing_factor(ens, 1, 2, 0.0)) == 1.0

    def test_mean_level_phase(self):
        ens = make_ensemble(Uncorrelated(kappa=2.0))
        t = 1.3
        p = dephasing_factor(ens, 4, 2, t)
        assert_allclose(p, np.exp(-t * t) * np.exp(-1j * (3.0 - 1.0) * t), atol=1e-15)

    def test_index_range(self):
        with pytest.raises(ValueError):
            dephasing_factor(make_ensemble(Uncorrelated(1.0)), 0, 1, 1.0)


class TestWeightFunction:
    def test_at_zero(self):
        for model in ALL_MODELS:
            assert weight_function(make_ensemble(model), 0.0) == 1.0

    def test_figure_setup_value(self):
        # sigma = 1/500 makes w(t) = exp(-t^2/1000); w(100) = exp(-10)
        ens = make_ensemble(Uncorrelated(kappa=2.0 / 1000.0), n=10)
        assert_allclose(weight_function(ens, 100.0), np.exp(-10.0), rtol=1e-12)
        assert_allclose(weight_function(ens, 100.0), 4.5399929762e-05, rtol=1e-9)

    def test_monotone_decreasing(self):
        ens = make_ensemble(Attractive(kappa=1.0, a=2.0))
        grid = weight_function(ens, np.linspace(0, 20, 200))
        assert np.all(np.diff(grid) < 0)

    def test_frozen_fluctuations_limit(self):
        # attractive with huge a: sigma -> 0 and w -> 1 at fixed t
        ens = make_ensemble(Attractive(kappa=1.0, a=1e12))
        assert weight_function(ens, 5.0) > 1 - 1e-10

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            weight_function(make_ensemble(Uncorrelated(1.0)), -1.0)


class TestSampler:
    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_mean_and_covariance(self, model):
        samples = 100_000
        ens = make_ensemble(model, n=6)
        x = sample_fluctuations(ens, samples, seed=0)
        _, gamma_inv = correlation_matrices(ens)
        target = gamma_inv / 2.0

        se_mean = np.sqrt(np.diag(target) / samples)
        assert np.all(np.abs(x.mean(axis=0)) <= 3 * se_mean)

        emp = (x.T @ x) / samples
        # standard error of a Gaussian covariance entry
        se_cov = np.sqrt(
            (np.outer(np.diag(target), np.diag(target)) + target**2) / samples
        )
        assert np.all(np.abs(emp - target) <= 3 * se_cov)

    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_characteristic_function_matches_closed_form(self, model):
        # the cross-validation tying the sampler to the dephasing factors
        samples = 100_000
        ens = make_ensemble(model, n=6)
        x = sample_fluctuations(ens, samples, seed=0)
        for t in (0.5, 1.0, 2.0, 5.0):
            for k in range(1, 7):
                for l in range(1, 7):
                    if k == l:
                        continue
                    z = np.exp(-1j * (x[:, k - 1] - x[:, l - 1]) * t)
                    closed = dephasing_factor(ens, k, l, t) * np.exp(
                        1j * (ens.means[k - 1] - ens.means[l - 1]) * t
                    )
                    se_re = z.real.std(ddof=1) / np.sqrt(samples)
                    se_im = z.imag.std(ddof=1) / np.sqrt(samples)
                    assert abs(z.real.mean() - closed.real) <= 3 * se_re
                    assert abs(z.imag.mean() - closed.imag) <= 3 * max(se_im, 1e-12)

    def test_sampled_spectrum_deterministic(self):
        ens = make_ensemble(Uncorrelated(kappa=1.0))
        a = sample_spectrum(ens, seed=7)
        b = sample_spectrum(ens, seed=7)
        c = sample_spectrum(ens, seed=8)
        assert np.array_equal(a.energies, b.energies)
        assert not np.array_equal(a.energies, c.energies)

    def test_sampled_spectrum_not_pinned(self):
        ens = make_ensemble(Uncorrelated(kappa=1.0))
        s = sample_spectrum(ens, seed=3)
        assert not s.detailed_balance
        assert s.energies[0] != 0.0

    def test_sample_count_validated(self):
        with pytest.raises(ValueError):
            sample_fluctuations(make_ensemble(Uncorrelated(1.0)), 0, seed=0)
