import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from qwalk.basis import localized_basis, mixed_basis, plane_wave_basis
from qwalk.evolution import (
    asymptotic_transition,
    averaged_transition,
    hamiltonian_from,
    transition_probability,
    unitary,
)
from qwalk.spectral import (
    Attractive,
    EigenvalueEnsemble,
    Repulsive,
    Spectrum,
    Uncorrelated,
    dephasing_factor,
    ideal_spectrum,
    linear_spectrum,
    sample_fluctuations,
    weight_function,
)

ALL_MODELS = [Uncorrelated(kappa=1.0), Attractive(kappa=1.0, a=1.0), Repulsive(kappa=1.0, b=2.0)]


def brute_force_unitary(basis, spectrum, t):
    """Independent oracle: dense scaling-and-squaring matrix exponential."""
    return expm(-1j * hamiltonian_from(basis, spectrum).matrix * t)


def random_nondegenerate_spectrum(rng, n):
    energies = np.sort(rng.uniform(0.0, 5.0, n))
    while np.min(np.diff(energies)) < 1e-3:
        energies = np.sort(rng.uniform(0.0, 5.0, n))
    return Spectrum(energies)


def localized_asymptote_closed_form(n, m_to, m_from):
    """Tail-sum closed form for the localized static sum, m_to >= m_from."""
    assert m_to >= m_from
    tail = sum(1.0 / (k**2 * (k - 1) ** 2) for k in range(m_to + 1, n + 1))
    kronecker = 1.0 if m_to == m_from else 0.0
    return kronecker * ((m_to - 1) ** 2 - 1) / m_to**2 + 1.0 / n**2 + 1.0 / m_to**2 + tail


class TestHamiltonian:
    @pytest.mark.parametrize("n", [4, 10])
    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis])
    def test_ideal_reconstruction(self, build, n):
        h = hamiltonian_from(build(n), ideal_spectrum(n)).matrix
        assert np.abs(h - (np.eye(n) - 1.0 / n)).max() <= 1e-12

    def test_both_bases_give_same_ideal_hamiltonian(self):
        n = 12
        h_loc = hamiltonian_from(localized_basis(n), ideal_spectrum(n)).matrix
        h_pw = hamiltonian_from(plane_wave_basis(n), ideal_spectrum(n)).matrix
        assert np.abs(h_loc - h_pw).max() <= 1e-12

    def test_zero_spectrum_gives_zero_matrix(self):
        n = 6
        zero = Spectrum(np.zeros(n), detailed_balance=True)
        for build in (localized_basis, plane_wave_basis):
            assert np.abs(hamiltonian_from(build(n), zero).matrix).max() == 0.0

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis, mixed_basis])
    def test_hermitian(self, build):
        rng = np.random.default_rng(5)
        n = 20
        h = hamiltonian_from(build(n), random_nondegenerate_spectrum(rng, n)).matrix
        assert np.abs(h - h.conj().T).max() <= 1e-12

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis, mixed_basis])
    def test_spectrum_round_trip(self, build):
        # eigenvalues recovered by a dense solver match the input multiset
        rng = np.random.default_rng(8)
        n = 24
        spectrum = random_nondegenerate_spectrum(rng, n)
        h = hamiltonian_from(build(n), spectrum).matrix
        assert_allclose(np.sort(np.linalg.eigvalsh(h)), np.sort(spectrum.energies), atol=1e-9)

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            hamiltonian_from(localized_basis(4), ideal_spectrum(5))


class TestUnitary:
    def test_time_zero_is_identity(self):
        u = unitary(localized_basis(7), linear_spectrum(7), 0.0)
        assert np.abs(u.matrix - np.eye(7)).max() <= 1e-14

    @pytest.mark.parametrize("t", [0.5, 3.0, 47.0])
    def test_ideal_closed_form(self, t):
        # spectral projectors: U(t) = ones/n + exp(-i t) (1 - ones/n)
        n = 9
        expected = np.ones((n, n)) / n + np.exp(-1j * t) * (np.eye(n) - np.ones((n, n)) / n)
        for build in (localized_basis, plane_wave_basis):
            u = unitary(build(n), ideal_spectrum(n), t)
            assert np.abs(u.matrix - expected).max() <= 1e-12

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis])
    def test_detailed_balance_row_sums(self, build):
        n = 10
        b = build(n)
        s = linear_spectrum(n)
        for t in range(1, 101):
            rowsums = unitary(b, s, float(t)).matrix.sum(axis=1)
            assert np.abs(rowsums - 1.0).max() <= 1e-10

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis, mixed_basis])
    def test_unitarity(self, build):
        rng = np.random.default_rng(11)
        n = 48
        u = unitary(build(n), random_nondegenerate_spectrum(rng, n), 31.0).matrix
        assert np.abs(u @ u.conj().T - np.eye(n)).max() <= 1e-10

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis, mixed_basis])
    @pytest.mark.parametrize("n", [16, 64])
    def test_matches_brute_force_exponential(self, build, n):
        rng = np.random.default_rng(13)
        b = build(n)
        for _ in range(5):
            s = random_nondegenerate_spectrum(rng, n)
            t = float(rng.uniform(0.0, 100.0))
            assert np.abs(unitary(b, s, t).matrix - brute_force_unitary(b, s, t)).max() <= 1e-9

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            unitary(localized_basis(4), ideal_spectrum(4), -1.0)


class TestTransitionProbability:
    def test_time_zero_is_kronecker(self):
        u = unitary(localized_basis(6), linear_spectrum(6), 0.0)
        for m_to in range(1, 7):
            for m_from in range(1, 7):
                expected = 1.0 if m_to == m_from else 0.0
                assert abs(transition_probability(u, m_to, m_from) - expected) <= 1e-13

    @pytest.mark.parametrize("build", [localized_basis, plane_wave_basis])
    def test_column_normalization(self, build):
        n = 10
        u = unitary(build(n), linear_spectrum(n), 17.0)
        for m_from in range(1, n + 1):
            total = sum(transition_probability(u, m_to, m_from) for m_to in range(1, n + 1))
            assert abs(total - 1.0) <= 1e-10

    def test_figure_configuration_against_oracle(self):
        # n=10, localized basis, linear spectrum: P(5,3) and P(5,5) on t=1..100
        n = 10
        b = localized_basis(n)
        s = linear_spectrum(n)
        for t in range(1, 101):
            u = unitary(b, s, float(t))
            brute = brute_force_unitary(b, s, float(t))
            for m_to, m_from in ((5, 3), (5, 5)):
                p = transition_probability(u, m_to, m_from)
                expected = abs(brute[m_to - 1, m_from - 1]) ** 2
                assert abs(p - expected) <= 1e-9

    def test_index_validation(self):
        u = unitary(localized_basis(4), ideal_spectrum(4), 1.0)
        with pytest.raises(ValueError):
            transition_probability(u, 0, 1)
        with pytest.raises(ValueError):
            transition_probability(u, 1, 5)


class TestAveragedTransition:
    def make(self, model=None, n=10, build=localized_basis):
        model = model or Uncorrelated(kappa=1.0 / 500.0)
        return build(n), EigenvalueEnsemble(np.arange(n, dtype=float), model)

    def test_time_zero_is_kronecker(self):
        basis, ens = self.make()
        for m_to, m_from in ((3, 3), (3, 5)):
            avg = averaged_transition(basis, ens, 0.0, m_to, m_from)
            expected = 1.0 if m_to == m_from else 0.0
            assert abs(avg.value - expected) <= 1e-12
            assert avg.weight == 1.0

    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_split_identity(self, model):
        basis, ens = self.make(model)
        for t in (0.3, 1.7, 12.0):
            avg = averaged_transition(basis, ens, t, 5, 3)
            recombined = (1 - avg.weight) * avg.classical_part + avg.weight * avg.quantum_part
            assert abs(avg.value - recombined) <= 1e-12

    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_raw_double_sum_oracle(self, model):
        # recompute the double sum from individual dephasing factors
        basis, ens = self.make(model, n=7)
        t = 2.1
        q_to = basis.site_overlaps(4)
        q_from = basis.site_overlaps(2)
        amp = q_to * q_from.conj()
        raw = sum(
            dephasing_factor(ens, k, l, t) * amp[k - 1] * np.conj(amp[l - 1])
            for k in range(1, 8)
            for l in range(1, 8)
        )
        avg = averaged_transition(basis, ens, t, 4, 2)
        assert abs(avg.value - raw.real) <= 1e-12
        assert abs(raw.imag) <= 1e-12

    def test_plane_wave_long_time_uniform(self):
        basis, ens = self.make(build=plane_wave_basis)
        for m_to, m_from in ((5, 4), (5, 5), (1, 10)):
            avg = averaged_transition(basis, ens, 100.0, m_to, m_from)
            assert abs(avg.value - 0.1) <= 1e-3

    def test_total_probability_conserved(self):
        basis, ens = self.make()
        for t in (0.9, 33.0):
            total = sum(averaged_transition(basis, ens, t, m, 5).value for m in range(1, 11))
            assert abs(total - 1.0) <= 1e-10

    def test_degenerate_means_localize_quantum_part(self):
        n = 8
        ens = EigenvalueEnsemble(np.full(n, 2.5), Uncorrelated(kappa=0.5))
        basis = localized_basis(n)
        for t in (0.0, 1.0, 50.0):
            for m_to, m_from in ((3, 3), (3, 6)):
                avg = averaged_transition(basis, ens, t, m_to, m_from)
                expected = 1.0 if m_to == m_from else 0.0
                assert abs(avg.quantum_part - expected) <= 1e-12

    def test_monte_carlo_oracle(self):
        # mean of |U|^2 over sampled spectra approximates the closed form
        samples = 10_000
        basis, ens = self.make()
        x = sample_fluctuations(ens, samples, seed=1)
        energies = ens.means[None, :] + x
        for m_to, m_from in ((5, 3), (5, 5)):
            amp = basis.site_overlaps(m_to) * np.conj(basis.site_overlaps(m_from))
            for t in (5.0, 20.0):
                values = np.abs(np.exp(-1j * energies * t) @ amp) ** 2
                target = averaged_transition(basis, ens, t, m_to, m_from).value
                se = values.std(ddof=1) / np.sqrt(samples)
                assert abs(values.mean() - target) <= 3 * max(se, 1e-12)

    def test_value_bounds(self):
        basis, ens = self.make(Attractive(kappa=2.0, a=0.5))
        for t in np.linspace(0.0, 30.0, 40):
            avg = averaged_transition(basis, ens, float(t), 2, 7)
            assert -1e-12 <= avg.value <= 1 + 1e-12


class TestAsymptoticTransition:
    def test_plane_wave_uniform(self):
        basis = plane_wave_basis(10)
        for m_to, m_from in ((1, 1), (5, 3), (10, 2)):
            assert abs(asymptotic_transition(basis, m_to, m_from) - 0.1) <= 1e-13

    def test_localized_closed_form_all_pairs(self):
        n = 10
        basis = localized_basis(n)
        for m_to in range(1, n + 1):
            for m_from in range(1, m_to + 1):
                direct = asymptotic_transition(basis, m_to, m_from)
                closed = localized_asymptote_closed_form(n, m_to, m_from)
                assert abs(direct - closed) <= 1e-12

    def test_symmetric_in_pair(self):
        basis = localized_basis(9)
        assert asymptotic_transition(basis, 7, 3) == asymptotic_transition(basis, 3, 7)

    def test_localized_return_exceeds_uniform(self):
        # localization favors return: the localized 5 -> 5 asymptote beats 1/n
        basis = localized_basis(10)
        assert asymptotic_transition(basis, 5, 5) > 0.1

    def test_matches_long_time_average(self):
        n = 10
        basis = localized_basis(n)
        ens = EigenvalueEnsemble(np.arange(n, dtype=float), Uncorrelated(kappa=1.0 / 500.0))
        assert weight_function(ens, 100.0) < 1e-4
        for m_to, m_from in ((5, 3), (5, 5)):
            avg = averaged_transition(basis, ens, 100.0, m_to, m_from)
            assert abs(avg.value - asymptotic_transition(basis, m_to, m_from)) <= 1e-3

    def test_cyclic_average_translation_invariant(self):
        n = 8
        basis = localized_basis(n)
        values = {}
        for shift in range(n):
            m_from = (2 + shift - 1) % n + 1
            m_to = (5 + shift - 1) % n + 1
            values[shift] = asymptotic_transition(basis, m_to, m_from, cyclic_average=True)
        spread = max(values.values()) - min(values.values())
        assert spread <= 1e-14

    def test_cyclic_average_is_mean_over_shifts(self):
        n = 6
        basis = localized_basis(n)
        plain = [
            asymptotic_transition(basis, (4 + p - 1) % n + 1, (2 + p - 1) % n + 1)
            for p in range(n)
        ]
        averaged = asymptotic_transition(basis, 4, 2, cyclic_average=True)
        assert abs(averaged - np.mean(plain)) <= 1e-14
