import numpy as np
import pytest

from simulator.dynamics import OpenSystem, QuadraticHamiltonian, centre_flow, thermal_channels
from simulator.errors import ConfigError
from simulator.quadratic_exact import (
    centre_flow_affine,
    chord_generator,
    coarse_graining_covariance,
    decoherence_matrix,
    evolve_chord_exact,
    evolve_gaussian_moments,
    evolve_wigner_exact,
    gaussian_kernel,
    propagation_matrix,
    window_matrix,
)
from simulator.states import build_state
from simulator.symplectic import chord_normalization, hermiticity_defect, phase_moments, skew_product, wigner_to_chord

from tests.conftest import coherent_spec


@pytest.fixture
def driven():
    """非對角 B 加上線性項 b"""
    hamiltonian = QuadraticHamiltonian([[1.0, 0.2], [0.2, 0.8]], b=[0.3, -0.2])
    return OpenSystem(hamiltonian, tuple(thermal_channels(0.2, 0.5)), hbar=1.0)


def test_propagation_matrix_determinant(damped):
    G = propagation_matrix(damped, 2.0)
    assert np.linalg.det(G) == pytest.approx(np.exp(2 * 0.1 * 2.0))


def test_backward_chord_and_forward_centre_flow_are_adjoint(driven, rng):
    t = 1.3
    F, _ = centre_flow_affine(driven, t)
    back = propagation_matrix(driven, -t)
    x = rng.normal(size=(10, 2))
    xi = rng.normal(size=(10, 2))
    np.testing.assert_allclose(skew_product(x, xi @ back.T), skew_product(x @ F.T, xi), atol=1e-12)


def test_affine_flow_matches_rk4(driven):
    F, c = centre_flow_affine(driven, 1.0)
    x0 = np.array([0.5, -1.0])
    np.testing.assert_allclose(F @ x0 + c, centre_flow(driven, x0, 1.0).points[-1], atol=1e-9)


def test_decoherence_matrix_properties(damped, unitary):
    M = decoherence_matrix(damped, 1.5)
    np.testing.assert_allclose(M, M.T, atol=1e-15)
    assert np.min(np.linalg.eigvalsh(M)) > 0
    np.testing.assert_array_equal(decoherence_matrix(damped, 0.0), 0.0)
    np.testing.assert_array_equal(decoherence_matrix(unitary, 1.0), 0.0)
    # Λ = 0.1 I，G_{±s}ᵀG_{±s} = e^{±0.2 s} I
    np.testing.assert_allclose(M, 0.5 * (1.0 - np.exp(-0.3)) * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(
        decoherence_matrix(damped, 1.5, "forward"), 0.5 * (np.exp(0.3) - 1.0) * np.eye(2), atol=1e-13
    )
    with pytest.raises(ConfigError):
        decoherence_matrix(damped, 1.0, "sideways")
    with pytest.raises(ConfigError):
        decoherence_matrix(damped, -1.0)


def test_window_helpers(damped):
    kernel = gaussian_kernel(damped, 1.0)
    cov = coarse_graining_covariance(kernel.Mminus, 1.0)
    np.testing.assert_allclose(cov, kernel.Mminus, atol=1e-14)
    assert window_matrix(np.zeros((2, 2))) is None
    np.testing.assert_allclose(window_matrix(kernel.Mminus) @ kernel.Mminus, np.eye(2), atol=1e-12)


def test_damped_vacuum_is_stationary(damped, vacuum):
    w_t = evolve_wigner_exact(damped, vacuum, 1.0)
    np.testing.assert_allclose(w_t.samples, vacuum.samples, atol=1e-10)


def test_unitary_rotation_of_coherent_state(unitary, grid65, coherent_q2):
    w_t = evolve_wigner_exact(unitary, coherent_q2, np.pi / 2)
    expected = build_state(coherent_spec(-2.0, 0.0), grid65)
    np.testing.assert_allclose(w_t.samples, expected.samples, atol=1e-10)


def test_grid_moments_follow_gaussian_moments(driven, coherent_q2):
    w_t = evolve_wigner_exact(driven, coherent_q2, 1.0)
    mean, cov = phase_moments(w_t)
    expected_mean, expected_cov = evolve_gaussian_moments(driven, [0.0, 2.0], 0.5 * np.eye(2), 1.0)
    np.testing.assert_allclose(mean, expected_mean, atol=1e-8)
    np.testing.assert_allclose(cov, expected_cov, atol=1e-8)


def test_damped_moments_relax_to_thermal_vacuum(damped):
    mean, cov = evolve_gaussian_moments(damped, [0.0, 2.0], 0.5 * np.eye(2), 200.0)
    np.testing.assert_allclose(mean, 0.0, atol=1e-8)
    np.testing.assert_allclose(cov, 0.5 * np.eye(2), atol=1e-8)


def test_chord_evolution_keeps_normalization(damped, coherent_q2):
    chi0 = wigner_to_chord(coherent_q2)
    chi_t = evolve_chord_exact(damped, chi0, 2.0)
    assert abs(chord_normalization(chi_t) - 1.0) < 1e-12


def test_evolved_chord_grids_stay_hermitian(damped, driven, coherent_q2):
    chi0 = wigner_to_chord(coherent_q2)
    for system in (damped, driven):
        for t in (0.5, 2.0):
            assert hermiticity_defect(evolve_chord_exact(system, chi0, t)) <= 1e-9


def test_chord_generator_is_time_derivative(driven, coherent_q2):
    chi0 = wigner_to_chord(coherent_q2)
    t, h = 0.5, 1e-3
    chi_t = evolve_chord_exact(driven, chi0, t)
    derivative = (evolve_chord_exact(driven, chi0, t + h).samples - evolve_chord_exact(driven, chi0, t - h).samples) / (2 * h)
    np.testing.assert_allclose(chord_generator(driven, chi_t).samples, derivative, atol=1e-5)


def test_non_quadratic_hamiltonian_is_rejected(quartic_damped, coherent_q2):
    with pytest.raises(ConfigError):
        evolve_wigner_exact(quartic_damped, coherent_q2, 1.0)
