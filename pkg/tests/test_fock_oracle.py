import numpy as np
import pytest

from oracle.fock import (
    DensityMatrix,
    MasterEquation,
    build_operators,
    chord_from_density,
    density_from_state,
    density_moments,
    density_purity,
    displaced_trace,
    hermite_functions,
    integrate_master,
    lindblad_rhs,
    parity_value,
    wigner_from_density,
)
from simulator.dynamics import OpenSystem, PendulumHamiltonian
from simulator.errors import AccuracyError, ConfigError, TruncationError
from simulator.quadratic_exact import evolve_gaussian_moments, evolve_wigner_exact
from simulator.states import StateSpec, build_state
from simulator.symplectic import GridSpec, PhaseVector, quadrature_mass, wigner_to_chord

from tests.conftest import coherent_spec


def _random_density(rng, dim, rank=3):
    vectors = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    vectors[dim // 2:] = 0.0
    rho = vectors @ vectors.conj().T
    return DensityMatrix(entries=rho / np.trace(rho))


def test_canonical_commutator_on_kept_block():
    ops = build_operators(30)
    commutator = ops.qop @ ops.pop - ops.pop @ ops.qop
    np.testing.assert_allclose(commutator[:-1, :-1], 1j * np.eye(29), atol=1e-12)


def test_hermite_functions_are_orthonormal():
    q = np.linspace(-15.0, 15.0, 3001)
    psi = hermite_functions(12, q, 1.0)
    gram = psi @ psi.T * (q[1] - q[0])
    np.testing.assert_allclose(gram, np.eye(12), atol=1e-10)


def test_vacuum_is_stationary_under_damping(damped):
    rho = density_from_state(coherent_spec(0.0, 0.0), 20)
    np.testing.assert_allclose(lindblad_rhs(damped, rho).entries, 0.0, atol=1e-12)


def test_master_equation_is_trace_free(damped, dephasing, rng):
    rho = _random_density(rng, 20)
    for system in (damped, dephasing):
        assert abs(lindblad_rhs(system, rho).trace) < 1e-12


def test_zero_time_returns_input(damped):
    rho = density_from_state(coherent_spec(0.0, 1.0), 20)
    assert integrate_master(damped, rho, 0.0) is rho


def test_damped_centroid_follows_classical_flow(damped):
    rho = density_from_state(coherent_spec(0.0, 2.0), 40)
    rho_t = integrate_master(damped, rho, 1.0, dt=2e-3)
    rho_t.validate()
    mean, cov = density_moments(rho_t)
    expected_mean, expected_cov = evolve_gaussian_moments(damped, [0.0, 2.0], 0.5 * np.eye(2), 1.0)
    np.testing.assert_allclose(mean, expected_mean, atol=1e-6)
    np.testing.assert_allclose(cov, expected_cov, atol=1e-6)
    assert np.linalg.norm(mean) == pytest.approx(2.0 * np.exp(-0.1), abs=1e-6)


def test_unitary_rotation_keeps_purity(unitary):
    rho = density_from_state(coherent_spec(0.0, 2.0), 40)
    rho_t = integrate_master(unitary, rho, np.pi / 2, dt=2e-3)
    mean, _ = density_moments(rho_t)
    np.testing.assert_allclose(mean, [-2.0, 0.0], atol=1e-6)
    assert density_purity(rho_t) == pytest.approx(1.0, abs=1e-8)


def test_dephasing_lowers_purity(dephasing):
    rho = density_from_state(coherent_spec(0.0, 1.0), 40)
    rho_t = integrate_master(dephasing, rho, 0.5, dt=2e-3)
    assert density_purity(rho_t) < 1.0 - 1e-3
    assert abs(rho_t.trace - 1.0) < 1e-10


def test_truncation_guard(damped):
    with pytest.raises(TruncationError):
        density_from_state(coherent_spec(0.0, 6.0), 20)
    with pytest.raises(ConfigError):
        density_from_state(StateSpec(kind="fock", fock_index=25), 20)


def test_non_polynomial_hamiltonian_is_rejected():
    with pytest.raises(ConfigError):
        MasterEquation(OpenSystem(PendulumHamiltonian()), 20)


def test_wigner_of_vacuum_and_fock(grid65, vacuum):
    w = wigner_from_density(density_from_state(coherent_spec(0.0, 0.0), 30), grid65)
    np.testing.assert_allclose(w.samples, vacuum.samples, atol=1e-8)
    assert quadrature_mass(w) == pytest.approx(1.0, abs=1e-6)

    fock = density_from_state(StateSpec(kind="fock", fock_index=1), 30)
    w1 = wigner_from_density(fock, grid65)
    assert w1.value_at_origin().real == pytest.approx(-1.0 / np.pi, abs=1e-8)
    assert parity_value(fock) == pytest.approx(-1.0 / np.pi)


def test_wigner_of_cat_matches_closed_form(grid65):
    spec = StateSpec(kind="cat", centres=(PhaseVector(p=[0.0], q=[2.0]), PhaseVector(p=[0.0], q=[-2.0])))
    w = wigner_from_density(density_from_state(spec, 40), grid65)
    np.testing.assert_allclose(w.samples, build_state(spec, grid65).samples, atol=1e-7)


def test_displaced_trace_of_vacuum():
    rho = density_from_state(coherent_spec(0.0, 0.0), 20)
    xi = np.array([0.7, -1.1])
    expected = np.exp(-xi @ xi / 4.0) / (2 * np.pi)
    assert displaced_trace(rho, xi) == pytest.approx(expected, abs=1e-10)


def test_chord_from_density_passes_spot_check(grid65, coherent_q2):
    chi = chord_from_density(density_from_state(coherent_spec(0.0, 2.0), 40), grid65, seed=3)
    np.testing.assert_allclose(chi.samples, wigner_to_chord(coherent_q2).samples, atol=1e-8)


def test_small_grid_is_rejected():
    tiny = GridSpec.square(dims=33, half_width=3.0)
    with pytest.raises(AccuracyError):
        wigner_from_density(density_from_state(coherent_spec(0.0, 2.0), 30), tiny)


def test_exact_and_oracle_agree_on_damped_oscillator(damped, grid65, coherent_q2):
    rho_t = integrate_master(damped, density_from_state(coherent_spec(0.0, 2.0), 40), 1.0, dt=2e-3)
    oracle = wigner_from_density(rho_t, grid65)
    exact = evolve_wigner_exact(damped, coherent_q2, 1.0)
    np.testing.assert_allclose(oracle.samples, exact.samples, atol=1e-5)
