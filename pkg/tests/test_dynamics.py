import numpy as np
import pytest

from simulator.dynamics import (
    DoublePhasePoint,
    LindbladChannel,
    OpenSystem,
    PendulumHamiltonian,
    QuadraticHamiltonian,
    QuarticHamiltonian,
    Trajectory,
    centre_flow,
    chord_flow_quadratic,
    chord_quench_factor,
    decoherence_functional,
    dissipation_coefficient,
    double_flow,
    double_hamiltonian,
    double_lindblad,
    environment_matrix,
    hamiltonian_from_dict,
    thermal_channels,
    unitary_double_hamiltonian,
)
from simulator.errors import ConfigError, DimensionError
from simulator.quadratic_exact import decoherence_matrix


def test_annihilation_channel_gamma():
    channel = LindbladChannel.annihilation(strength=np.sqrt(0.2))
    assert dissipation_coefficient([channel]) == pytest.approx(0.1)
    assert dissipation_coefficient([LindbladChannel.creation(strength=np.sqrt(0.2))]) == pytest.approx(-0.1)


@pytest.mark.parametrize("nu", [0.0, 0.5, 2.0])
def test_thermal_channels_give_half_a(nu):
    channels = thermal_channels(0.2, nu)
    assert dissipation_coefficient(channels) == pytest.approx(0.1)
    np.testing.assert_allclose(environment_matrix(channels), 0.1 * (2 * nu + 1) * np.eye(2), atol=1e-14)


def test_self_adjoint_channel_does_not_contract(dephasing):
    assert dephasing.gamma == 0.0
    assert not dephasing.is_unitary
    assert dephasing.channels[0].is_self_adjoint


def test_channel_validation():
    with pytest.raises(ConfigError):
        LindbladChannel(lp=[0.0, 0.0], lpp=[0.0, 0.0])
    with pytest.raises(DimensionError):
        LindbladChannel(lp=[0.0, 1.0], lpp=[0.0])
    with pytest.raises(DimensionError):
        OpenSystem(QuadraticHamiltonian.harmonic(), (LindbladChannel.annihilation(n_modes=2),))


def test_hamiltonian_from_dict():
    h = hamiltonian_from_dict({"kind": "quadratic", "B": [[1.0, 0.0], [0.0, 2.0]], "b": [0.1, 0.0]})
    assert h.is_quadratic and h.is_polynomial
    assert hamiltonian_from_dict({"kind": "quartic", "kappa": 0.5}).kind == "quartic"
    assert not hamiltonian_from_dict({"kind": "pendulum"}).is_polynomial
    with pytest.raises(ConfigError):
        hamiltonian_from_dict({"kind": "morse"})
    with pytest.raises(ConfigError):
        QuadraticHamiltonian([[1.0, 0.3], [0.0, 1.0]])


@pytest.mark.parametrize(
    "hamiltonian",
    [
        QuadraticHamiltonian([[1.0, 0.2], [0.2, 0.8]], [0.3, -0.2]),
        QuarticHamiltonian(kappa=-0.4),
        PendulumHamiltonian(),
    ],
    ids=["quadratic", "quartic", "pendulum"],
)
def test_derivatives_match_finite_differences(hamiltonian, rng):
    eps = 1e-5
    for x in rng.uniform(-3.0, 3.0, size=(100, 2)):
        numeric = [(hamiltonian.value(x + eps * e) - hamiltonian.value(x - eps * e)) / (2 * eps) for e in np.eye(2)]
        np.testing.assert_allclose(hamiltonian.gradient(x), numeric, rtol=1e-6, atol=1e-8)
        numeric_hessian = np.array(
            [(hamiltonian.gradient(x + eps * e) - hamiltonian.gradient(x - eps * e)) / (2 * eps) for e in np.eye(2)]
        )
        np.testing.assert_allclose(hamiltonian.hessian(x), numeric_hessian, rtol=1e-5, atol=1e-7)


def test_unitary_centre_flow_rotates(unitary):
    traj = centre_flow(unitary, [0.0, 2.0], np.pi / 2)
    assert traj.final().allclose([-2.0, 0.0], atol=1e-9)
    back = centre_flow(unitary, traj.final(), -np.pi / 2)
    assert back.times[-1] < back.times[0]
    assert back.final().allclose([0.0, 2.0], atol=1e-9)


def test_damped_centre_flow_contracts(damped):
    traj = centre_flow(damped, [0.0, 2.0], 3.0)
    radii = np.linalg.norm(traj.centres(), axis=1)
    np.testing.assert_allclose(radii, 2.0 * np.exp(-0.1 * traj.times), rtol=1e-9)
    frame = traj.to_frame()
    assert list(frame.columns) == ["t", "p", "q"]


def test_trajectory_times_must_be_monotone():
    with pytest.raises(ConfigError):
        Trajectory(times=[0.0, 0.2, 0.1], points=np.zeros((3, 2)))


def test_double_flow_without_chord_is_centre_flow(damped):
    x0 = [0.3, 1.1]
    double = double_flow(damped, DoublePhasePoint.from_chord(x0, [0.0, 0.0]), 1.0)
    centre = centre_flow(damped, x0, 1.0)
    np.testing.assert_allclose(double.centres(), centre.points, atol=1e-12)
    np.testing.assert_allclose(double.chords(), 0.0, atol=1e-15)


def test_quadratic_chord_flow_matches_double_flow(damped):
    xi0 = np.array([0.4, -0.7])
    traj = double_flow(damped, DoublePhasePoint.from_chord([0.5, 1.0], xi0), 1.5)
    expected = chord_flow_quadratic(damped, xi0, 1.5)
    np.testing.assert_allclose(traj.chords()[-1], expected.as_array(), atol=1e-9)


def test_double_hamiltonian_is_conserved(quartic_damped):
    X0 = DoublePhasePoint.from_chord([0.2, 1.0], [0.3, -0.2])
    traj = double_flow(quartic_damped, X0, 2.0)
    values = double_hamiltonian(quartic_damped, traj.points)
    np.testing.assert_allclose(values, values[0], atol=1e-8)


def test_harmonic_double_hamiltonian_is_centre_dot_chord(damped):
    x, xi = np.array([0.7, -1.2]), np.array([0.4, 0.9])
    X = DoublePhasePoint.from_chord(x, xi)
    assert unitary_double_hamiltonian(damped, X) == pytest.approx(x @ xi)
    y = X.y.as_array()
    assert double_hamiltonian(damped, X) == pytest.approx(x @ xi - 0.1 * (x @ y))


def test_decoherence_functional_matches_quadratic_integral(damped):
    xi0 = np.array([1.0, 0.5])
    traj = double_flow(damped, DoublePhasePoint.from_chord([0.0, 0.0], xi0), 1.0)
    d = decoherence_functional(damped, traj)
    assert d[0] == 0.0
    assert np.all(np.diff(d) >= 0)
    expected = xi0 @ decoherence_matrix(damped, 1.0, "forward") @ xi0
    assert d[-1] == pytest.approx(expected, rel=1e-5)
    quench = chord_quench_factor(damped, traj)
    assert quench[0] == 1.0
    assert quench[-1] == pytest.approx(np.exp(-expected / 2.0), rel=1e-5)


def test_double_lindblad_is_linear_in_chord(damped):
    X = DoublePhasePoint.from_chord([1.0, -1.0], [0.2, 0.6])
    values = double_lindblad(damped, X)
    np.testing.assert_allclose(values, [damped.channels[0].value(X.chord)], atol=1e-15)


def test_unitary_functional_is_zero(unitary):
    traj = double_flow(unitary, DoublePhasePoint.from_chord([0.0, 1.0], [1.0, 1.0]), 0.5)
    np.testing.assert_array_equal(decoherence_functional(unitary, traj), 0.0)


def test_free_particle_position_channel_leaves_position_chords_untouched():
    system = OpenSystem(QuadraticHamiltonian([[1.0, 0.0], [0.0, 0.0]]), (LindbladChannel(lp=[1.0, 0.0], lpp=[0.0, 0.0]),))
    traj = double_flow(system, DoublePhasePoint.from_chord([0.3, 1.0], [0.0, 0.7]), 10.0)
    d = decoherence_functional(system, traj)
    assert np.max(np.abs(d)) <= 1e-12
