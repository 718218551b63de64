"""Desk-scale comparisons on the default 129x129 grid; run with `pytest -m slow`."""
import numpy as np
import pytest

from oracle.fock import MasterEquation, density_from_state, density_purity, integrate_master, wigner_from_density
from simulator.dynamics import OpenSystem, QuarticHamiltonian, thermal_channels
from simulator.quadratic_exact import evolve_wigner_exact
from simulator.smallchord import (
    IterationPolicy,
    decoherence_time,
    evolve_chord_smallchord,
    evolve_iterated,
    evolve_wigner_smallchord,
)
from simulator.states import StateSpec, build_state
from simulator.symplectic import GridSpec, PhaseVector, hermiticity_defect, purity, quadrature_mass

from tests.conftest import coherent_spec

pytestmark = pytest.mark.slow


@pytest.fixture
def grid129():
    return GridSpec.square(n_modes=1, dims=129, half_width=8.0, hbar=1.0)


def _oracle_wigners(system, spec, times, grid, dim=80, dt=1e-3):
    equation = MasterEquation(system, dim)
    rho = density_from_state(spec, dim, system.hbar)
    elapsed = 0.0
    out = []
    for t in times:
        rho = integrate_master(system, rho, t - elapsed, dt=dt, equation=equation)
        elapsed = t
        out.append((rho, wigner_from_density(rho, grid)))
    return out


def test_exact_matches_oracle_on_damped_oscillator(damped, grid129):
    spec = coherent_spec(0.0, 2.0)
    w0 = build_state(spec, grid129)
    times = [0.5, 1.0, 2.0]
    for t, (_, oracle) in zip(times, _oracle_wigners(damped, spec, times, grid129)):
        exact = evolve_wigner_exact(damped, w0, t)
        assert np.max(np.abs(exact.real_values - oracle.real_values)) <= 1e-3


def test_smallchord_matches_exact_for_quadratic(damped, grid129):
    w0 = build_state(coherent_spec(0.0, 2.0), grid129)
    exact = evolve_wigner_exact(damped, w0, 1.0)
    approx = evolve_wigner_smallchord(damped, w0, 1.0)
    assert np.max(np.abs(exact.samples - approx.samples)) <= 1e-6


def test_cat_negativity_fades(damped, grid129):
    spec = StateSpec(kind="cat", centres=(PhaseVector(p=[0.0], q=[2.0]), PhaseVector(p=[0.0], q=[-2.0])))
    w0 = build_state(spec, grid129)
    t_dec = decoherence_time(damped, spec.centroid(), 10.0).t_dec
    times = [0.0, 1.0, 2.0, 3.0, 4.0, 2.0 * t_dec]
    minima = [float(np.min(evolve_wigner_exact(damped, w0, t).real_values)) for t in times]
    assert minima[0] < -0.16
    assert np.all(np.diff(minima) >= -1e-3)
    assert minima[-1] >= -1e-2

    _, oracle = _oracle_wigners(damped, spec, [1.0], grid129)[0]
    assert abs(float(np.min(oracle.real_values)) - minima[1]) <= 5e-3


def test_dephasing_purity_decays_consistently(dephasing, grid129):
    spec = coherent_spec(0.0, 1.0)
    w0 = build_state(spec, grid129)
    times = [0.5, 1.0]
    exact_purities = [purity(w0)] + [purity(evolve_wigner_exact(dephasing, w0, t)) for t in times]
    assert np.all(np.diff(exact_purities) <= 1e-12)
    for t, (rho, _) in zip(times, _oracle_wigners(dephasing, spec, times, grid129)):
        assert abs(density_purity(rho) - exact_purities[times.index(t) + 1]) <= 1e-3


def test_unitary_purity_is_constant(unitary, grid129):
    w0 = build_state(coherent_spec(0.0, 2.0), grid129)
    purities = [purity(evolve_wigner_exact(unitary, w0, t)) for t in (0.5, 1.0, 2.0)]
    assert max(purities) - min(purities) <= 1e-6


def test_quartic_smallchord_tracks_oracle(grid129):
    system = OpenSystem(QuarticHamiltonian(kappa=0.0), tuple(thermal_channels(0.2, 0.0)), hbar=1.0)
    spec = coherent_spec(0.0, 1.0)
    w0 = build_state(spec, grid129)
    approx = evolve_wigner_smallchord(system, w0, 0.25, policy=IterationPolicy(max_step=0.25))
    _, oracle = _oracle_wigners(system, spec, [0.25], grid129)[0]
    diff = approx.real_values - oracle.real_values
    assert np.sqrt(np.sum(diff**2) * approx.cell_volume) <= 5e-2
    assert abs(quadrature_mass(approx) - 1.0) <= 1e-9
    assert np.max(np.abs(approx.samples.imag)) <= 1e-9
    chi = evolve_chord_smallchord(system, w0, 0.25, policy=IterationPolicy(max_step=0.25))
    assert hermiticity_defect(chi) <= 1e-9


def test_quartic_iterated_evolution_stays_positive(quartic_damped, grid65):
    w0 = build_state(coherent_spec(0.0, 1.0), grid65)
    w = evolve_iterated(quartic_damped, w0, 2.0, policy=IterationPolicy(max_step=0.5))
    assert float(np.min(w.real_values)) >= -1e-2
    assert quadrature_mass(w) == pytest.approx(1.0, abs=1e-5)
