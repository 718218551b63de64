import numpy as np
import pytest

from simulator.dynamics import (
    LindbladChannel,
    OpenSystem,
    QuadraticHamiltonian,
    QuarticHamiltonian,
    thermal_channels,
)
from simulator.smallchord import BUNDLE_CACHE
from simulator.states import StateSpec, build_state
from simulator.symplectic import GridSpec, PhaseVector


@pytest.fixture(autouse=True)
def _fresh_bundle_cache():
    BUNDLE_CACHE.clear()
    yield
    BUNDLE_CACHE.clear()


@pytest.fixture
def grid65():
    return GridSpec.square(n_modes=1, dims=65, half_width=8.0, hbar=1.0)


@pytest.fixture
def damped():
    """H = (p² + q²)/2，通道 √0.2·â（γ = 0.1）"""
    return OpenSystem(QuadraticHamiltonian.harmonic(), tuple(thermal_channels(0.2, 0.0)), hbar=1.0)


@pytest.fixture
def unitary():
    return OpenSystem(QuadraticHamiltonian.harmonic(), (), hbar=1.0)


@pytest.fixture
def dephasing():
    return OpenSystem(QuadraticHamiltonian.harmonic(), (LindbladChannel(lp=[0.0, 1.0], lpp=[0.0, 0.0]),), hbar=1.0)


@pytest.fixture
def quartic_damped():
    return OpenSystem(QuarticHamiltonian(kappa=0.0), tuple(thermal_channels(0.2, 0.0)), hbar=1.0)


def coherent_spec(p, q):
    return StateSpec(kind="coherent", centres=(PhaseVector(p=[p], q=[q]),))


@pytest.fixture
def coherent_q2(grid65):
    """coherent state 於 (p, q) = (0, 2)"""
    return build_state(coherent_spec(0.0, 2.0), grid65)


@pytest.fixture
def vacuum(grid65):
    return build_state(coherent_spec(0.0, 0.0), grid65)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
