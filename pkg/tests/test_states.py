import numpy as np
import pytest

from simulator.errors import AccuracyError, ConfigError
from simulator.states import StateSpec, build_state, mixture
from simulator.symplectic import PhaseVector, purity, quadrature_mass

from tests.conftest import coherent_spec


def test_coherent_peak_value(vacuum):
    assert vacuum.value_at_origin().real == pytest.approx(1.0 / np.pi)


def test_cat_has_negative_fringes_and_unit_mass(grid65):
    spec = StateSpec(kind="cat", centres=(PhaseVector(p=[0.0], q=[2.0]), PhaseVector(p=[0.0], q=[-2.0])))
    w = build_state(spec, grid65)
    # e^{−p²} cos 4p 的第一個負谷，約 −0.175
    assert -0.18 < np.min(w.real_values) < -0.16
    assert quadrature_mass(w) == pytest.approx(1.0, abs=1e-10)
    assert purity(w) == pytest.approx(1.0, abs=1e-8)


def test_odd_cat_is_negative_at_origin(grid65):
    centres = (PhaseVector(p=[0.0], q=[2.0]), PhaseVector(p=[0.0], q=[-2.0]))
    w = build_state(StateSpec(kind="cat", centres=centres, phase=np.pi), grid65)
    assert w.value_at_origin().real == pytest.approx(-1.0 / np.pi, abs=1e-12)
    assert quadrature_mass(w) == pytest.approx(1.0, abs=1e-10)


def test_fock_states(grid65, vacuum):
    w0 = build_state(StateSpec(kind="fock", fock_index=0), grid65)
    np.testing.assert_allclose(w0.samples, vacuum.samples, atol=1e-14)
    w1 = build_state(StateSpec(kind="fock", fock_index=1), grid65)
    assert w1.value_at_origin().real == pytest.approx(-1.0 / np.pi)
    assert quadrature_mass(w1) == pytest.approx(1.0, abs=1e-10)


def test_grid_too_small_for_state(grid65):
    with pytest.raises(AccuracyError, match="網格太小"):
        build_state(coherent_spec(0.0, 7.0), grid65)


def test_invalid_specs():
    with pytest.raises(ConfigError):
        StateSpec(kind="cat", centres=(PhaseVector(p=[0.0], q=[1.0]), PhaseVector(p=[0.0], q=[1.0])))
    with pytest.raises(ConfigError):
        StateSpec(kind="squeezed", centres=(PhaseVector.zeros(),))
    with pytest.raises(ConfigError):
        StateSpec(kind="fock", fock_index=-1)


def test_spec_dict_round_trip():
    spec = StateSpec(kind="cat", centres=(PhaseVector(p=[1.0], q=[0.0]), PhaseVector(p=[-1.0], q=[0.0])), phase=0.5)
    again = StateSpec.from_dict(spec.to_dict())
    assert again.kind == "cat"
    assert again.phase == pytest.approx(0.5)
    np.testing.assert_allclose(again.centroid(), [0.0, 0.0])


def test_mixture_purity(grid65):
    upper = build_state(coherent_spec(0.0, 3.0), grid65)
    lower = build_state(coherent_spec(0.0, -3.0), grid65)
    mixed = mixture([upper, lower], [0.5, 0.5])
    assert purity(mixed) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ConfigError):
        mixture([upper, lower], [0.7, 0.7])
