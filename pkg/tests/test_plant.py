import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from funnelctl.plant import (
    ActuatorNonlinearity,
    FaultProfile,
    Plant,
    PlantError,
    effective_action,
    nonlinearity_eval,
    plant_rhs,
    reliability_jet,
    reliability_value,
)
from funnelctl.scenario import boeing737

from .conftest import fd_derivative

PROFILES = [
    FaultProfile.constant(0.3),
    FaultProfile.erfc_decay([(0.25, 3.0, 1.0), (0.25, 6.0, 100.0)]),
    FaultProfile.erfc_cutoff(7.0, 20.0),
    FaultProfile.erf_onset([(0.25, 6.0, 100.0)]),
    FaultProfile.lorentzian(),
    FaultProfile.product([FaultProfile.lorentzian(1.0, 0.5), FaultProfile.erfc_cutoff(2.0, 1.0)]),
]


def test_boeing_rudder_profile_values():
    l2 = PROFILES[1]
    assert np.isclose(l2.value(0.0), 0.25 * special.erfc(-3) + 0.25 * special.erfc(-600))
    assert np.isclose(l2.value(4.5), 0.25 * special.erfc(1.5) + 0.5, atol=1e-12)
    assert l2.value(10.0) < 1e-8
    assert np.isclose(PROFILES[2].value(7.0), 0.5)
    assert np.isclose(PROFILES[3].value(6.0), 0.25)
    assert np.isclose(PROFILES[4].value(2.0), 0.2)


@pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
@pytest.mark.parametrize("t", [-0.3, 0.8, 2.9, 5.99, 6.004, 7.02])
def test_profile_jet_matches_finite_differences(prof, t):
    j = prof.jet(t, 2)
    assert np.isclose(j.value, prof.value(t), rtol=1e-12, atol=1e-14)
    h = 1e-6 if prof.kind in ("erfc_decay", "erf_onset") else 1e-5
    d1 = fd_derivative(prof.value, t, h)
    d2 = fd_derivative(lambda s: prof.jet(s, 1).coeffs[1], t, h)
    scale1 = max(1.0, abs(j.coeffs[1]))
    scale2 = max(1.0, abs(j.coeffs[2]))
    assert abs(j.coeffs[1] - d1) <= 1e-4 * scale1
    assert abs(j.coeffs[2] - d2) <= 1e-4 * scale2


@pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
def test_profile_roundtrip(prof):
    again = FaultProfile.from_dict(prof.to_dict())
    for t in (0.0, 3.3, 6.5):
        assert again.value(t) == prof.value(t)


@given(st.floats(-50, 50))
def test_profiles_stay_in_unit_interval(t):
    for prof in PROFILES:
        assert -1e-15 <= prof.value(t) <= 1.0 + 1e-15


def test_profile_validation():
    with pytest.raises(PlantError):
        FaultProfile.constant(1.5)
    with pytest.raises(PlantError):
        FaultProfile.erfc_decay([(0.4, 0.0, 1.0), (0.4, 1.0, 1.0)])
    with pytest.raises(PlantError):
        FaultProfile("bogus")


def test_nonlinearities():
    sat = ActuatorNonlinearity("saturation", threshold=1.0, bias=0.1)
    assert sat(0.0, 3.0) == pytest.approx(1.1)
    assert sat(0.0, -0.5) == pytest.approx(-0.4)
    assert sat.bound() == pytest.approx(1.1)
    assert ActuatorNonlinearity("stuck", value=0.2)(5.0, 100.0) == 0.2
    assert ActuatorNonlinearity("bias", bias=-0.3)(0.0, 1.0) == -0.3
    assert ActuatorNonlinearity()(0.0, 7.0) == 0.0
    gate = FaultProfile.erf_onset([(0.25, 6.0, 100.0)])
    g = ActuatorNonlinearity("gated_saturation", threshold=1.0, gate=gate)
    assert abs(g(0.0, 5.0)) < 1e-12
    assert g(10.0, 5.0) == pytest.approx(0.5)
    assert g.saturating(8.0, 1.2) and not g.saturating(8.0, 0.9) and not g.saturating(1.0, 3.0)
    with pytest.raises(PlantError):
        ActuatorNonlinearity("gated_saturation")
    with pytest.raises(PlantError):
        ActuatorNonlinearity("saturation", threshold=0.0)


@given(st.floats(-10, 10), st.floats(-100, 100))
def test_nonlinearity_bounded(t, u):
    gate = FaultProfile.erf_onset([(0.25, 6.0, 100.0)])
    for g in (ActuatorNonlinearity("saturation", 2.0, 0.5),
              ActuatorNonlinearity("gated_saturation", 1.0, gate=gate)):
        assert abs(g(t, u)) <= g.bound() + 1e-12


def test_boeing_effective_action_after_faults():
    plant = boeing737().plant
    u = np.array([0.3, 4.0, -0.2, 2.0])
    ueff = effective_action(plant, 9.0, u)
    # rudder: l2 ~ 0 and gate 1/2 -> 0.5 sat(u2); aileron 4 lost
    assert ueff[1] == pytest.approx(0.5, abs=1e-6)
    assert abs(ueff[3]) < 1e-12
    assert ueff[0] == pytest.approx(0.3) and ueff[2] == pytest.approx(-0.2)
    f = nonlinearity_eval(plant, 9.0, np.zeros(5), u)
    assert np.allclose(f, plant.B[:, 1] * 0.5, atol=1e-6)


def test_plant_rhs_linear_part():
    pl = Plant([[0, 1], [-2, -3]], [[0], [1]], [[1, 0]])
    assert np.allclose(plant_rhs(pl, 0.0, np.array([1.0, 2.0]), np.array([0.5])), [2, -7.5])
    assert np.allclose(nonlinearity_eval(pl, 0.0, np.zeros(2), np.array([9.0])), 0)
    with pytest.raises(PlantError):
        plant_rhs(pl, 0.0, np.zeros(3), np.zeros(1))


def test_plant_validation():
    with pytest.raises(PlantError):
        Plant(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(PlantError):
        Plant(np.eye(2), np.ones((2, 1)), np.ones((2, 2)))  # m < p
    with pytest.raises(PlantError):
        Plant(np.eye(2), np.ones((2, 2)), np.ones((1, 2)), reliability=[FaultProfile.constant()])
    with pytest.raises(PlantError):
        Plant([[np.nan]], [[1.0]], [[1.0]])


def test_reliability_jet_is_diagonal():
    plant = boeing737().plant
    J = reliability_jet(plant, 6.0, 2)
    assert J.coeffs.shape == (3, 4, 4)
    assert np.allclose(J.value, reliability_value(plant, 6.0))
    off = J.coeffs.copy()
    off[:, range(4), range(4)] = 0.0
    assert np.all(off == 0.0)
    # slope-100 fault at t=6: l2' = -0.25 * 100 * 2/sqrt(pi)
    assert J.coeffs[1, 1, 1] == pytest.approx(-0.25 * 100 * 2 / np.sqrt(np.pi) - 0.25 * 2 / np.sqrt(np.pi) * np.exp(-9),
                                              rel=1e-9)


def test_callable_reliability():
    from funnelctl.numkit import Jet

    def L(t, order):
        c = np.zeros((order + 1, 1, 1))
        c[0, 0, 0] = 1 / (1 + t * t)
        if order >= 1:
            c[1, 0, 0] = -2 * t / (1 + t * t) ** 2
        return Jet(c)

    pl = Plant([[0.0]], [[1.0]], [[1.0]], reliability=L)
    assert not pl.diagonal_reliability
    assert np.allclose(reliability_value(pl, 1.0), [[0.5]])
    assert np.allclose(effective_action(pl, 1.0, np.array([2.0])), [1.0])
