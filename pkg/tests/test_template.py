import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoplab.engine import IntegratorConfig, TemplateModel, step
from hoplab.template import (
    ControllerGains,
    HybridState,
    Phase,
    PhaseCoords,
    TemplateParams,
    ad_torque,
    closed_loop_stance,
    flight_derivative,
    from_phase_coords,
    phase_angle,
    stance_derivative,
    stance_energy,
    to_phase_coords,
)

T1 = TemplateParams()
finite = st.floats(-10, 10, allow_nan=False)


def test_table1_defaults():
    assert (T1.mass, T1.spring_const, T1.damping_const, T1.rest_length, T1.gravity) == (6.173, 1500.0, 3.2, 0.18, 9.81)
    assert T1.stance_gravity is False
    assert T1.natural_freq == pytest.approx(15.5882546, abs=1e-7)
    assert T1.damping_ratio == pytest.approx(0.01662747, abs=1e-8)


@pytest.mark.parametrize(
    "kw", [{"mass": 0}, {"spring_const": -1}, {"damping_const": -0.1}, {"rest_length": 0}, {"gravity": 0}]
)
def test_params_validated(kw):
    with pytest.raises(ValueError):
        TemplateParams(**kw)


def test_gains_validated():
    with pytest.raises(ValueError):
        ControllerGains(vertical_gain=-1)
    with pytest.raises(ValueError):
        ControllerGains(software_spring=0)
    with pytest.raises(ValueError):
        ControllerGains(software_damping=-0.1)


def test_flight_derivative():
    assert flight_derivative(HybridState(Phase.FLIGHT, 0.30, 0.0), T1) == (0.0, -9.81)
    assert flight_derivative(HybridState(Phase.FLIGHT, 0.28, 1.2), T1) == (1.2, -9.81)


def test_flight_derivative_without_gravity_passes_velocity():
    # gravity must be positive, so the zero-gravity case is checked on the field itself
    p = TemplateParams(gravity=1e-300)
    assert flight_derivative(HybridState(Phase.FLIGHT, 0.5, -0.7), p) == pytest.approx((-0.7, 0.0))


def test_stance_derivative_examples():
    assert stance_derivative(HybridState(Phase.STANCE, 0.18, 0.0), T1) == (0.0, 0.0)
    chidot, acc = stance_derivative(HybridState(Phase.STANCE, 0.17, 0.0), T1)
    assert chidot == 0.0
    assert acc == pytest.approx(1500 / 6.173 * 0.01, rel=1e-12)
    assert acc == pytest.approx(2.4299368, abs=1e-7)
    assert stance_derivative(HybridState(Phase.STANCE, 0.18, 1.0), T1)[1] == pytest.approx(-3.2 / 6.173, rel=1e-12)


def test_stance_gravity_flag():
    p = TemplateParams(stance_gravity=True)
    assert stance_derivative(HybridState(Phase.STANCE, 0.18, 0.0), p) == (0.0, -9.81)
    assert closed_loop_stance(HybridState(Phase.STANCE, 0.18, 0.0), p, ControllerGains(vertical_gain=0.0))[1] == -9.81


def test_phase_angle_examples():
    assert phase_angle(PhaseCoords(0.0, 1.0)) == 0.0
    assert phase_angle(PhaseCoords(1.0, 0.0)) == pytest.approx(math.pi / 2)
    assert phase_angle(PhaseCoords(0.1, 0.1)) == pytest.approx(math.pi / 4)
    origin = PhaseCoords(0.0, 0.0)
    assert phase_angle(origin) == 0.0 and origin.degenerate


def test_ad_torque_examples():
    assert ad_torque(PhaseCoords(0.0, 1.0), ControllerGains(vertical_gain=5.5)) == 5.5
    assert ad_torque(PhaseCoords(1.0, 0.0), ControllerGains(vertical_gain=7.5)) == pytest.approx(0.0, abs=1e-15)
    assert ad_torque(PhaseCoords(0.1, -0.1), ControllerGains(vertical_gain=5.5)) == pytest.approx(-3.8890873, abs=1e-7)
    assert ad_torque(PhaseCoords(0.0, 0.0), ControllerGains(vertical_gain=5.5)) == 5.5


def test_closed_loop_examples():
    g = ControllerGains(vertical_gain=5.5)
    assert closed_loop_stance(HybridState(Phase.STANCE, 0.18, 0.0), T1, ControllerGains()) == (0.0, 0.0)
    w, b = T1.natural_freq, T1.damping_ratio
    s = from_phase_coords(PhaseCoords(0.0, 0.05), T1)
    x1dot, acc = closed_loop_stance(s, T1, g)
    assert x1dot == pytest.approx(w * 0.05)
    assert acc / w == pytest.approx(-2 * b * w * 0.05 + 5.5 / w, rel=1e-12)


def test_closed_loop_matches_stance_derivative_with_ad_input():
    g = ControllerGains(vertical_gain=5.5)
    s = HybridState(Phase.STANCE, 0.15, -0.4)
    tau = ad_torque(to_phase_coords(s, T1), g)
    a = closed_loop_stance(s, T1, g)
    b = stance_derivative(s, T1, tau)
    assert a == pytest.approx(b, rel=1e-12)


def test_conservative_oscillator_keeps_radius():
    p = TemplateParams(damping_const=0.0)
    fld = TemplateModel(p, ControllerGains(), IntegratorConfig()).field(Phase.STANCE)
    y = (0.15, -0.3)
    r0 = math.hypot(y[0] - p.rest_length, y[1] / p.natural_freq)
    for _ in range(2000):
        y = step(fld, 0.0, y, 1e-4)
    assert math.hypot(y[0] - p.rest_length, y[1] / p.natural_freq) == pytest.approx(r0, rel=1e-10)


@given(
    st.floats(0.1, 100),
    st.floats(1, 1e5),
    st.floats(0, 100),
)
def test_derived_quantities_exact(mass, k, c):
    p = TemplateParams(mass=mass, spring_const=k, damping_const=c)
    assert p.natural_freq == math.sqrt(k / mass)
    assert p.damping_ratio == c / (2 * mass * math.sqrt(k / mass))


@given(finite, finite, st.floats(0, 50))
def test_ad_torque_bounded_and_injects_energy(x1, x2, kt):
    g = ControllerGains(vertical_gain=kt)
    tau = ad_torque(PhaseCoords(x1, x2), g)
    assert abs(tau) <= kt * (1 + 1e-15)
    assert tau * x2 >= 0.0


@given(finite, finite)
def test_angle_range(x1, x2):
    a = phase_angle(PhaseCoords(x1, x2))
    assert -math.pi < a <= math.pi


@given(st.floats(-1, 1), st.floats(-5, 5))
def test_coordinate_round_trip(chi, chidot):
    s = HybridState(Phase.STANCE, chi, chidot)
    back = from_phase_coords(to_phase_coords(s, T1), T1)
    assert back.chi == pytest.approx(chi, abs=4e-16 + 1e-15 * abs(chi))
    assert back.chidot == pytest.approx(chidot, rel=1e-15, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.18), st.floats(-2, 2), st.floats(0.5, 20))
def test_damped_stance_energy_non_increasing(chi, chidot, c):
    p = TemplateParams(damping_const=c)
    fld = TemplateModel(p, ControllerGains(), IntegratorConfig()).field(Phase.STANCE)
    y = (chi, chidot)
    e = stance_energy(*y, p)
    for _ in range(300):
        y = step(fld, 0.0, y, 1e-4)
        e1 = stance_energy(*y, p)
        assert e1 <= e * (1 + 1e-12) + 1e-15
        e = e1
