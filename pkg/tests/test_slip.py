import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoplab.analysis import apex_map
from hoplab.engine import EventKind, IntegratorConfig
from hoplab.errors import Fall, FixedPointError, SimulationFault
from hoplab.slip import (
    SlipParams,
    SlipState,
    SteppingPolicy,
    find_velocity_fixed_point,
    simulate_slip,
    slip_stance_derivative,
    slip_stride_map,
    stride_table_csv,
    trajectory_leg_forces,
)
from hoplab.template import ControllerGains, Phase, TemplateParams

P = SlipParams()
FOREAFT = SteppingPolicy(theta_td=0.1, theta_lo=0.15)
CONSERVATIVE = SteppingPolicy(theta_td=0.1, beta_s=0.0, k_st=0.0)


def vertical_equivalent(params, policy):
    # the same radial law on a vertical leg is the template hopper with stance gravity
    w = policy.omega(params)
    tp = TemplateParams(
        mass=params.mass,
        spring_const=policy.k_ss,
        damping_const=2 * policy.beta_s * w * params.mass,
        rest_length=params.rest_length,
        gravity=params.gravity,
        stance_gravity=True,
    )
    return tp, ControllerGains(vertical_gain=policy.k_st)


def apex_energy(z, ydot, params=P):
    return params.gravity * z + 0.5 * ydot * ydot


def test_policy_validation():
    with pytest.raises(ValueError):
        SteppingPolicy(theta_td=math.pi / 2)
    with pytest.raises(ValueError):
        SteppingPolicy(k_ss=0)
    with pytest.raises(ValueError):
        SteppingPolicy(beta_s=-1)
    with pytest.raises(ValueError):
        SlipParams(mass=0)


def test_stance_derivative_examples():
    unloaded = SlipState(Phase.STANCE, 0.0, 0.18, 0.0, 0.0, toe_y=0.0)
    assert slip_stance_derivative(unloaded, P, SteppingPolicy(k_st=0.0)) == (0.0, 0.0, 0.0, -9.81)
    compressed = SlipState(Phase.STANCE, 0.0, 0.17, 0.0, 0.0, toe_y=0.0)
    d = slip_stance_derivative(compressed, P, SteppingPolicy(k_st=0.0))
    assert d[2] == 0.0
    assert d[3] == pytest.approx(1300 / 6.173 * 0.01 - 9.81, rel=1e-12)
    # CoM straight above the toe while moving forward: no fore-aft force
    mid = SlipState(Phase.STANCE, 0.3, 0.16, 0.8, -0.2, toe_y=0.3)
    assert slip_stance_derivative(mid, P, FOREAFT)[2] == 0.0


def test_short_leg_is_a_fault():
    with pytest.raises(SimulationFault):
        slip_stance_derivative(SlipState(Phase.STANCE, 0.0, 0.01, 0.0, 0.0, toe_y=0.0), P, FOREAFT)


@given(st.floats(-0.1, 0.1), st.floats(0.05, 0.18), st.floats(-2, 2), st.floats(-2, 2))
def test_stance_force_is_radial(dy, z, vy, vz):
    d = slip_stance_derivative(SlipState(Phase.STANCE, dy, z, vy, vz, toe_y=0.0), P, FOREAFT)
    fy, fz = d[2], d[3] + P.gravity
    assert abs(fy * z - fz * dy) <= 1e-12 * (1 + abs(fy) + abs(fz))


def test_apex_below_touchdown_height_rejected():
    with pytest.raises(ValueError):
        slip_stride_map((0.17, 0.0), P, FOREAFT)


@pytest.mark.parametrize("a", [0.20, 0.22, 0.25, 0.30, 0.35])
def test_vertical_reduction_matches_template(a):
    pol = SteppingPolicy()
    z, vy = slip_stride_map((a, 0.0), P, pol)
    tp, g = vertical_equivalent(P, pol)
    assert vy == 0.0
    assert z == pytest.approx(apex_map(a, tp, g), abs=1e-8)


def test_conservative_stride_keeps_energy():
    start = (0.25, 0.2)
    z, vy = slip_stride_map(start, P, CONSERVATIVE)
    assert apex_energy(z, vy) == pytest.approx(apex_energy(*start), rel=1e-6)


@pytest.fixture(scope="module")
def conservative_run():
    return simulate_slip((0.25, 0.2), P, CONSERVATIVE, strides=1)


def test_flight_keeps_horizontal_velocity(conservative_run):
    tr = conservative_run
    flight = [s for s, ph in zip(tr.states, tr.phases) if ph == "flight"]
    assert flight
    vy0 = None
    for i, (s, ph) in enumerate(zip(tr.states, tr.phases)):
        if ph != "flight":
            vy0 = None
            continue
        if vy0 is None:
            vy0 = s[2]
        assert s[2] == vy0


def test_trajectory_forces_are_radial_samples(conservative_run):
    forces, lengths = trajectory_leg_forces(conservative_run)
    stance = [(f, l) for f, l, ph in zip(forces, lengths, conservative_run.phases) if ph == "stance"]
    assert stance
    assert all(l <= P.rest_length + 1e-9 for _, l in stance)
    flight = [f for f, ph in zip(forces, conservative_run.phases) if ph == "flight"]
    assert all(f == 0.0 for f in flight)


def test_touchdown_places_toe_ahead(conservative_run):
    td = conservative_run.events_of(EventKind.TOUCHDOWN)[0]
    i = conservative_run.t.index(td.t)
    toe = conservative_run.extras[i][0]
    assert toe == pytest.approx(td.state[0] + 0.18 * math.sin(0.1), abs=1e-15)
    assert td.state[1] == pytest.approx(0.18 * math.cos(0.1), abs=1e-9)
    head = conservative_run.to_csv().splitlines()[0]
    assert head == "t,y,z,ydot,zdot,phase,toe_y"


def test_mirror_symmetry():
    a = simulate_slip((0.25, 0.2), P, FOREAFT, strides=1)
    b = simulate_slip((0.25, -0.2), P, SteppingPolicy(theta_td=-0.1, theta_lo=-0.15), strides=1)
    assert len(a.t) == len(b.t)
    for sa, sb in zip(a.states, b.states):
        assert sb[0] == pytest.approx(-sa[0], abs=1e-12)
        assert sb[1] == pytest.approx(sa[1], abs=1e-12)
        assert sb[2] == pytest.approx(-sa[2], abs=1e-12)


def test_liftoff_without_apex_is_a_fall():
    # a stiff forward lean throws the body down the far side
    with pytest.raises(Fall):
        simulate_slip((0.19, 3.0), P, SteppingPolicy(theta_td=0.1, k_st=0.0), strides=3)


def test_vertical_fixed_point_has_zero_speed():
    fp = find_velocity_fixed_point(P, SteppingPolicy(k_st=8.0), (0.22, 0.0))
    assert fp.ydot == 0.0
    tp, g = vertical_equivalent(P, SteppingPolicy(k_st=8.0))
    assert abs(apex_map(fp.z, tp, g) - fp.z) < 1e-5


def test_linear_stub_fixed_point():
    fp = find_velocity_fixed_point(P, FOREAFT, (0.2, 0.0), map_fn=lambda a: (0.2, 0.5 * a[1] + 0.3))
    assert fp.ydot == pytest.approx(0.6, abs=2e-5)
    assert fp.slope == pytest.approx(0.5, abs=1e-9)
    assert fp.attracting


def test_newton_finds_foreaft_fixed_point_golden():
    # golden values frozen from the main build; the fixed point repels (slope > 1)
    fp = find_velocity_fixed_point(P, FOREAFT, (0.23, 0.17), method="newton")
    assert fp.z == pytest.approx(0.2005465818751386, abs=1e-7)
    assert fp.ydot == pytest.approx(0.15408993058848602, abs=1e-7)
    assert fp.slope == pytest.approx(23.83412155986503, rel=1e-4)
    assert not fp.attracting
    z, vy = slip_stride_map((fp.z, fp.ydot), P, FOREAFT)
    assert math.hypot(z - fp.z, vy - fp.ydot) < 1e-5


def test_iterate_failure_reports_history():
    with pytest.raises(FixedPointError) as exc:
        find_velocity_fixed_point(P, FOREAFT, (0.2, 0.0), map_fn=lambda a: (0.2, -a[1] + 1.0), max_iter=5)
    assert len(exc.value.history) == 6
    with pytest.raises(ValueError):
        find_velocity_fixed_point(P, FOREAFT, (0.2, 0.0), method="bogus", map_fn=lambda a: a)


def test_stride_table_format():
    text = stride_table_csv([(0.25, 0.1), (0.24, 0.11)])
    assert text.splitlines() == ["stride_index,z_apex,ydot_apex", "0,0.25,0.1", "1,0.24,0.11"]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.19, 0.3))
def test_vertical_run_has_no_drift(a):
    tr = simulate_slip((a, 0.0), P, SteppingPolicy(), IntegratorConfig(), strides=2)
    assert all(s[0] == 0.0 and s[2] == 0.0 for s in tr.states)
