import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoplab.engine import (
    EventKind,
    IntegratorConfig,
    TemplateModel,
    Trajectory,
    fmt,
    locate_event,
    simulate,
    step,
)
from hoplab.errors import BracketError, IntegrationFault, SimulationFault
from hoplab.template import ControllerGains, HybridState, Phase, TemplateParams, stance_energy

T1 = TemplateParams()
CONSERVATIVE = TemplateParams(damping_const=0.0)
NO_GAIN = ControllerGains(vertical_gain=0.0)


def ballistic(t, y):
    return (y[1], -9.81)


def test_step_is_exact_on_ballistic_arc():
    y = step(ballistic, 0.0, (0.3, 0.0), 0.01)
    assert y[1] == pytest.approx(-0.0981, abs=1e-15)
    assert y[0] == pytest.approx(0.3 - 0.5 * 9.81 * 1e-4, abs=1e-15)
    assert y[0] == pytest.approx(0.29950950, abs=1e-8)


def test_step_zero_field_and_zero_step():
    assert step(lambda t, y: (0.0, 0.0), 0.0, (1.0, 2.0), 0.1) == (1.0, 2.0)
    assert step(ballistic, 0.0, (1.0, 2.0), 0.0) == (1.0, 2.0)
    # generic (non 2-D) path
    assert step(lambda t, y: (0.0, 0.0, 0.0), 0.0, (1.0, 2.0, 3.0), 0.1) == (1.0, 2.0, 3.0)


def test_non_finite_field_is_an_integration_fault():
    p = TemplateParams()
    cfg = IntegratorConfig(max_time=0.01)
    model = TemplateModel(p, NO_GAIN, cfg)
    model._fields[Phase.FLIGHT] = lambda t, y: (math.nan, 0.0)
    from hoplab.engine import integrate

    with pytest.raises(IntegrationFault) as exc:
        integrate(model, Phase.FLIGHT, 0.0, (0.3, 0.0), cfg)
    assert "t=" in str(exc.value)


def test_locate_event_linear_guard():
    t, y = locate_event(lambda t, y: (1.0,), (0.4, (0.0,)), (0.6, (0.0,)), lambda t, y: t - 0.5, 1e-9)
    assert t == pytest.approx(0.5, abs=1e-9)


def test_locate_event_ballistic_touchdown():
    # apex at 0.297 m, 0.2 s bracket
    y0 = (0.297, 0.0)
    y1 = step(ballistic, 0.0, y0, 0.2)
    t, y = locate_event(ballistic, (0.0, y0), (0.2, y1), lambda t, y: y[0] - 0.18, 1e-9)
    assert abs(y[0] - 0.18) <= 1e-9
    assert t == pytest.approx(math.sqrt(2 * 0.117 / 9.81), abs=1e-9)


def test_locate_event_returns_start_when_already_on_guard():
    start = (0.0, (0.18 + 1e-12, -1.0))
    end = (0.1, step(ballistic, 0.0, start[1], 0.1))
    assert locate_event(ballistic, start, end, lambda t, y: y[0] - 0.18, 1e-9) == start


def test_locate_event_without_sign_change():
    with pytest.raises(BracketError):
        locate_event(ballistic, (0.0, (1.0, 0.0)), (0.1, (0.9, -1.0)), lambda t, y: y[0] - 0.18, 1e-9)


@pytest.mark.parametrize("kw", [{"step_size": 0}, {"event_tol": 0}, {"vel_tol": -1}, {"max_time": 0}, {"max_hops": 0}])
def test_integrator_config_validated(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_initial_state_validation():
    with pytest.raises(ValueError):
        simulate(HybridState(Phase.STANCE, 0.25, 0.0), T1, NO_GAIN)
    with pytest.raises(ValueError):
        simulate(HybridState(Phase.FLIGHT, 0.10, 0.0), T1, NO_GAIN)
    with pytest.raises(IntegrationFault):
        simulate(HybridState(Phase.FLIGHT, math.inf, 0.0), T1, NO_GAIN)


def test_conservative_hopping_keeps_apex():
    cfg = IntegratorConfig(max_hops=6)
    traj = simulate(HybridState(Phase.STANCE, 0.18, -0.5), CONSERVATIVE, NO_GAIN, cfg)
    apexes = [e.chi for e in traj.apexes()]
    assert len(apexes) == 6
    expected = 0.18 + 0.25 / (2 * 9.81)
    for a in apexes:
        assert a == pytest.approx(expected, abs=1e-7)


def test_dissipative_apexes_strictly_decrease():
    cfg = IntegratorConfig(max_hops=6)
    traj = simulate(HybridState(Phase.FLIGHT, 0.28, 0.0), T1, NO_GAIN, cfg)
    apexes = [e.chi for e in traj.apexes()]
    assert len(apexes) >= 5
    assert all(b < a for a, b in zip(apexes, apexes[1:]))


def test_floor_fault_and_analysis_mode():
    # default-model stance amplitude at k_t = 5.5 grows past the rest length within a few seconds
    cfg = IntegratorConfig(max_time=5.0)
    start = HybridState(Phase.STANCE, 0.18, 0.0)
    with pytest.raises(SimulationFault) as exc:
        simulate(start, T1, ControllerGains(vertical_gain=5.5), cfg)
    assert exc.value.state[0] < 0.0
    assert exc.value.trajectory.t[-1] < 5.0
    traj = simulate(start, T1, ControllerGains(vertical_gain=5.5), cfg, floor=None)
    assert traj.t[-1] == pytest.approx(5.0)


def test_no_liftoff_ends_cleanly_at_max_time():
    p = TemplateParams(stance_gravity=True)
    traj = simulate(HybridState(Phase.STANCE, 0.18, 0.0), p, ControllerGains(vertical_gain=0.1), IntegratorConfig(max_time=3.0))
    assert traj.hops == 0
    assert traj.t[-1] == pytest.approx(3.0)
    assert not traj.events


@pytest.fixture(scope="module")
def hopping():
    cfg = IntegratorConfig(max_hops=8)
    return simulate(HybridState(Phase.FLIGHT, 0.28, 0.0), TemplateParams(damping_const=11.9), ControllerGains(vertical_gain=5.5), cfg, floor=None)


def test_event_invariants(hopping):
    cfg = IntegratorConfig()
    evs = hopping.events
    assert all(b.t > a.t for a, b in zip(evs, evs[1:]))
    contact = [e for e in evs if e.kind != EventKind.APEX]
    for a, b in zip(contact, contact[1:]):
        assert a.kind != b.kind
    for e in evs:
        if e.kind == EventKind.TOUCHDOWN:
            assert e.chidot <= 0 and abs(e.chi - 0.18) <= cfg.event_tol
        elif e.kind == EventKind.LIFTOFF:
            assert e.chidot >= 0 and abs(e.chi - 0.18) <= cfg.event_tol
        else:
            assert abs(e.chidot) <= cfg.vel_tol
    # exactly one apex between each liftoff and the next touchdown
    kinds = [e.kind for e in evs]
    for i, k in enumerate(kinds):
        if k == EventKind.LIFTOFF and EventKind.TOUCHDOWN in kinds[i:]:
            j = kinds.index(EventKind.TOUCHDOWN, i)
            assert kinds[i:j].count(EventKind.APEX) == 1


def test_phase_changes_only_at_events(hopping):
    event_times = {e.t for e in hopping.events if e.kind != EventKind.APEX}
    for i in range(1, len(hopping.t)):
        if hopping.phases[i] != hopping.phases[i - 1]:
            assert hopping.t[i] in event_times
    assert all(b >= a for a, b in zip(hopping.t, hopping.t[1:]))


def test_reset_is_identity(hopping):
    for e in hopping.events:
        i = hopping.t.index(e.t)
        assert hopping.states[i] == e.state


def test_determinism():
    cfg = IntegratorConfig(max_hops=3)
    a = simulate(HybridState(Phase.FLIGHT, 0.3, 0.0), T1, ControllerGains(vertical_gain=5.5), cfg, floor=None)
    b = simulate(HybridState(Phase.FLIGHT, 0.3, 0.0), T1, ControllerGains(vertical_gain=5.5), cfg, floor=None)
    assert a.to_csv() == b.to_csv() and a.events_to_csv() == b.events_to_csv()


def test_event_time_convergence_order():
    # stance half-period of the undamped spring is pi/omega from a touchdown at the rest length
    w = CONSERVATIVE.natural_freq
    errs = []
    for h in (2e-3, 1e-3):
        cfg = IntegratorConfig(step_size=h, event_tol=1e-14, vel_tol=1e-14, max_hops=1)
        traj = simulate(HybridState(Phase.STANCE, 0.18, -0.5), CONSERVATIVE, NO_GAIN, cfg)
        errs.append(abs(traj.events_of(EventKind.LIFTOFF)[0].t - math.pi / w))
    assert errs[0] / errs[1] > 12


def test_conservative_energy_drift():
    cfg = IntegratorConfig(max_hops=20)
    traj = simulate(HybridState(Phase.STANCE, 0.18, -0.5), CONSERVATIVE, NO_GAIN, cfg)
    energies = [stance_energy(0.18, -0.5, CONSERVATIVE)]
    energies += [stance_energy(e.chi, e.chidot, CONSERVATIVE) for e in traj.events_of(EventKind.LIFTOFF)]
    assert len(energies) == 21
    for a, b in zip(energies, energies[1:]):
        assert abs(b - a) / a <= 1e-6


def test_csv_formats(hopping):
    lines = hopping.to_csv().splitlines()
    assert lines[0] == "t,chi,chidot,phase"
    assert len(lines) == len(hopping.t) + 1
    ev = hopping.events_to_csv().splitlines()
    assert ev[0] == "kind,t,chi,chidot,hop_index"
    assert ev[1].startswith("touchdown,")
    assert ev[3].startswith("apex,")
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(True) == "1" and fmt(7) == "7"


def test_max_time_clamps_last_step():
    traj = simulate(HybridState(Phase.FLIGHT, 100.0, 0.0), T1, NO_GAIN, IntegratorConfig(step_size=0.3, max_time=1.0))
    assert traj.t[-1] == 1.0


def test_trajectory_column_lookup(hopping):
    assert hopping.column("t") == hopping.t
    assert len(hopping.column("chi")) == len(hopping.t)
    with pytest.raises(KeyError):
        hopping.column("nope")
    assert isinstance(hopping, Trajectory)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.19, 2.0), st.floats(1e-4, 2e-3))
def test_ballistic_touchdown_matches_closed_form(apex, h):
    cfg = IntegratorConfig(step_size=h, max_hops=1)
    traj = simulate(HybridState(Phase.FLIGHT, apex, 0.0), CONSERVATIVE, NO_GAIN, cfg)
    td = traj.events_of(EventKind.TOUCHDOWN)[0]
    assert td.t == pytest.approx(math.sqrt(2 * (apex - 0.18) / 9.81), abs=1e-8)
