"""Fixed-step RK4 integration of hybrid systems with bisection event localization.

Models plug in through :class:`HybridModel`: a vector field and a set of guard
functions per discrete mode, plus a transition rule. The engine advances the
continuous state with classical RK4, watches guards for sign changes, refines
crossings by re-integrating partial steps from the start of the step, applies
the (identity) reset and keeps going.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .errors import BracketError, HoplabError, IntegrationFault, NoLiftoff, SimulationFault
from .template import (
    ControllerGains,
    HybridState,
    Phase,
    TemplateParams,
    ad_cos,
)

Field = Callable[[float, tuple], tuple]


class EventKind(str, Enum):
    TOUCHDOWN = "touchdown"
    LIFTOFF = "liftoff"
    APEX = "apex"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    t: float
    state: tuple
    hop_index: int
    source: str = "body"

    @property
    def chi(self) -> float:
        return self.state[0]

    @property
    def chidot(self) -> float:
        return self.state[1]


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float = 1e-4
    event_tol: float = 1e-9
    vel_tol: float = 1e-9
    max_time: float = 60.0
    max_hops: int | None = None
    sample_every: int = 1

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not (self.event_tol > 0 and self.vel_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if self.max_hops is not None and self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class Trajectory:
    """Sampled hybrid trajectory plus its ordered event log."""

    columns: tuple
    t: list = field(default_factory=list)
    states: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    events: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    extra_columns: tuple = ()
    extras: list = field(default_factory=list)

    def column(self, name: str) -> list:
        if name in self.columns:
            i = self.columns.index(name)
            return [s[i] for s in self.states]
        if name in self.extra_columns:
            i = self.extra_columns.index(name)
            return [e[i] for e in self.extras]
        if name == "t":
            return list(self.t)
        raise KeyError(name)

    def events_of(self, kind: EventKind, source: str = "body") -> list:
        return [e for e in self.events if e.kind == kind and e.source == source]

    def apexes(self) -> list:
        return self.events_of(EventKind.APEX)

    @property
    def hops(self) -> int:
        return len(self.events_of(EventKind.TOUCHDOWN))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t",) + tuple(self.columns) + ("phase",) + tuple(self.extra_columns))
        for i, (t, s, ph) in enumerate(zip(self.t, self.states, self.phases)):
            row = [fmt(t)] + [fmt(v) for v in s] + [str(ph)]
            if self.extra_columns:
                row += [fmt(v) for v in self.extras[i]]
            w.writerow(row)
        return buf.getvalue()

    def events_to_csv(self, state_columns: Sequence[str] | None = None) -> str:
        cols = tuple(state_columns or self.columns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        with_source = any(e.source != "body" for e in self.events)
        header = ("kind", "t") + cols + ("hop_index",) + (("source",) if with_source else ())
        w.writerow(header)
        for e in self.events:
            row = [str(e.kind), fmt(e.t)] + [fmt(v) for v in e.state[: len(cols)]] + [str(e.hop_index)]
            if with_source:
                row.append(e.source)
            w.writerow(row)
        return buf.getvalue()


def fmt(v) -> str:
    """Fixed 12-significant-digit rendering used by every CSV writer."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".12g")


@dataclass(frozen=True)
class Guard:
    """Scalar guard ``fn(t, y)`` watched for a crossing in ``direction`` (+1 rising, -1 falling).

    Rising crossings fire on ``g0 <= 0 < g1``, falling ones on ``g0 > 0 >= g1``.
    """

    kind: EventKind
    fn: Callable[[float, tuple], float]
    direction: int
    tol: float
    source: str = "body"

    def crossed(self, g0: float, g1: float) -> bool:
        if self.direction > 0:
            return g0 <= 0.0 < g1
        return g0 > 0.0 >= g1

    def past(self, g: float) -> bool:
        return g > 0.0 if self.direction > 0 else g <= 0.0


def step(field: Field, t: float, y: tuple, h: float) -> tuple:
    """One classical RK4 step of size ``h``; no event handling."""
    if h == 0.0:
        return tuple(y)
    if len(y) == 2:
        y0, y1 = y
        a0, a1 = field(t, y)
        hh = 0.5 * h
        b0, b1 = field(t + hh, (y0 + hh * a0, y1 + hh * a1))
        c0, c1 = field(t + hh, (y0 + hh * b0, y1 + hh * b1))
        d0, d1 = field(t + h, (y0 + h * c0, y1 + h * c1))
        h6 = h / 6.0
        return (y0 + h6 * (a0 + 2.0 * b0 + 2.0 * c0 + d0), y1 + h6 * (a1 + 2.0 * b1 + 2.0 * c1 + d1))
    k1 = field(t, y)
    hh = 0.5 * h
    k2 = field(t + hh, tuple(a + hh * b for a, b in zip(y, k1)))
    k3 = field(t + hh, tuple(a + hh * b for a, b in zip(y, k2)))
    k4 = field(t + h, tuple(a + h * b for a, b in zip(y, k3)))
    h6 = h / 6.0
    return tuple(a + h6 * (p + 2.0 * q + 2.0 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4))


def _finite(y) -> bool:
    return all(math.isfinite(v) for v in y)


def checked_step(field: Field, t: float, y: tuple, h: float) -> tuple:
    y1 = step(field, t, y, h)
    if not _finite(y1):
        raise IntegrationFault(t, y, "non-finite derivative or state")
    return y1


def _refine(field: Field, t0: float, y0: tuple, h: float, y1: tuple, guard: Guard, max_iter: int = 200):
    """Bisect inside ``[t0, t0 + h]`` and return the first post-crossing point with ``|g| <= tol``.

    States inside the bracket are obtained by a single RK4 step of the partial
    length from ``(t0, y0)``, so they carry the integrator's own accuracy.
    """
    a, b = 0.0, h
    yb = y1
    gb = guard.fn(t0 + h, y1)
    for _ in range(max_iter):
        if abs(gb) <= guard.tol:
            break
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        ym = step(field, t0, y0, m)
        gm = guard.fn(t0 + m, ym)
        if guard.past(gm):
            b, yb, gb = m, ym, gm
        else:
            a = m
    return t0 + b, yb


def locate_event(field: Field, start: tuple, end: tuple, guard: Callable[[float, tuple], float], tol: float):
    """Refine a guard zero inside the bracket ``start=(t0, y0)``, ``end=(t1, y1)``.

    Returns ``(t*, y*)`` with ``|guard(t*, y*)| <= tol`` and ``t0 <= t* <= t1``.
    Raises :class:`BracketError` when the guard has the same strict sign at both ends.
    """
    t0, y0 = start
    t1, y1 = end
    y0 = tuple(y0)
    y1 = tuple(y1)
    g0 = guard(t0, y0)
    if abs(g0) <= tol:
        return t0, y0
    g1 = guard(t1, y1)
    if g0 * g1 > 0.0:
        raise BracketError(f"guard does not change sign on [{t0}, {t1}]: g0={g0}, g1={g1}")
    g = Guard(EventKind.APEX, guard, 1 if g0 < 0.0 else -1, tol)
    return _refine(field, t0, y0, t1 - t0, y1, g)


class HybridModel:
    """Interface the engine drives. Subclasses define modes, fields and guards."""

    columns: tuple = ()
    extra_columns: tuple = ()

    def field(self, mode) -> Field:
        raise NotImplementedError

    def guards(self, mode) -> Sequence[Guard]:
        raise NotImplementedError

    def transition(self, mode, fired: Sequence[Guard], t: float, y: tuple):
        """Return ``(new_mode, new_state, [(kind, source), ...])`` for the events to log."""
        raise NotImplementedError

    def phase(self, mode) -> str:
        raise NotImplementedError

    def in_stance(self, mode) -> bool:
        return self.phase(mode) == Phase.STANCE.value

    def check(self, mode, t: float, y: tuple) -> None:
        pass

    def extras(self, mode, t: float, y: tuple) -> tuple:
        return ()

    def snapshot(self) -> dict:
        return {}


def integrate(
    model: HybridModel,
    mode,
    t0: float,
    y0: tuple,
    cfg: IntegratorConfig,
    *,
    stop: Callable[[EventRecord, int], bool] | None = None,
    record: bool = True,
    stance_limit: float | None = None,
) -> Trajectory:
    """Integrate ``model`` from ``(mode, t0, y0)`` until ``max_time``, ``max_hops`` or ``stop``.

    ``stop(event, hops)`` is called after every logged body event. When
    ``stance_limit`` is given, a stance phase longer than that raises
    :class:`NoLiftoff`; otherwise a stuck stance simply runs to ``max_time``.
    Any package error raised mid-run carries the partial trajectory as
    ``exc.trajectory``.
    """
    traj = Trajectory(columns=model.columns, params=model.snapshot(), extra_columns=model.extra_columns)
    try:
        return _integrate(model, mode, t0, y0, cfg, traj, stop, record, stance_limit)
    except HoplabError as exc:
        exc.trajectory = traj
        raise


def _integrate(model, mode, t0, y0, cfg, traj, stop, record, stance_limit):
    h = cfg.step_size
    y = tuple(float(v) for v in y0)
    t = float(t0)
    if not _finite(y):
        raise IntegrationFault(t, y, "non-finite initial state")
    model.check(mode, t, y)

    def _record(t, y, mode):
        traj.t.append(t)
        traj.states.append(y)
        traj.phases.append(model.phase(mode))
        if model.extra_columns:
            traj.extras.append(model.extras(mode, t, y))

    _record(t, y, mode)
    fld = model.field(mode)
    guards = model.guards(mode)
    gvals = [g.fn(t, y) for g in guards]
    hops = 0
    phase_start = t
    n = 0
    every = cfg.sample_every
    t_end = cfg.max_time
    while t < t_end:
        hs = h if t + h <= t_end else t_end - t
        if hs <= 0.0:
            break
        y1 = step(fld, t, y, hs)
        if not _finite(y1):
            raise IntegrationFault(t, y, "non-finite derivative or state")
        t1 = t + hs
        g1vals = [g.fn(t1, y1) for g in guards]
        hits = []
        for g, a, b in zip(guards, gvals, g1vals):
            if g.crossed(a, b):
                te, ye = _refine(fld, t, y, hs, y1, g)
                hits.append((te, ye, g))
        if not hits:
            t, y, gvals = t1, y1, g1vals
            model.check(mode, t, y)
            n += 1
            if record and n % every == 0:
                _record(t, y, mode)
            if stance_limit is not None and model.in_stance(mode) and t - phase_start > stance_limit:
                raise NoLiftoff(f"stance exceeded {stance_limit} s without liftoff (t={t})")
            continue

        te, ye, first = min(hits, key=lambda x: x[0])
        fired = [first] + [g for (_, _, g) in hits if g is not first and g.past(g.fn(te, ye))]
        old_phase = model.phase(mode)
        mode, y, logged = model.transition(mode, fired, te, ye)
        t = te
        model.check(mode, t, y)
        if model.phase(mode) != old_phase:
            phase_start = t
        done = False
        for kind, source in logged:
            if source == "body" and kind == EventKind.TOUCHDOWN:
                hops += 1
            ev = EventRecord(kind, t, y, hops, source)
            traj.events.append(ev)
            if source == "body":
                if stop is not None and stop(ev, hops):
                    done = True
                if kind == EventKind.TOUCHDOWN and cfg.max_hops is not None and hops >= cfg.max_hops:
                    done = True
        if record:
            _record(t, y, mode)
        if done:
            break
        fld = model.field(mode)
        guards = model.guards(mode)
        gvals = [g.fn(t, y) for g in guards]
    if record and traj.t[-1] != t:
        _record(t, y, mode)
    return traj


class TemplateModel(HybridModel):
    """The AD vertical hopper as a two-mode hybrid system over ``(chi, chidot)``."""

    columns = ("chi", "chidot")

    def __init__(self, params: TemplateParams, gains: ControllerGains, cfg: IntegratorConfig, floor: float | None = 0.0):
        self.p = params
        self.g = gains
        self.floor = floor
        w = params.natural_freq
        rho = params.rest_length
        c_mu = 2.0 * params.damping_ratio * w
        kt = gains.vertical_gain
        grav = params.gravity
        sg = grav if params.stance_gravity else 0.0

        def flight(t, y):
            return (y[1], -grav)

        def stance(t, y):
            # scaled-coordinate form: x1 = chi - rho, x2 = chidot / w
            x1 = y[0] - rho
            x2 = y[1] / w
            x2dot = -w * x1 - c_mu * x2 + kt * ad_cos(x1, x2) / w
            return (w * x2, w * x2dot - sg)

        self._fields = {Phase.FLIGHT: flight, Phase.STANCE: stance}

        def leg(t, y):
            return y[0] - rho

        def vel(t, y):
            return y[1]

        self._guards = {
            Phase.FLIGHT: (
                Guard(EventKind.APEX, vel, -1, cfg.vel_tol),
                Guard(EventKind.TOUCHDOWN, leg, -1, cfg.event_tol),
            ),
            Phase.STANCE: (Guard(EventKind.LIFTOFF, leg, +1, cfg.event_tol),),
        }

    def field(self, mode):
        return self._fields[mode]

    def guards(self, mode):
        return self._guards[mode]

    def transition(self, mode, fired, t, y):
        logged = []
        for g in sorted(fired, key=lambda g: g.kind != EventKind.APEX):
            logged.append((g.kind, "body"))
            if g.kind == EventKind.TOUCHDOWN:
                mode = Phase.STANCE
            elif g.kind == EventKind.LIFTOFF:
                mode = Phase.FLIGHT
        return mode, y, logged

    def phase(self, mode):
        return mode.value

    def check(self, mode, t, y):
        if self.floor is not None and y[0] < self.floor:
            raise SimulationFault(t, y, "body fell through the floor")

    def snapshot(self):
        return {
            "model": "template",
            "natural_freq": self.p.natural_freq,
            "mass": self.p.mass,
            "spring_const": self.p.spring_const,
            "damping_const": self.p.damping_const,
            "rest_length": self.p.rest_length,
            "gravity": self.p.gravity,
            "stance_gravity": self.p.stance_gravity,
            "vertical_gain": self.g.vertical_gain,
            "floor": self.floor,
        }


def validate_initial(s: HybridState, p: TemplateParams, tol: float) -> None:
    if not (math.isfinite(s.chi) and math.isfinite(s.chidot) and math.isfinite(s.t)):
        raise IntegrationFault(s.t, (s.chi, s.chidot), "non-finite initial state")
    if s.phase == Phase.STANCE and s.chi > p.rest_length + tol:
        raise ValueError(f"stance state above rest length: chi={s.chi}")
    if s.phase == Phase.FLIGHT and s.chi < p.rest_length - tol:
        raise ValueError(f"flight state below rest length: chi={s.chi}")


def simulate(
    initial: HybridState,
    params: TemplateParams,
    gains: ControllerGains,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    record: bool = True,
    stop: Callable[[EventRecord, int], bool] | None = None,
    stance_limit: float | None = None,
    floor: float | None = 0.0,
) -> Trajectory:
    """Simulate the AD vertical hopper through alternating flight and stance phases.

    Terminates at ``cfg.max_time`` or after ``cfg.max_hops`` touchdowns. A gain
    too small to lift off is not an error: the run ends at ``max_time`` with no hops.
    ``floor`` is the height below which the mass counts as having fallen through
    the ground (:class:`SimulationFault`); ``None`` integrates the template as a
    purely mathematical system.
    """
    validate_initial(initial, params, cfg.event_tol)
    model = TemplateModel(params, gains, cfg, floor)
    return integrate(
        model,
        Phase(initial.phase),
        initial.t,
        (initial.chi, initial.chidot),
        cfg,
        record=record,
        stop=stop,
        stance_limit=stance_limit,
    )
