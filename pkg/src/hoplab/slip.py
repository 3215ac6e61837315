"""Planar spring-loaded inverted pendulum with a fixed touchdown angle.

The single massless leg carries the same spring, damper and AD force law as
the anchored per-limb policy, acting along the leg. Angles are measured from
the vertical; positive angles put the toe ahead of the center of mass.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import EventKind, Guard, HybridModel, IntegratorConfig, Trajectory, fmt, integrate
from .errors import Fall, FixedPointError, GaitFailure, NoLiftoff, SimulationFault
from .template import Phase, ad_cos

MIN_LEG = 0.02


@dataclass(frozen=True)
class SlipParams:
    mass: float = 6.173
    rest_length: float = 0.18
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.mass > 0 and self.rest_length > 0 and self.gravity > 0):
            raise ValueError("mass, rest_length and gravity must be positive")


@dataclass(frozen=True)
class SteppingPolicy:
    theta_td: float = 0.0
    theta_lo: float = 0.0
    k_ss: float = 1300.0
    beta_s: float = 0.25
    k_st: float = 8.0

    def __post_init__(self):
        if not (abs(self.theta_td) < math.pi / 2 and abs(self.theta_lo) < math.pi / 2):
            raise ValueError("leg angles must lie strictly inside (-pi/2, pi/2)")
        if not self.k_ss > 0:
            raise ValueError("k_ss must be positive")
        if self.beta_s < 0 or self.k_st < 0:
            raise ValueError("beta_s and k_st must be non-negative")

    def omega(self, params: SlipParams) -> float:
        return math.sqrt(self.k_ss / params.mass)


@dataclass(frozen=True)
class SlipState:
    phase: Phase
    y: float
    z: float
    ydot: float
    zdot: float
    toe_y: float | None = None
    t: float = 0.0


def leg_force(y, z, ydot, zdot, toe_y, params: SlipParams, policy: SteppingPolicy):
    """Mass-specific radial leg force plus leg length, leg rate and unit vector components."""
    w = policy.omega(params)
    dy = y - toe_y
    ell = math.hypot(dy, z)
    ldot = (dy * ydot + z * zdot) / ell
    x1 = ell - params.rest_length
    u = -2.0 * policy.beta_s * w * ldot - w * w * x1 + policy.k_st * ad_cos(x1, ldot / w)
    return u, ell, ldot, dy / ell, z / ell


def slip_stance_derivative(s: SlipState, params: SlipParams, policy: SteppingPolicy) -> tuple:
    """``(ydot, zdot, yddot, zddot)`` in stance; the leg force acts along toe -> CoM."""
    ell = math.hypot(s.y - s.toe_y, s.z)
    if ell < MIN_LEG:
        raise SimulationFault(s.t, (s.y, s.z, s.ydot, s.zdot), f"leg length {ell} below {MIN_LEG} m")
    u, ell, ldot, ey, ez = leg_force(s.y, s.z, s.ydot, s.zdot, s.toe_y, params, policy)
    return (s.ydot, s.zdot, u * ey, u * ez - params.gravity)


class SlipModel(HybridModel):
    columns = ("y", "z", "ydot", "zdot")
    extra_columns = ("toe_y",)

    def __init__(self, params: SlipParams, policy: SteppingPolicy, cfg: IntegratorConfig):
        self.params = params
        self.policy = policy
        rho = params.rest_length
        grav = params.gravity
        w = policy.omega(params)
        two_bw = 2.0 * policy.beta_s * w
        w2 = w * w
        kst = policy.k_st
        z_td = rho * math.cos(policy.theta_td)
        self._z_td = z_td

        def flight(t, s):
            return (s[2], s[3], 0.0, -grav)

        self._flight = flight

        def apex(t, s):
            return s[3]

        def touchdown(t, s):
            return s[1] - z_td

        self._flight_guards = (
            Guard(EventKind.APEX, apex, -1, cfg.vel_tol),
            Guard(EventKind.TOUCHDOWN, touchdown, -1, cfg.event_tol),
        )
        self._stance_cache = {}

        def make_stance(toe):
            def stance(t, s):
                y, z, vy, vz = s
                dy = y - toe
                ell = math.hypot(dy, z)
                ldot = (dy * vy + z * vz) / ell
                x1 = ell - rho
                u = -two_bw * ldot - w2 * x1 + kst * ad_cos(x1, ldot / w)
                return (vy, vz, u * dy / ell, u * z / ell - grav)

            def liftoff(t, s):
                return math.hypot(s[0] - toe, s[1]) - rho

            return stance, (Guard(EventKind.LIFTOFF, liftoff, +1, cfg.event_tol),)

        self._make_stance = make_stance

    def _stance(self, toe):
        if toe not in self._stance_cache:
            self._stance_cache[toe] = self._make_stance(toe)
        return self._stance_cache[toe]

    # mode: None in flight, toe position in stance
    def field(self, mode):
        return self._flight if mode is None else self._stance(mode)[0]

    def guards(self, mode):
        return self._flight_guards if mode is None else self._stance(mode)[1]

    def transition(self, mode, fired, t, s):
        logged = []
        for g in sorted(fired, key=lambda g: g.kind != EventKind.APEX):
            logged.append((g.kind, "body"))
            if g.kind == EventKind.TOUCHDOWN:
                mode = s[0] + self.params.rest_length * math.sin(self.policy.theta_td)
            elif g.kind == EventKind.LIFTOFF:
                mode = None
        return mode, s, logged

    def phase(self, mode):
        return Phase.FLIGHT.value if mode is None else Phase.STANCE.value

    def check(self, mode, t, s):
        if s[1] <= 0.0:
            raise Fall(f"body hit the ground at t={t}")
        if mode is not None and math.hypot(s[0] - mode, s[1]) < MIN_LEG:
            raise Fall(f"leg collapsed below {MIN_LEG} m at t={t}")

    def extras(self, mode, t, s):
        return (math.nan if mode is None else mode,)

    def snapshot(self):
        return {
            "model": "slip",
            "mass": self.params.mass,
            "rest_length": self.params.rest_length,
            "gravity": self.params.gravity,
            "theta_td": self.policy.theta_td,
            "theta_lo": self.policy.theta_lo,
            "k_ss": self.policy.k_ss,
            "beta_s": self.policy.beta_s,
            "k_st": self.policy.k_st,
            "natural_freq": self.policy.omega(self.params),
        }


def simulate_slip(
    apex: tuple,
    params: SlipParams,
    policy: SteppingPolicy,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    strides: int | None = None,
    distance: float | None = None,
    y0: float = 0.0,
    record: bool = True,
    stance_limit: float = 2.0,
) -> Trajectory:
    """Run the SLIP from a flight apex ``(z, ydot)`` for ``strides`` strides or until ``y >= distance``.

    Strides end at apexes. Raises :class:`Fall` or :class:`NoLiftoff` when the
    gait fails, including a liftoff without upward velocity (no apex before the
    next touchdown).
    """
    z, ydot = apex
    if z <= params.rest_length * math.cos(policy.theta_td):
        raise ValueError(f"apex height {z} does not clear the touchdown height")
    model = SlipModel(params, policy, cfg)
    last = [None]

    def _stop(ev, hops):
        prev, last[0] = last[0], ev.kind
        if ev.kind == EventKind.TOUCHDOWN and prev == EventKind.LIFTOFF:
            raise Fall(f"liftoff without upward velocity before t={ev.t}")
        if ev.kind == EventKind.APEX and hops >= 1:
            if strides is not None and hops >= strides:
                return True
            if distance is not None and ev.state[0] - y0 >= distance:
                return True
        return False

    return integrate(
        model, None, 0.0, (y0, z, ydot, 0.0), cfg, stop=_stop, record=record, stance_limit=stance_limit
    )


def slip_stride_map(
    apex: tuple,
    params: SlipParams,
    policy: SteppingPolicy,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    stance_limit: float = 2.0,
) -> tuple:
    """Apex-to-apex map ``(z, ydot) -> (z', ydot')``; raises :class:`GaitFailure` on fall or no liftoff."""
    traj = simulate_slip(apex, params, policy, cfg, strides=1, record=False, stance_limit=stance_limit)
    apexes = [e for e in traj.apexes() if e.hop_index >= 1]
    if not apexes:
        if traj.events and traj.events[-1].kind == EventKind.TOUCHDOWN:
            raise NoLiftoff(f"no liftoff within max_time={cfg.max_time} s")
        raise GaitFailure("stride did not reach a new apex")
    e = apexes[0]
    return (e.state[1], e.state[2])


@dataclass
class VelocityFixedPoint:
    z: float
    ydot: float
    slope: float
    iterations: int
    history: list = field(default_factory=list)

    @property
    def attracting(self) -> bool:
        return abs(self.slope) < 1.0


def find_velocity_fixed_point(
    params: SlipParams,
    policy: SteppingPolicy,
    guess: tuple,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    tol: float = 1e-5,
    max_iter: int = 200,
    diff_step: float = 1e-4,
    method: str = "iterate",
    map_fn: Callable[[tuple], tuple] | None = None,
) -> VelocityFixedPoint:
    """Steady apex ``(z*, ydot*)`` of the stride map and the map's slope in ``ydot`` there.

    ``method="iterate"`` applies the stride map until successive apexes differ
    by less than ``tol``; convergence this way already demonstrates attraction.
    ``method="newton"`` solves for the fixed point directly (finite-difference
    Jacobian) and also finds repelling fixed points, for diagnosis.
    The slope is a central difference with step ``diff_step`` (m/s).
    """
    F = map_fn or (lambda a: slip_stride_map(a, params, policy, cfg))
    x = (float(guess[0]), float(guess[1]))
    history = [x]
    converged = False
    it = 0
    try:
        if method == "iterate":
            for it in range(1, max_iter + 1):
                nxt = F(x)
                history.append(nxt)
                if math.hypot(nxt[0] - x[0], nxt[1] - x[1]) < tol:
                    x = nxt
                    converged = True
                    break
                x = nxt
        elif method == "newton":
            xv = np.array(x)
            for it in range(1, max_iter + 1):
                fx = np.array(F(tuple(xv)))
                r = fx - xv
                if np.linalg.norm(r) < tol:
                    converged = True
                    break
                J = np.empty((2, 2))
                for j, e in enumerate((1e-6, 1e-6)):
                    d = np.zeros(2)
                    d[j] = e
                    J[:, j] = (np.array(F(tuple(xv + d))) - np.array(F(tuple(xv - d)))) / (2 * e)
                xv = xv - np.linalg.solve(J - np.eye(2), r)
                history.append(tuple(xv))
            x = (float(xv[0]), float(xv[1]))
        else:
            raise ValueError(f"unknown method {method!r}")
    except GaitFailure as exc:
        raise FixedPointError(f"stride map failed during fixed-point search: {exc}", history) from exc
    if not converged:
        raise FixedPointError("stride map did not converge", history)
    try:
        up = F((x[0], x[1] + diff_step))[1]
        down = F((x[0], x[1] - diff_step))[1]
    except GaitFailure as exc:
        raise FixedPointError(f"stride map failed while differentiating: {exc}", history) from exc
    slope = (up - down) / (2.0 * diff_step)
    return VelocityFixedPoint(x[0], x[1], slope, it, history)


def stride_table_csv(apexes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("stride_index", "z_apex", "ydot_apex"))
    for i, (z, vy) in enumerate(apexes):
        w.writerow((str(i), fmt(z), fmt(vy)))
    return buf.getvalue()


def trajectory_leg_forces(traj: Trajectory) -> tuple[list, list]:
    """Mass-specific leg force and leg length at every sample of a SLIP trajectory.

    Flight samples get force 0 and length NaN.
    """
    pr = traj.params
    params = SlipParams(pr["mass"], pr["rest_length"], pr["gravity"])
    policy = SteppingPolicy(pr["theta_td"], pr["theta_lo"], pr["k_ss"], pr["beta_s"], pr["k_st"])
    forces, lengths = [], []
    for s, ph, (toe,) in zip(traj.states, traj.phases, traj.extras):
        if ph == Phase.STANCE.value:
            u, ell, *_ = leg_force(*s, toe, params, policy)
            forces.append(u)
            lengths.append(ell)
        else:
            forces.append(0.0)
            lengths.append(math.nan)
    return forces, lengths
