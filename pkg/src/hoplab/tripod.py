"""Per-limb anchoring of the vertical template on a quadruped with one limb missing.

The body only translates vertically. Each functional limb runs the spring and
damper on its own extension plus an AD term computed from the limb-averaged
extension and rate, and pushes only while its toe is on the ground.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .engine import EventKind, Guard, HybridModel, IntegratorConfig, Trajectory, integrate
from .errors import ContractViolation, DomainError, SimulationFault
from .template import Phase, ad_cos

LIMBS = ("LF", "LB", "RF", "RB")
DEFAULT_HIPS = {"LF": (0.2, 0.1), "LB": (-0.2, 0.1), "RF": (0.2, -0.1), "RB": (-0.2, -0.1)}


@dataclass(frozen=True)
class RobotParams:
    """Robot-level constants and per-limb settings.

    Angles are radians from the vertical, positive toe-forward. ``angles`` is
    the stance (or touchdown) angle used by the pose check; ``liftoff_angles``
    is carried as metadata. Hip coordinates are ``(x fore-aft, y lateral)`` in
    the body frame, relative to the CoM ground projection ``com``.
    """

    mass: float = 6.173
    gravity: float = 9.81
    k_ss: float = 1500.0
    beta_s: float = 0.25
    k_st: float = 5.5
    missing: str | None = "RF"
    rest_lengths: dict = field(default_factory=lambda: {j: 0.18 for j in LIMBS})
    angles: dict = field(default_factory=lambda: {j: 0.0 for j in LIMBS})
    liftoff_angles: dict = field(default_factory=dict)
    hips: dict = field(default_factory=lambda: dict(DEFAULT_HIPS))
    z_offsets: dict = field(default_factory=dict)
    com: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.mass > 0 and self.gravity > 0 and self.k_ss > 0):
            raise ValueError("mass, gravity and k_ss must be positive")
        if self.beta_s < 0 or self.k_st < 0:
            raise ValueError("beta_s and k_st must be non-negative")
        if self.missing is not None and self.missing not in LIMBS:
            raise ValueError(f"unknown missing limb {self.missing!r}")
        for j in self.functional:
            rho = self.rest_lengths.get(j)
            if rho is None or not 0.0 < rho < 0.25:
                raise ValueError(f"rest length of {j} must lie in (0, 0.25), got {rho}")
            if j not in self.hips:
                raise ValueError(f"no hip coordinates for {j}")
            if abs(self.angles.get(j, 0.0)) >= math.pi / 2:
                raise ValueError(f"angle of {j} must lie inside (-pi/2, pi/2)")

    @property
    def functional(self) -> tuple:
        return tuple(j for j in LIMBS if j != self.missing)

    @property
    def n_functional(self) -> int:
        return len(self.functional)

    @property
    def omega(self) -> float:
        return math.sqrt(self.k_ss / self.mass)

    def offset(self, j: str) -> float:
        return self.z_offsets.get(j, 0.0)

    @property
    def mean_rest_length(self) -> float:
        return math.fsum(self.rest_lengths[j] for j in self.functional) / self.n_functional


@dataclass(frozen=True)
class TripodState:
    z: float
    zdot: float
    contact: dict
    t: float = 0.0

    def limb(self, j: str, p: RobotParams) -> tuple:
        """``(chi_j, chidot_j)``: tied to the body in contact, at rest length and still otherwise."""
        if self.contact.get(j, False):
            return self.z - p.offset(j), self.zdot
        return p.rest_lengths[j], 0.0


def _averaged_cos(chis, chidots, rho_bar, w):
    n = len(chis)
    cbar = math.fsum(chis) / n
    vbar = math.fsum(chidots) / n
    return ad_cos(cbar - rho_bar, vbar / w)


def limb_policy(j: str, state: TripodState, p: RobotParams) -> float:
    """Mass-specific force command of limb ``j``: own spring and damper, shared averaged AD term."""
    if j not in p.functional:
        raise ContractViolation(f"limb {j} is not functional")
    w = p.omega
    limbs = [state.limb(i, p) for i in p.functional]
    cos_bar = _averaged_cos([c for c, _ in limbs], [v for _, v in limbs], p.mean_rest_length, w)
    chi, chidot = state.limb(j, p)
    return -2.0 * p.beta_s * w * chidot - w * w * (chi - p.rest_lengths[j]) + p.k_st * cos_bar


class TripodModel(HybridModel):
    """Vertical body over ``(z, zdot)``; the mode is the frozenset of limbs in contact."""

    columns = ("z", "zdot")

    def __init__(self, p: RobotParams, cfg: IntegratorConfig):
        self.p = p
        self.limbs = p.functional
        self.extra_columns = tuple(
            f"{name}_{j}" for j in self.limbs for name in ("chi", "chidot", "contact", "u")
        )
        self._cfg = cfg
        self._fields = {}
        self._guards = {}
        w = p.omega
        self._w = w
        self._two_bw = 2.0 * p.beta_s * w
        self._w2 = w * w
        self._rho = {j: p.rest_lengths[j] for j in self.limbs}
        self._off = {j: p.offset(j) for j in self.limbs}
        self._rho_bar = p.mean_rest_length

    def _limb_states(self, mode, y):
        z, zd = y
        return [(z - self._off[j], zd) if j in mode else (self._rho[j], 0.0) for j in self.limbs]

    def forces(self, mode, y) -> list:
        """Force command of every functional limb; exactly 0 for limbs out of contact."""
        limbs = self._limb_states(mode, y)
        cos_bar = _averaged_cos([c for c, _ in limbs], [v for _, v in limbs], self._rho_bar, self._w)
        ad = self.p.k_st * cos_bar
        out = []
        for j, (chi, chid) in zip(self.limbs, limbs):
            if j in mode:
                out.append(-self._two_bw * chid - self._w2 * (chi - self._rho[j]) + ad)
            else:
                out.append(0.0)
        return out

    def field(self, mode):
        if mode not in self._fields:
            n = self.p.n_functional
            grav = self.p.gravity
            if not mode:

                def fld(t, y):
                    return (y[1], -grav)

            else:

                def fld(t, y, mode=mode):
                    return (y[1], math.fsum(self.forces(mode, y)) / n - grav)

            self._fields[mode] = fld
        return self._fields[mode]

    def guards(self, mode):
        if mode not in self._guards:
            gs = []
            if not mode:
                gs.append(Guard(EventKind.APEX, lambda t, y: y[1], -1, self._cfg.vel_tol))
            for j in self.limbs:
                off, rho = self._off[j], self._rho[j]

                def leg(t, y, off=off, rho=rho):
                    return y[0] - off - rho

                if j in mode:
                    gs.append(Guard(EventKind.LIFTOFF, leg, +1, self._cfg.event_tol, j))
                else:
                    gs.append(Guard(EventKind.TOUCHDOWN, leg, -1, self._cfg.event_tol, j))
            self._guards[mode] = tuple(gs)
        return self._guards[mode]

    def transition(self, mode, fired, t, y):
        logged = []
        new = set(mode)
        for g in sorted(fired, key=lambda g: (g.kind != EventKind.APEX, self.limbs.index(g.source) if g.source in self.limbs else -1)):
            if g.kind == EventKind.APEX:
                logged.append((EventKind.APEX, "body"))
            elif g.kind == EventKind.TOUCHDOWN:
                if not new:
                    logged.append((EventKind.TOUCHDOWN, "body"))
                new.add(g.source)
                logged.append((EventKind.TOUCHDOWN, g.source))
            else:
                new.discard(g.source)
                logged.append((EventKind.LIFTOFF, g.source))
                if not new:
                    logged.append((EventKind.LIFTOFF, "body"))
        return frozenset(new), y, logged

    def phase(self, mode):
        return Phase.STANCE.value if mode else Phase.FLIGHT.value

    def check(self, mode, t, y):
        if y[0] <= 0.0:
            raise SimulationFault(t, y, "body fell through the floor")

    def extras(self, mode, t, y):
        limbs = self._limb_states(mode, y)
        u = self.forces(mode, y)
        row = []
        for j, (chi, chid), uj in zip(self.limbs, limbs, u):
            row += [chi, chid, j in mode, uj]
        return tuple(row)

    def snapshot(self):
        p = self.p
        snap = {
            "model": "tripod",
            "mass": p.mass,
            "gravity": p.gravity,
            "k_ss": p.k_ss,
            "beta_s": p.beta_s,
            "k_st": p.k_st,
            "missing": p.missing,
            "n_functional": p.n_functional,
            "natural_freq": p.omega,
            "limbs": self.limbs,
        }
        for j in self.limbs:
            snap[f"rest_length_{j}"] = p.rest_lengths[j]
        return snap


def initial_contacts(z: float, p: RobotParams, tol: float = 0.0) -> frozenset:
    return frozenset(j for j in p.functional if z - p.offset(j) - p.rest_lengths[j] <= tol)


def simulate_tripod(
    z0: float,
    zdot0: float,
    p: RobotParams,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    record: bool = True,
    stop=None,
    stance_limit: float | None = None,
) -> Trajectory:
    """Simulate the vertical tripod (or quadruped) body from height ``z0`` and rate ``zdot0``.

    Limbs whose toe is on or below the ground at ``z0`` start in contact.
    Body touchdown is the first limb to touch down and body liftoff the last
    to leave; both are logged with source ``"body"`` next to the per-limb events.
    """
    if not (math.isfinite(z0) and math.isfinite(zdot0)):
        raise ValueError("non-finite initial state")
    model = TripodModel(p, cfg)
    mode = initial_contacts(z0, p)
    return integrate(model, mode, 0.0, (z0, zdot0), cfg, stop=stop, record=record, stance_limit=stance_limit)


def _edge_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    s = 0.0 if L2 == 0.0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + s * dx), py - (ay + s * dy))


def support_margin(points, com) -> float:
    """Signed distance from ``com`` to the boundary of the convex hull of ``points``; positive inside."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DomainError(f"support polygon needs at least 3 ground points, got {len(pts)}")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DomainError("support points are collinear") from exc
    verts = pts[hull.vertices]  # counterclockwise in 2-D
    px, py = float(com[0]), float(com[1])
    inside = True
    dist = math.inf
    for k in range(len(verts)):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % len(verts)]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < 0.0:
            inside = False
        dist = min(dist, _edge_distance(px, py, ax, ay, bx, by))
    return dist if inside else -dist


def toe_positions(p: RobotParams) -> dict:
    """Ground toe positions: each toe sits ``rho_j * sin(theta_j)`` fore-aft of its hip."""
    return {
        j: (p.hips[j][0] + p.rest_lengths[j] * math.sin(p.angles.get(j, 0.0)), p.hips[j][1]) for j in p.functional
    }


def static_loads(toes: dict, com, weight: float) -> dict:
    """Normal loads balancing ``weight`` with zero moment about ``com``.

    Three contacts give a unique solution; four use the minimum-norm one.
    """
    names = list(toes)
    A = np.array(
        [
            [1.0] * len(names),
            [toes[j][0] - com[0] for j in names],
            [toes[j][1] - com[1] for j in names],
        ]
    )
    b = np.array([weight, 0.0, 0.0])
    if len(names) == 3:
        x = np.linalg.solve(A, b)
    else:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
    return {j: float(v) for j, v in zip(names, x)}


@dataclass
class PoseReport:
    margin: float
    loads: dict
    toes: dict

    @property
    def stable(self) -> bool:
        return self.margin > 0.0 and all(v >= 0.0 for v in self.loads.values())

    def to_text(self) -> str:
        lines = [f"margin_m={format(self.margin, '.12g')}"]
        lines += [f"load_{j}_N={format(v, '.12g')}" for j, v in self.loads.items()]
        lines.append(f"stable={int(self.stable)}")
        return "\n".join(lines) + "\n"


def check_rebalanced_pose(p: RobotParams) -> PoseReport:
    """Static support margin and per-limb normal loads of the standing pose.

    A non-positive margin is reported (``stable`` false), not raised.
    """
    toes = toe_positions(p)
    margin = support_margin(list(toes.values()), p.com)
    loads = static_loads(toes, p.com, p.mass * p.gravity)
    return PoseReport(margin, loads, toes)
