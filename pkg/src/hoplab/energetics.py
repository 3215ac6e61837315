"""Cost of transport from simulated limb forces.

Limb forces become motor currents through a constant effective moment arm;
currents feed the wheel-style mechanical power estimate and Joule heating,
and their sum is normalized into the specific resistance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import Trajectory, fmt
from .errors import DomainError
from .template import Phase

REPORT_COLUMNS = ("gait", "k_st", "vbar_mps", "Pmech_W", "Pheat_W", "Ptotal_W", "sigma")


@dataclass(frozen=True)
class PowerModel:
    k_tau: float = 0.1  # N*m/A
    resistance: float = 0.2  # ohm
    r_eff: float = 0.1  # m
    motors_per_limb: int = 2

    def __post_init__(self):
        if not (self.k_tau > 0 and self.resistance > 0 and self.r_eff > 0 and self.motors_per_limb > 0):
            raise ValueError("power model constants must be positive")


def specific_resistance(power: float, mass: float, gravity: float, vbar: float) -> float:
    if not vbar > 0:
        raise DomainError(f"average speed must be positive, got {vbar}")
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass}")
    return power / (mass * gravity * vbar)


def mechanical_power(model: PowerModel, i_avg: float, vbar: float, chi_stance: float) -> float:
    """Wheel-style estimate ``2 * K_tau * I_avg * (vbar / chi)``."""
    if not chi_stance > 0:
        raise DomainError(f"mean stance extension must be positive, got {chi_stance}")
    return 2.0 * model.k_tau * i_avg * (vbar / chi_stance)


def joule_power(i2_total: float, resistance: float) -> float:
    if i2_total < 0:
        raise DomainError(f"squared current must be non-negative, got {i2_total}")
    return i2_total * resistance


def motor_current(u: float, mass: float, n_functional: int, model: PowerModel) -> float:
    """Current of one motor of a limb commanding mass-specific force ``u``; the limb's motors share the load."""
    torque = (mass / n_functional) * u * model.r_eff / model.motors_per_limb
    return abs(torque) / model.k_tau


@dataclass
class CurrentSeries:
    t: np.ndarray
    stance: np.ndarray  # bool per sample
    limbs: tuple
    currents: np.ndarray  # per-motor current, one column per limb
    extension: np.ndarray  # mean extension of the limbs in contact (NaN when none)
    motors_per_limb: int


def limb_channels(traj: Trajectory, n_functional: int | None = None) -> tuple[tuple, dict]:
    """Per-limb ``(u, contact, chi)`` series of a tripod or SLIP trajectory.

    A SLIP trajectory is one virtual leg standing for ``n_functional`` identical
    limbs, each commanding the virtual leg's force.
    """
    model = traj.params.get("model")
    if model == "slip":
        from .slip import trajectory_leg_forces

        if n_functional is None:
            raise ValueError("a SLIP trajectory needs the number of limbs it stands for")
        u, ell = trajectory_leg_forces(traj)
        stance = [ph == Phase.STANCE.value for ph in traj.phases]
        limbs = tuple(f"V{i}" for i in range(n_functional))
        return limbs, {j: (u, stance, ell) for j in limbs}
    limbs = tuple(traj.params.get("limbs", ()))
    if not limbs:
        raise ValueError("trajectory carries no per-limb force channels")
    return limbs, {j: (traj.column(f"u_{j}"), traj.column(f"contact_{j}"), traj.column(f"chi_{j}")) for j in limbs}


def simulate_currents(
    traj: Trajectory, model: PowerModel = PowerModel(), *, n_functional: int | None = None
) -> CurrentSeries:
    limbs, ch = limb_channels(traj, n_functional)
    n_f = int(traj.params.get("n_functional", n_functional or len(limbs)))
    mass = traj.params["mass"]
    n = len(traj.t)
    cur = np.zeros((n, len(limbs)))
    ext = np.full(n, math.nan)
    for i in range(n):
        chis = []
        for k, j in enumerate(limbs):
            u, contact, chi = ch[j][0][i], ch[j][1][i], ch[j][2][i]
            if contact:
                cur[i, k] = motor_current(u, mass, n_f, model)
                chis.append(chi)
        if chis:
            ext[i] = math.fsum(chis) / len(chis)
    stance = np.array([ph == Phase.STANCE.value for ph in traj.phases])
    return CurrentSeries(np.asarray(traj.t, dtype=float), stance, limbs, cur, ext, model.motors_per_limb)


@dataclass
class EnergeticsReport:
    p_mech: float
    p_heat: float
    vbar: float
    duration: float
    distance: float
    mass: float
    gravity: float
    i_avg: float
    i2_total: float
    chi_stance: float
    gait: str = ""
    k_st: float = math.nan

    @property
    def p_total(self) -> float:
        return self.p_mech + self.p_heat

    @property
    def sigma(self) -> float:
        """Specific resistance; raises :class:`DomainError` for a stationary trial."""
        return specific_resistance(self.p_total, self.mass, self.gravity, self.vbar)

    def _sigma_or_nan(self) -> float:
        try:
            return self.sigma
        except DomainError:
            return math.nan

    def to_text(self) -> str:
        items = [
            ("gait", self.gait),
            ("k_st", fmt(self.k_st)),
            ("distance_m", fmt(self.distance)),
            ("duration_s", fmt(self.duration)),
            ("vbar_mps", fmt(self.vbar)),
            ("I_avg_A", fmt(self.i_avg)),
            ("I2_total_A2", fmt(self.i2_total)),
            ("chi_stance_m", fmt(self.chi_stance)),
            ("Pmech_W", fmt(self.p_mech)),
            ("Pheat_W", fmt(self.p_heat)),
            ("Ptotal_W", fmt(self.p_total)),
            ("sigma", fmt(self._sigma_or_nan())),
        ]
        return "".join(f"{k}={v}\n" for k, v in items)

    def csv_row(self) -> tuple:
        return (
            self.gait,
            fmt(self.k_st),
            fmt(self.vbar),
            fmt(self.p_mech),
            fmt(self.p_heat),
            fmt(self.p_total),
            fmt(self._sigma_or_nan()),
        )


def _stance_average(t: np.ndarray, stance: np.ndarray, values: np.ndarray) -> float:
    """Time average of ``values`` over stance; sample ``i`` holds until sample ``i + 1``."""
    if len(t) < 2:
        return math.nan
    w = np.diff(t) * stance[:-1]
    total = math.fsum(w)
    if total <= 0.0:
        return math.nan
    return math.fsum(w * values[:-1]) / total


def trial_report(
    traj: Trajectory,
    model: PowerModel = PowerModel(),
    distance: float | None = None,
    *,
    n_functional: int | None = None,
    gait: str = "",
    k_st: float | None = None,
) -> EnergeticsReport:
    """Assemble powers, average speed and specific resistance for one trial.

    ``distance`` defaults to the fore-aft displacement when the trajectory has
    a ``y`` column. Currents are rectified per motor, then averaged over all
    functional motors and over stance time.
    """
    if len(traj.t) < 2 or traj.t[-1] - traj.t[0] <= 0.0:
        raise DomainError("trial has zero elapsed time")
    elapsed = traj.t[-1] - traj.t[0]
    if distance is None:
        if "y" not in traj.columns:
            raise ValueError("distance is required for trajectories without fore-aft position")
        y = traj.column("y")
        distance = y[-1] - y[0]
    cs = simulate_currents(traj, model, n_functional=n_functional)
    vbar = distance / elapsed
    i_mean = cs.currents.mean(axis=1)
    i2_sum = model.motors_per_limb * (cs.currents**2).sum(axis=1)
    i_avg = _stance_average(cs.t, cs.stance, i_mean)
    i2 = _stance_average(cs.t, cs.stance, i2_sum)
    chi = _stance_average(cs.t, cs.stance, np.nan_to_num(cs.extension, nan=0.0))
    if math.isnan(i_avg):
        i_avg = i2 = 0.0
        p_mech = 0.0
    else:
        p_mech = mechanical_power(model, i_avg, abs(vbar), chi)
    p_heat = joule_power(i2, model.resistance)
    k = traj.params.get("k_st", math.nan) if k_st is None else k_st
    return EnergeticsReport(
        p_mech,
        p_heat,
        vbar,
        elapsed,
        distance,
        traj.params["mass"],
        traj.params["gravity"],
        i_avg,
        i2,
        chi,
        gait,
        k,
    )


def concatenate(traj: Trajectory) -> Trajectory:
    """The trajectory followed by a copy of itself shifted by its duration (and fore-aft travel)."""
    dt = traj.t[-1] - traj.t[0]
    shift = [0.0] * len(traj.columns)
    if "y" in traj.columns:
        i = traj.columns.index("y")
        shift[i] = traj.states[-1][i] - traj.states[0][i]
    out = Trajectory(traj.columns, params=dict(traj.params), extra_columns=traj.extra_columns)
    out.t = list(traj.t) + [t + dt for t in traj.t]
    out.states = list(traj.states) + [tuple(a + b for a, b in zip(s, shift)) for s in traj.states]
    out.phases = list(traj.phases) * 2
    extras = list(traj.extras)
    if traj.params.get("model") == "slip" and "y" in traj.columns:
        extras += [(e[0] + shift[traj.columns.index("y")],) for e in traj.extras]
    else:
        extras += list(traj.extras)
    out.extras = extras
    out.events = list(traj.events)
    return out
