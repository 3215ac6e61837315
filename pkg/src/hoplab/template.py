"""Actively damped 1-DoF vertical hopping template.

Flight is ballistic; stance is a mass-specific spring-mass-damper driven by the
active damping (AD) input ``tau = k_t * cos(angle(x))`` where ``x = (chi - rho,
chidot / omega)`` are the scaled phase coordinates of the stance oscillator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Phase(str, Enum):
    STANCE = "stance"
    FLIGHT = "flight"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TemplateParams:
    """Physical constants of the vertical hopper (defaults: the `table1` preset values).

    ``damping_const`` is read in N*s/m. ``stance_gravity`` adds ``-gravity`` to the
    stance acceleration; it is off by default so stance follows the pure
    spring-mass-damper template.
    """

    mass: float = 6.173
    spring_const: float = 1500.0
    damping_const: float = 3.2
    rest_length: float = 0.18
    gravity: float = 9.81
    stance_gravity: bool = False

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.spring_const > 0:
            raise ValueError(f"spring_const must be positive, got {self.spring_const}")
        if not self.damping_const >= 0:
            raise ValueError(f"damping_const must be non-negative, got {self.damping_const}")
        if not self.rest_length > 0:
            raise ValueError(f"rest_length must be positive, got {self.rest_length}")
        if not self.gravity > 0:
            raise ValueError(f"gravity must be positive, got {self.gravity}")

    @property
    def natural_freq(self) -> float:
        return math.sqrt(self.spring_const / self.mass)

    @property
    def damping_ratio(self) -> float:
        return self.damping_const / (2.0 * self.mass * self.natural_freq)


@dataclass(frozen=True)
class ControllerGains:
    """AD gain plus the software spring/damping used by the anchored per-limb law."""

    vertical_gain: float = 0.0
    software_damping: float = 0.25
    software_spring: float = 1500.0

    def __post_init__(self):
        if not self.vertical_gain >= 0:
            raise ValueError(f"vertical_gain must be non-negative, got {self.vertical_gain}")
        if not self.software_damping >= 0:
            raise ValueError(f"software_damping must be non-negative, got {self.software_damping}")
        if not self.software_spring > 0:
            raise ValueError(f"software_spring must be positive, got {self.software_spring}")


@dataclass(frozen=True)
class HybridState:
    phase: Phase
    chi: float
    chidot: float
    t: float = 0.0


@dataclass(frozen=True)
class PhaseCoords:
    x1: float
    x2: float

    @property
    def angle(self) -> float:
        return phase_angle(self)

    @property
    def degenerate(self) -> bool:
        """True only at the isolated rest point, where the angle is defined as 0."""
        return self.x1 == 0.0 and self.x2 == 0.0


def to_phase_coords(s: HybridState, p: TemplateParams) -> PhaseCoords:
    return PhaseCoords(s.chi - p.rest_length, s.chidot / p.natural_freq)


def from_phase_coords(x: PhaseCoords, p: TemplateParams, phase=Phase.STANCE, t=0.0) -> HybridState:
    return HybridState(phase, x.x1 + p.rest_length, x.x2 * p.natural_freq, t)


def phase_angle(x: PhaseCoords) -> float:
    """Quadrant-aware stance phase angle ``atan2(x1, x2)``, in (-pi, pi].

    With this convention ``cos(angle) = x2 / |x|``: the AD input always has the
    sign of the velocity. Returns 0 at the origin.
    """
    if x.x1 == 0.0 and x.x2 == 0.0:
        return 0.0
    a = math.atan2(x.x1, x.x2)
    return math.pi if a == -math.pi else a  # atan2(-0.0, x<0) gives -pi


def ad_cos(x1: float, x2: float) -> float:
    """``cos(atan2(x1, x2))`` evaluated without trigonometry; 1 at the origin."""
    r = math.hypot(x1, x2)
    if r == 0.0:
        return 1.0
    return x2 / r


def ad_torque(x: PhaseCoords, g: ControllerGains) -> float:
    """Mass-specific AD input ``k_t * cos(angle(x))``; bounded by ``k_t``."""
    return g.vertical_gain * ad_cos(x.x1, x.x2)


def flight_derivative(s: HybridState, p: TemplateParams) -> tuple[float, float]:
    return (s.chidot, -p.gravity)


def stance_derivative(s: HybridState, p: TemplateParams, tau: float = 0.0) -> tuple[float, float]:
    acc = tau - (p.damping_const / p.mass) * s.chidot - (p.spring_const / p.mass) * (s.chi - p.rest_length)
    if p.stance_gravity:
        acc -= p.gravity
    return (s.chidot, acc)


def closed_loop_stance(s: HybridState, p: TemplateParams, g: ControllerGains) -> tuple[float, float]:
    """Stance field under AD control, evaluated in scaled coordinates.

    ``xdot = -omega*J*x + e2 * (-2*beta*omega*x2 + k_t*cos(angle)/omega)`` with
    ``J = [[0, -1], [1, 0]]``, mapped back through ``chidot = omega*x2``.
    """
    w = p.natural_freq
    beta = p.damping_ratio
    x1 = s.chi - p.rest_length
    x2 = s.chidot / w
    x1dot = w * x2
    x2dot = -w * x1 - 2.0 * beta * w * x2 + g.vertical_gain * ad_cos(x1, x2) / w
    acc = w * x2dot
    if p.stance_gravity:
        acc -= p.gravity
    return (x1dot, acc)


def stance_energy(chi: float, chidot: float, p: TemplateParams) -> float:
    """Spring-mass energy ``mu/2 * (chidot^2 + omega^2 (chi - rho)^2)``."""
    w = p.natural_freq
    x1 = chi - p.rest_length
    return 0.5 * p.mass * (chidot * chidot + w * w * x1 * x1)


def flight_energy(chi: float, chidot: float, p: TemplateParams) -> float:
    """Kinetic plus potential energy measured from the rest-length height."""
    return 0.5 * p.mass * chidot * chidot + p.mass * p.gravity * (chi - p.rest_length)
