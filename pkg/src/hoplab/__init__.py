"""Hybrid hopping laboratory: actively damped vertical template, planar SLIP,
tripedal anchoring, return-map analysis and energetics."""

__version__ = "0.1.0"

from .analysis import apex_map, extract_limit_cycle, find_fixed_point, gain_sweep, moving_median
from .engine import EventKind, IntegratorConfig, Trajectory, locate_event, simulate
from .template import ControllerGains, HybridState, Phase, TemplateParams

__all__ = [
    "ControllerGains",
    "EventKind",
    "HybridState",
    "IntegratorConfig",
    "Phase",
    "TemplateParams",
    "Trajectory",
    "apex_map",
    "extract_limit_cycle",
    "find_fixed_point",
    "gain_sweep",
    "locate_event",
    "moving_median",
    "simulate",
]
