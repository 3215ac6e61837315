"""Experiment configuration: a sectioned key=value file, table presets and overrides.

Every key is declared in :data:`SCHEMA`; unknown sections or keys are rejected.
The resolved configuration renders canonically (schema order, 12 significant
digits) so that it can be echoed into a manifest and re-run bit for bit.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .errors import ConfigError

SCENARIOS = (
    "vertical-template",
    "gain-sweep",
    "limit-cycle",
    "slip-foreaft",
    "tripod-vertical",
    "tripod-pose",
    "energetics",
    "smooth-log",
)

LIMBS = ("LF", "LB", "RF", "RB")


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {s!r}")
    return v


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else _float(s)


def _int(s):
    return int(s)


def _opt_int(s):
    return None if s.strip().lower() in ("", "none") else int(s)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


def _opt_limb(s):
    v = s.strip()
    if v.lower() in ("", "none"):
        return None
    if v not in LIMBS:
        raise ValueError(f"unknown limb {v!r}")
    return v


def _float_list(s):
    """Comma-separated numbers, or ``start:stop:step`` with the stop included."""
    s = s.strip()
    if not s:
        return []
    if ":" in s:
        a, b, h = (_float(x) for x in s.split(":"))
        if not h > 0 or b < a:
            raise ValueError(f"bad range {s!r}")
        n = int(math.floor((b - a) / h + 1e-9))
        return [round(a + i * h, 12) for i in range(n + 1)]
    return [_float(x) for x in s.split(",")]


def _pair(s):
    parts = [_float(x) for x in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {s!r}")
    return tuple(parts)


def _scenario(s):
    v = s.strip()
    if v not in SCENARIOS:
        raise ValueError(f"unknown scenario {v!r}; choose from {', '.join(SCENARIOS)}")
    return v


_robot = {
    "mass": _float,
    "gravity": _float,
    "k_ss": _float,
    "beta_s": _float,
    "k_st": _float,
    "missing": _opt_limb,
    "initial_height": _opt_float,
    "initial_speed": _float,
    "pd_p_gain": _float,
    "pd_d_gain": _float,
}
for _j in LIMBS:
    _robot[f"rest_length_{_j}"] = _float
    _robot[f"angle_{_j}"] = _float
    _robot[f"angle_lo_{_j}"] = _float
    _robot[f"hip_{_j}"] = _pair
    _robot[f"z_offset_{_j}"] = _float

SCHEMA = {
    "experiment": {"scenario": _scenario, "preset": _str},
    "model": {
        "mass": _float,
        "spring_const": _float,
        "damping_const": _float,
        "rest_length": _float,
        "gravity": _float,
        "stance_gravity": _bool,
        "initial_position": _float,
        "floor": _opt_float,
    },
    "controller": {"vertical_gain": _float, "gains": _float_list},
    "integrator": {
        "step_size": _float,
        "event_tol": _float,
        "vel_tol": _float,
        "max_time": _float,
        "max_hops": _opt_int,
        "sample_every": _int,
    },
    "robot": _robot,
    "slip": {
        "theta_td": _float,
        "theta_lo": _float,
        "k_ss": _float,
        "beta_s": _float,
        "k_st": _float,
        "apex_height": _float,
        "apex_speed": _float,
        "strides": _int,
        "distance": _float,
        "n_limbs": _int,
        "find_fixed_point": _bool,
        "method": _str,
    },
    "analysis": {
        "transient": _int,
        "window": _int,
        "closure_tol": _float,
        "n_check": _int,
        "workers": _int,
        "k_st_list": _float_list,
        "gait": _str,
    },
    "power": {"k_tau": _float, "resistance": _float, "r_eff": _float, "motors_per_limb": _int},
    "smooth": {"input": _str, "column": _str, "window": _int},
}

DEFAULTS = {
    "experiment": {"scenario": "vertical-template", "preset": "none"},
    "model": {
        "mass": "6.173",
        "spring_const": "1500",
        "damping_const": "3.2",
        "rest_length": "0.18",
        "gravity": "9.81",
        "stance_gravity": "false",
        "initial_position": "0.28",
        "floor": "none",
    },
    "controller": {"vertical_gain": "5.5", "gains": "4.5:8.0:0.5"},
    "integrator": {
        "step_size": "0.0001",
        "event_tol": "1e-09",
        "vel_tol": "1e-09",
        "max_time": "60",
        "max_hops": "20",
        "sample_every": "1",
    },
    "robot": {
        "mass": "6.173",
        "gravity": "9.81",
        "k_ss": "1500",
        "beta_s": "0.25",
        "k_st": "5.5",
        "missing": "RF",
        "initial_height": "none",
        "initial_speed": "0",
        "pd_p_gain": "2.0",
        "pd_d_gain": "0.03",
        **{f"rest_length_{j}": "0.18" for j in LIMBS},
        **{f"angle_{j}": "0" for j in LIMBS},
        **{f"angle_lo_{j}": "0" for j in LIMBS},
        "hip_LF": "0.2,0.1",
        "hip_LB": "-0.2,0.1",
        "hip_RF": "0.2,-0.1",
        "hip_RB": "-0.2,-0.1",
        **{f"z_offset_{j}": "0" for j in LIMBS},
    },
    "slip": {
        "theta_td": "0.1",
        "theta_lo": "0.15",
        "k_ss": "1300",
        "beta_s": "0.25",
        "k_st": "8.0",
        "apex_height": "0.25",
        "apex_speed": "0.2",
        "strides": "10",
        "distance": "2.0",
        "n_limbs": "3",
        "find_fixed_point": "true",
        "method": "iterate",
    },
    "analysis": {
        "transient": "10",
        "window": "10",
        "closure_tol": "0.0001",
        "n_check": "2",
        "workers": "1",
        "k_st_list": "8.0",
        "gait": "tripedal",
    },
    "power": {"k_tau": "0.1", "resistance": "0.2", "r_eff": "0.1", "motors_per_limb": "2"},
    "smooth": {"input": "", "column": "", "window": "8"},
}

PRESETS = {
    "table1": {
        "model": {
            "mass": "6.173",
            "spring_const": "1500",
            "damping_const": "3.2",
            "rest_length": "0.18",
            "gravity": "9.81",
            "initial_position": "0.28",
        },
    },
    "table1-fig3": {
        "model": {
            "mass": "6.173",
            "spring_const": "1500",
            "damping_const": "11.9",
            "rest_length": "0.18",
            "gravity": "9.81",
            "initial_position": "0.28",
        },
    },
    "table2-vertical": {
        "robot": {
            "mass": "6.173",
            "beta_s": "0.25",
            "k_ss": "1500",
            "missing": "RF",
            "rest_length_LF": "0.17",
            "rest_length_LB": "0.138",
            "rest_length_RB": "0.18",
            "angle_LF": "0.0",
            "angle_LB": "-0.15",
            "angle_RB": "0.2",
            "pd_p_gain": "2.0",
            "pd_d_gain": "0.03",
        },
    },
    "table2-foreaft": {
        "robot": {
            "mass": "6.173",
            "beta_s": "0.25",
            "k_ss": "1300",
            "missing": "RF",
            "rest_length_LF": "0.18",
            "rest_length_LB": "0.145",
            "rest_length_RB": "0.18",
            "angle_LF": "-0.1",
            "angle_LB": "-0.05",
            "angle_RB": "0.1",
            "angle_lo_LF": "-0.15",
            "angle_lo_LB": "-0.1",
            "angle_lo_RB": "0.15",
            "pd_p_gain": "2.0",
            "pd_d_gain": "0.03",
        },
        "slip": {"k_ss": "1300", "beta_s": "0.25", "theta_td": "0.1", "theta_lo": "0.15", "n_limbs": "3"},
        "analysis": {"gait": "tripedal"},
    },
    "table3": {
        "robot": {
            "mass": "6.173",
            "beta_s": "0.25",
            "k_ss": "800",
            "missing": "none",
            **{f"rest_length_{j}": "0.18" for j in LIMBS},
            **{f"angle_{j}": "-0.05" for j in LIMBS},
            **{f"angle_lo_{j}": "-0.05" for j in LIMBS},
            "pd_p_gain": "2.0",
            "pd_d_gain": "0.03",
        },
        "slip": {"k_ss": "800", "beta_s": "0.25", "theta_td": "-0.05", "theta_lo": "-0.05", "n_limbs": "4"},
        "analysis": {"gait": "quadrupedal"},
    },
}


@dataclass
class ExperimentConfig:
    """Resolved configuration: raw strings per section plus their parsed values."""

    raw: dict
    values: dict

    @property
    def scenario(self) -> str:
        return self.values["experiment"]["scenario"]

    def section(self, name: str) -> dict:
        return self.values[name]

    def render(self) -> str:
        """Canonical text form; parsing it yields the same configuration."""
        out = []
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for k in keys:
                out.append(f"{k} = {self.raw[sec][k]}")
            out.append("")
        return "\n".join(out)


def _canonical(parse, raw: str) -> str:
    v = parse(raw)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return format(v, ".12g")
    if isinstance(v, tuple):
        return ",".join(format(x, ".12g") for x in v)
    if isinstance(v, list):
        return ",".join(format(x, ".12g") for x in v)
    return str(v)


def _apply(target: dict, section: str, key: str, value: str, where: str) -> None:
    if section not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{where}: unknown key {section}.{key}")
    target[section][key] = value.strip()


def parse_overrides(items) -> list:
    out = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        section, key = lhs.strip().split(".", 1)
        out.append((section, key, value))
    return out


def load_config(text: str | None = None, *, preset: str | None = None, overrides=(), source: str = "<config>") -> ExperimentConfig:
    """Layer defaults, a preset, the config text and ``section.key=value`` overrides, then validate.

    The preset named on the command line wins over one named in the file.
    """
    raw = {s: dict(v) for s, v in DEFAULTS.items()}
    file_vals = []
    if text is not None:
        cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from exc
        if cp.defaults():
            raise ConfigError(f"{source}: keys outside a section: {', '.join(cp.defaults())}")
        for sec in cp.sections():
            for key, value in cp.items(sec):
                file_vals.append((sec, key, value))
    name = preset
    if name is None:
        for sec, key, value in file_vals:
            if (sec, key) == ("experiment", "preset"):
                name = value.strip()
    if name is not None and name.lower() != "none":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        for sec, kv in PRESETS[name].items():
            raw[sec].update(kv)
        raw["experiment"]["preset"] = name
    for sec, key, value in file_vals:
        _apply(raw, sec, key, value, f"{source}: [{sec}] {key}")
    if preset is not None:
        raw["experiment"]["preset"] = preset
    for sec, key, value in overrides:
        _apply(raw, sec, key, value, f"--set {sec}.{key}")
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, parse in keys.items():
            try:
                values[sec][key] = parse(raw[sec][key])
                raw[sec][key] = _canonical(parse, raw[sec][key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{source}: {sec}.{key}: {exc}") from exc
    return ExperimentConfig(raw, values)
