"""Scenario execution: config in, deterministic files out."""
from __future__ import annotations

import csv
import io
import os
import re
from pathlib import Path

from . import __version__
from .analysis import apex_spread, extract_limit_cycle, gain_sweep, moving_median
from .config import LIMBS, ExperimentConfig
from .energetics import REPORT_COLUMNS, PowerModel, trial_report
from .engine import EventKind, IntegratorConfig, fmt, simulate
from .errors import ConfigError, FixedPointError, GaitFailure, HoplabError
from .slip import SlipParams, SteppingPolicy, find_velocity_fixed_point, simulate_slip, stride_table_csv
from .template import ControllerGains, HybridState, Phase, TemplateParams
from .tripod import RobotParams, check_rebalanced_pose, simulate_tripod


class ScenarioFailure(HoplabError):
    """The scenario ran but its experiment failed; partial outputs were written."""


def integrator_config(cfg: ExperimentConfig, **overrides) -> IntegratorConfig:
    kw = dict(cfg.section("integrator"))
    kw.update(overrides)
    return IntegratorConfig(**kw)


def template_params(cfg: ExperimentConfig) -> TemplateParams:
    m = cfg.section("model")
    return TemplateParams(
        mass=m["mass"],
        spring_const=m["spring_const"],
        damping_const=m["damping_const"],
        rest_length=m["rest_length"],
        gravity=m["gravity"],
        stance_gravity=m["stance_gravity"],
    )


def robot_params(cfg: ExperimentConfig) -> RobotParams:
    r = cfg.section("robot")
    return RobotParams(
        mass=r["mass"],
        gravity=r["gravity"],
        k_ss=r["k_ss"],
        beta_s=r["beta_s"],
        k_st=r["k_st"],
        missing=r["missing"],
        rest_lengths={j: r[f"rest_length_{j}"] for j in LIMBS},
        angles={j: r[f"angle_{j}"] for j in LIMBS},
        liftoff_angles={j: r[f"angle_lo_{j}"] for j in LIMBS},
        hips={j: r[f"hip_{j}"] for j in LIMBS},
        z_offsets={j: r[f"z_offset_{j}"] for j in LIMBS},
    )


def slip_setup(cfg: ExperimentConfig, k_st: float | None = None) -> tuple[SlipParams, SteppingPolicy]:
    s = cfg.section("slip")
    r = cfg.section("robot")
    params = SlipParams(mass=r["mass"], rest_length=cfg.section("model")["rest_length"], gravity=r["gravity"])
    policy = SteppingPolicy(
        theta_td=s["theta_td"],
        theta_lo=s["theta_lo"],
        k_ss=s["k_ss"],
        beta_s=s["beta_s"],
        k_st=s["k_st"] if k_st is None else k_st,
    )
    return params, policy


def _initial_template_state(cfg: ExperimentConfig, p: TemplateParams) -> HybridState:
    x0 = cfg.section("model")["initial_position"]
    if x0 < p.rest_length:
        raise ConfigError(f"model.initial_position {x0} below the rest length")
    return HybridState(Phase.STANCE if x0 == p.rest_length else Phase.FLIGHT, x0, 0.0)


def _write(out: Path, name: str, text: str) -> None:
    with open(out / name, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _kv(items) -> str:
    return "".join(f"{k}={v}\n" for k, v in items)


def _gain_tag(g: float) -> str:
    return format(g, ".12g")


def run_vertical_template(cfg: ExperimentConfig, out: Path) -> None:
    p = template_params(cfg)
    gains = ControllerGains(vertical_gain=cfg.section("controller")["vertical_gain"])
    traj = simulate(_initial_template_state(cfg, p), p, gains, integrator_config(cfg), floor=cfg.section("model")["floor"])
    _write(out, "trajectory.csv", traj.to_csv())
    _write(out, "events.csv", traj.events_to_csv())
    apexes = traj.apexes()
    _write(
        out,
        "summary.txt",
        _kv(
            [
                ("hops", traj.hops),
                ("apexes", len(apexes)),
                ("last_apex_m", fmt(apexes[-1].chi) if apexes else "nan"),
                ("t_end_s", fmt(traj.t[-1])),
            ]
        ),
    )


def run_gain_sweep(cfg: ExperimentConfig, out: Path) -> None:
    gains = cfg.section("controller")["gains"]
    if not gains:
        raise ConfigError("controller.gains: gain list is empty")
    a = cfg.section("analysis")
    res = gain_sweep(
        template_params(cfg),
        integrator_config(cfg, max_hops=None),
        gains,
        n_check=a["n_check"],
        workers=a["workers"],
    )
    _write(out, "sweep.csv", res.to_csv())
    _write(out, "fit.txt", res.fit_summary())


def run_limit_cycle(cfg: ExperimentConfig, out: Path) -> None:
    gains = cfg.section("controller")["gains"]
    if not gains:
        raise ConfigError("controller.gains: gain list is empty")
    a = cfg.section("analysis")
    p = template_params(cfg)
    hops = a["transient"] + a["window"] + 1
    icfg = integrator_config(cfg, max_hops=hops)
    lines = []
    for g in gains:
        traj = simulate(_initial_template_state(cfg, p), p, ControllerGains(vertical_gain=g), icfg, floor=cfg.section("model")["floor"])
        cyc = extract_limit_cycle(traj, a["transient"], a["closure_tol"])
        spread = apex_spread(traj, a["transient"], a["window"])
        _write(out, f"cycle_kt{_gain_tag(g)}.csv", cyc.to_csv())
        lines += [
            (f"kt{_gain_tag(g)}.apex_spread_m", fmt(spread)),
            (f"kt{_gain_tag(g)}.closure_residual", fmt(cyc.residual)),
            (f"kt{_gain_tag(g)}.closed", int(cyc.closed)),
            (f"kt{_gain_tag(g)}.max_chi_m", fmt(cyc.max_chi)),
            (f"kt{_gain_tag(g)}.period_s", fmt(cyc.period)),
        ]
    _write(out, "cycles.txt", _kv(lines))


def run_slip_foreaft(cfg: ExperimentConfig, out: Path) -> None:
    s = cfg.section("slip")
    params, policy = slip_setup(cfg)
    icfg = integrator_config(cfg, max_hops=None)
    failure = None
    try:
        traj = simulate_slip((s["apex_height"], s["apex_speed"]), params, policy, icfg, strides=s["strides"])
    except GaitFailure as exc:
        traj, failure = exc.trajectory, exc
    _write(out, "trajectory.csv", traj.to_csv())
    apexes = [(s["apex_height"], s["apex_speed"])] + [(e.state[1], e.state[2]) for e in traj.apexes() if e.hop_index >= 1]
    _write(out, "strides.csv", stride_table_csv(apexes))
    lines = [("strides_completed", len(apexes) - 1), ("status", "ok" if failure is None else type(failure).__name__)]
    if s["find_fixed_point"]:
        try:
            fp = find_velocity_fixed_point(params, policy, (s["apex_height"], s["apex_speed"]), icfg, method=s["method"])
            lines += [
                ("fixed_point", "found"),
                ("z_star_m", fmt(fp.z)),
                ("ydot_star_mps", fmt(fp.ydot)),
                ("slope", fmt(fp.slope)),
                ("attracting", int(fp.attracting)),
                ("iterations", fp.iterations),
            ]
        except FixedPointError as exc:
            lines += [("fixed_point", "not_found"), ("iterates", len(exc.history))]
            failure = failure or exc
    _write(out, "fixed_point.txt", _kv(lines))
    if failure is not None:
        raise ScenarioFailure(f"slip-foreaft: {failure}")


def _tripod_initial(cfg: ExperimentConfig, p: RobotParams) -> float:
    z0 = cfg.section("robot")["initial_height"]
    if z0 is None:
        z0 = max(p.rest_lengths[j] + p.offset(j) for j in p.functional)
    return z0


def run_tripod_vertical(cfg: ExperimentConfig, out: Path) -> None:
    p = robot_params(cfg)
    traj = simulate_tripod(_tripod_initial(cfg, p), cfg.section("robot")["initial_speed"], p, integrator_config(cfg))
    _write(out, "trajectory.csv", traj.to_csv())
    _write(out, "events.csv", traj.events_to_csv())
    apexes = traj.apexes()
    lifts = [e for e in traj.events_of(EventKind.LIFTOFF)]
    _write(
        out,
        "summary.txt",
        _kv(
            [
                ("hops", traj.hops),
                ("body_liftoffs", len(lifts)),
                ("apexes", len(apexes)),
                ("last_apex_m", fmt(apexes[-1].chi) if apexes else "nan"),
                ("t_end_s", fmt(traj.t[-1])),
            ]
        ),
    )


def run_tripod_pose(cfg: ExperimentConfig, out: Path) -> None:
    _write(out, "pose.txt", check_rebalanced_pose(robot_params(cfg)).to_text())


def run_energetics(cfg: ExperimentConfig, out: Path) -> None:
    s = cfg.section("slip")
    a = cfg.section("analysis")
    pw = cfg.section("power")
    model = PowerModel(pw["k_tau"], pw["resistance"], pw["r_eff"], pw["motors_per_limb"])
    icfg = integrator_config(cfg, max_hops=None)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    text = []
    k_list = a["k_st_list"] or [s["k_st"]]
    for k in k_list:
        params, policy = slip_setup(cfg, k)
        status = "ok"
        try:
            traj = simulate_slip((s["apex_height"], s["apex_speed"]), params, policy, icfg, distance=s["distance"])
        except GaitFailure as exc:
            traj, status = exc.trajectory, type(exc).__name__
        rep = trial_report(traj, model, n_functional=s["n_limbs"], gait=a["gait"], k_st=k)
        w.writerow(rep.csv_row())
        text.append(f"[k_st={fmt(k)}]\nstatus={status}\ntarget_distance_m={fmt(s['distance'])}\n" + rep.to_text())
    _write(out, "energetics.csv", buf.getvalue())
    _write(out, "energetics.txt", "\n".join(text))


def smooth_csv(text: str, column: str, window: int = 8) -> str:
    """Apply the moving median to one column; every other cell is passed through untouched."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("input CSV is empty")
    header, body = rows[0], rows[1:]
    if column not in header:
        raise KeyError(f"column {column!r} not in header {header}")
    k = header.index(column)
    vals = []
    for i, row in enumerate(body, start=1):
        try:
            vals.append(float(row[k]))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"row {i}: non-numeric value in column {column!r}") from exc
    smoothed = moving_median(vals, window) if vals else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row, v, m in zip(body, vals, smoothed):
        row = list(row)
        if m != v:
            row[k] = fmt(m)
        w.writerow(row)
    return buf.getvalue()


def run_smooth_log(cfg: ExperimentConfig, out: Path) -> None:
    s = cfg.section("smooth")
    if not s["input"] or not s["column"]:
        raise ConfigError("smooth.input and smooth.column are required")
    with open(s["input"], newline="", encoding="utf-8") as fh:
        text = fh.read()
    _write(out, "smoothed.csv", smooth_csv(text, s["column"], s["window"]))


RUNNERS = {
    "vertical-template": run_vertical_template,
    "gain-sweep": run_gain_sweep,
    "limit-cycle": run_limit_cycle,
    "slip-foreaft": run_slip_foreaft,
    "tripod-vertical": run_tripod_vertical,
    "tripod-pose": run_tripod_pose,
    "energetics": run_energetics,
    "smooth-log": run_smooth_log,
}


def manifest_text(cfg: ExperimentConfig) -> str:
    """Resolved configuration plus tool version; itself a valid config file."""
    return f"# hoplab {__version__}\n# scenario {cfg.scenario}\n" + cfg.render()


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike) -> Path:
    """Execute the configured scenario into ``out``. The manifest is written first."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "manifest.ini", manifest_text(cfg))
    RUNNERS[cfg.scenario](cfg, out)
    return out


# figures


def _read_csv(path: Path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], rows[1:]


def _read_kv(path: Path) -> dict:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def figure_data(inputs, out: str | os.PathLike) -> list:
    """Write plain-text plot data for every figure whose inputs are found under ``inputs``."""
    out = Path(out)
    written = {}
    sweeps, cycles, energetics = [], [], []
    for d in inputs:
        d = Path(d)
        if not d.is_dir():
            raise FileNotFoundError(f"input directory {d} not found")
        if (d / "sweep.csv").exists():
            sweeps.append(d)
        cycles += sorted(d.glob("cycle_kt*.csv"))
        if (d / "energetics.csv").exists():
            energetics.append(d / "energetics.csv")
    if not (sweeps or cycles or energetics):
        raise FileNotFoundError("no sweep, limit-cycle or energetics outputs in the given inputs")
    out.mkdir(parents=True, exist_ok=True)

    if sweeps:
        lines = ["# k_t apex_mean apex_std fit"]
        for d in sweeps:
            header, rows = _read_csv(d / "sweep.csv")
            if not rows:
                raise ValueError(f"{d / 'sweep.csv'}: empty sweep")
            fit = _read_kv(d / "fit.txt")
            slope, intercept = float(fit["slope"]), float(fit["intercept"])
            for r in rows:
                k = float(r[0])
                lines.append(f"{r[0]} {r[1]} {r[2]} {fmt(slope * k + intercept)}")
        written["fig3.dat"] = "\n".join(lines) + "\n"

    if cycles:
        blocks = []
        for path in cycles:
            tag = re.sub(r"^cycle_kt|\.csv$", "", path.name)
            _, rows = _read_csv(path)
            blocks.append(f"# series k_t={tag}\n# chi chidot\n" + "".join(f"{r[1]} {r[2]}\n" for r in rows))
        written["fig5.dat"] = "\n\n".join(blocks)

    if energetics:
        series = {}
        for path in energetics:
            header, rows = _read_csv(path)
            for r in rows:
                rec = dict(zip(header, r))
                series.setdefault(rec["gait"], []).append(rec)
        f6, f7 = [], []
        for gait in sorted(series):
            recs = series[gait]
            f6.append(f"# series gait={gait}\n# k_st sigma\n" + "".join(f"{r['k_st']} {r['sigma']}\n" for r in recs))
            f7.append(f"# series gait={gait}\n# vbar_mps sigma\n" + "".join(f"{r['vbar_mps']} {r['sigma']}\n" for r in recs))
        written["fig6.dat"] = "\n\n".join(f6)
        written["fig7.dat"] = "\n\n".join(f7)

    for name in sorted(written):
        _write(out, name, written[name])
    return sorted(written)
