"""Apex return maps, fixed points, gain sweeps, limit cycles and log smoothing."""
from __future__ import annotations

import bisect
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .engine import EventKind, IntegratorConfig, Trajectory, fmt, simulate
from .errors import FixedPointError, GaitFailure, NoLiftoff
from .template import ControllerGains, HybridState, Phase, TemplateParams


@dataclass(frozen=True)
class ApexMapSample:
    apex_in: float
    apex_out: float
    gain: float


def apex_map(
    a: float,
    params: TemplateParams,
    gains: ControllerGains,
    cfg: IntegratorConfig = IntegratorConfig(),
    *,
    floor: float | None = None,
    stance_limit: float = 5.0,
) -> float:
    """Next apex height after one touchdown-liftoff-apex sequence started at rest at height ``a``.

    Raises :class:`NoLiftoff` when stance lasts longer than ``stance_limit``.
    The floor check is off by default: the return map is studied as a
    mathematical object, and its fixed points may compress past the rest length.
    """
    rho = params.rest_length
    if a < rho:
        raise ValueError(f"apex {a} below rest length {rho}")
    if a - rho <= cfg.event_tol:
        start = HybridState(Phase.STANCE, rho, 0.0)
    else:
        start = HybridState(Phase.FLIGHT, a, 0.0)

    def _stop(ev, hops):
        return ev.kind == EventKind.APEX and hops >= 1

    traj = simulate(start, params, gains, cfg, record=False, stop=_stop, stance_limit=stance_limit, floor=floor)
    apexes = [e for e in traj.apexes() if e.hop_index >= 1]
    if not apexes:
        if traj.events and traj.events[-1].kind == EventKind.TOUCHDOWN:
            raise NoLiftoff(f"no liftoff within max_time={cfg.max_time} s")
        raise GaitFailure(f"no apex reached within max_time={cfg.max_time} s")
    return apexes[0].chi


@dataclass
class FixedPoint:
    apex: float
    iterations: int
    converged: bool
    at_rest: bool = False
    history: list = field(default_factory=list)


def find_fixed_point(
    params: TemplateParams,
    gains: ControllerGains,
    cfg: IntegratorConfig = IntegratorConfig(),
    a0: float | None = None,
    *,
    tol: float = 1e-6,
    max_iter: int = 60,
    method: str = "secant",
    map_fn: Callable[[float], float] | None = None,
) -> FixedPoint:
    """Fixed point of the apex return map.

    ``method="iterate"`` applies the map until successive apexes differ by less
    than ``tol``. ``"secant"`` solves ``P(a) = a`` in the coordinate
    ``s = sqrt(a - rho)`` (proportional to touchdown speed, where the map is
    close to affine) and falls back to a plain map step whenever the secant
    step leaves the domain. Convergence toward the rest length is reported as
    ``at_rest``. ``history`` holds the visited ``(a, P(a))`` pairs.
    """
    if method not in ("secant", "iterate"):
        raise ValueError(f"unknown method {method!r}")
    rho = params.rest_length
    P = map_fn or partial(apex_map, params=params, gains=gains, cfg=cfg)
    a = rho + 0.1 if a0 is None else a0
    if a < rho:
        raise ValueError(f"initial apex {a} below rest length {rho}")
    history = []
    prev = None
    for it in range(1, max_iter + 1):
        if a - rho <= tol:
            return FixedPoint(rho, it - 1, True, True, history)
        pa = P(a)
        history.append((a, pa))
        if abs(pa - a) < tol:
            return FixedPoint(a, it, True, False, history)
        nxt = pa
        s, ps = math.sqrt(a - rho), math.sqrt(max(pa - rho, 0.0))
        gs = ps - s
        if method == "secant" and prev is not None and gs != prev[1]:
            cand = s - gs * (s - prev[0]) / (gs - prev[1])
            if math.isfinite(cand) and cand >= 0.0:
                nxt = rho + cand * cand
        prev = (s, gs)
        a = max(nxt, rho)
    raise FixedPointError("apex return map did not converge", history)


@dataclass(frozen=True)
class SweepPoint:
    k_t: float
    apex_mean: float
    apex_std: float
    hops_to_converge: int

    @property
    def valid(self) -> bool:
        return math.isfinite(self.apex_mean)


@dataclass
class SweepResult:
    points: list
    slope: float
    intercept: float
    r2: float
    n_points: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k_t", "apex_mean", "apex_std", "hops_to_converge"))
        for p in self.points:
            w.writerow((fmt(p.k_t), fmt(p.apex_mean), fmt(p.apex_std), str(p.hops_to_converge)))
        return buf.getvalue()

    def fit_summary(self) -> str:
        return (
            f"slope={fmt(self.slope)}\n"
            f"intercept={fmt(self.intercept)}\n"
            f"r2={fmt(self.r2)}\n"
            f"n_points={self.n_points}\n"
        )


def affine_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line ``y = slope*x + intercept``; returns ``(slope, intercept, r2)``."""
    n = len(x)
    if n != len(y):
        raise ValueError("x and y differ in length")
    if n < 2:
        raise ValueError(f"affine fit needs at least 2 points, got {n}")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((xi - mx) ** 2 for xi in x)
    if sxx == 0.0:
        raise ValueError("affine fit needs at least 2 distinct x values")
    sxy = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = math.fsum((yi - my) ** 2 for yi in y)
    ss_res = math.fsum((yi - (slope * xi + intercept)) ** 2 for xi, yi in zip(x, y))
    r2 = 1.0 if syy == 0.0 else 1.0 - ss_res / syy
    return slope, intercept, min(1.0, max(0.0, r2))


def _sweep_point(k_t: float, params: TemplateParams, cfg: IntegratorConfig, n_check: int, a0) -> SweepPoint:
    gains = ControllerGains(vertical_gain=k_t)
    try:
        fp = find_fixed_point(params, gains, cfg, a0)
    except GaitFailure:
        return SweepPoint(k_t, math.nan, math.nan, 0)
    if fp.at_rest:
        return SweepPoint(k_t, math.nan, math.nan, fp.iterations)
    apexes = [fp.apex]
    for _ in range(n_check):
        apexes.append(apex_map(apexes[-1], params, gains, cfg))
    return SweepPoint(k_t, float(np.mean(apexes)), float(np.std(apexes)), fp.iterations)


def gain_sweep(
    params: TemplateParams,
    cfg: IntegratorConfig,
    gains: Sequence[float],
    *,
    a0: float | None = None,
    n_check: int = 2,
    workers: int = 1,
    solver: Callable[[float], SweepPoint] | None = None,
) -> SweepResult:
    """Steady apex at each gain plus an affine fit of apex against gain.

    Each point is an independent fixed-point solve, so ``workers > 1`` fans the
    gains out to processes; results are assembled in gain order. Gains without
    a hopping fixed point are kept as NaN gaps and excluded from the fit.
    """
    gains = sorted(float(k) for k in gains)
    if not gains:
        raise ValueError("gain list is empty")
    fn = solver or partial(_sweep_point, params=params, cfg=cfg, n_check=n_check, a0=a0)
    if workers > 1 and solver is None:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(fn, gains))
    else:
        points = [fn(k) for k in gains]
    valid = [p for p in points if p.valid]
    slope, intercept, r2 = affine_fit([p.k_t for p in valid], [p.apex_mean for p in valid])
    return SweepResult(points, slope, intercept, r2, len(valid))


@dataclass
class LimitCycle:
    samples: list  # (t, chi, chidot)
    period: float
    residual: float
    closure_tol: float

    @property
    def closed(self) -> bool:
        return self.residual <= self.closure_tol

    @property
    def max_chi(self) -> float:
        return max(s[1] for s in self.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "chi", "chidot"))
        for s in self.samples:
            w.writerow([fmt(v) for v in s])
        return buf.getvalue()


def extract_limit_cycle(traj: Trajectory, transient: int = 10, closure_tol: float = 1e-4) -> LimitCycle:
    """Final apex-to-apex segment of ``traj`` and its closure residual in ``(chi, chidot/omega)``."""
    apexes = [e for e in traj.apexes() if e.hop_index >= transient]
    if len(apexes) < 2:
        raise ValueError(f"need at least 2 apexes past {transient} transient hops, got {len(apexes)}")
    start, end = apexes[-2], apexes[-1]
    w = traj.params.get("natural_freq", 1.0)
    samples = [(start.t, start.chi, start.chidot)]
    for t, s in zip(traj.t, traj.states):
        if start.t < t < end.t:
            samples.append((t, s[0], s[1]))
    samples.append((end.t, end.chi, end.chidot))
    residual = math.hypot(end.chi - start.chi, (end.chidot - start.chidot) / w)
    return LimitCycle(samples, end.t - start.t, residual, closure_tol)


def apex_spread(traj: Trajectory, transient: int = 10, window: int = 10) -> float:
    """Max minus min of the ``window`` apexes that follow the first ``transient`` ones."""
    apexes = [e.chi for e in traj.apexes()][transient : transient + window]
    if len(apexes) < window:
        raise ValueError(f"trajectory has only {len(apexes)} apexes after {transient} transient hops")
    return max(apexes) - min(apexes)


def moving_median(series: Sequence[float], window: int = 8) -> np.ndarray:
    """Centered sliding median, truncated at the edges.

    Sample ``i`` uses indices ``i - window//2 .. i + (window - 1 - window//2)``
    (for even windows one more sample before than after). Even-length windows
    take the mean of the two central order statistics.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = [float(v) for v in series]
    n = len(x)
    if n == 0:
        raise ValueError("series is empty")
    before = window // 2
    after = window - 1 - before
    out = np.empty(n)
    win = sorted(x[0 : min(n, after + 1)])
    lo, hi = 0, min(n, after + 1)  # current window is x[lo:hi]
    for i in range(n):
        new_lo = max(0, i - before)
        new_hi = min(n, i + after + 1)
        while hi < new_hi:
            bisect.insort(win, x[hi])
            hi += 1
        while lo < new_lo:
            del win[bisect.bisect_left(win, x[lo])]
            lo += 1
        m = len(win)
        if m % 2:
            out[i] = win[m // 2]
        else:
            out[i] = 0.5 * (win[m // 2 - 1] + win[m // 2])
    return out


def extract_apexes(
    heights: Sequence[float],
    dt: float,
    rest_height: float,
    *,
    prominence: float = 0.005,
    t0: float = 0.0,
) -> list:
    """Apex ``(t, height)`` pairs from a uniformly sampled height log.

    Local maxima strictly above ``rest_height`` whose prominence is at least
    ``prominence`` (metres) are kept.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = np.asarray(heights, dtype=float)
    if h.size < 3:
        return []
    idx, _ = find_peaks(h, prominence=prominence)
    return [(t0 + i * dt, float(h[i])) for i in idx if h[i] > rest_height]
