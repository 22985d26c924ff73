"""Evaluation metrics: trajectory error, parameter error (segment and grid
modes), switch-count error, Hausdorff switch distance, and white-noise
injection for robustness studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    MixedSchedule,
    ParamSchedule,
    PiecewiseScalar,
    PiecewiseSchedule,
    Constant,
    TimeSeries,
    schedule_on_grid,
)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    traj_error: float
    param_error_segment: float | None = None
    param_error_grid: float | None = None
    switch_count_error: int | None = None
    hausdorff: float | None = None
    n_params: int | None = None
    n_samples: int | None = None
    n_switches_true: int | None = None
    n_switches_detected: int | None = None

    def as_dict(self) -> dict:
        return {
            "traj_error": self.traj_error,
            "param_error_segment": self.param_error_segment,
            "param_error_grid": self.param_error_grid,
            "switch_count_error": self.switch_count_error,
            "hausdorff": self.hausdorff,
            "n_params": self.n_params,
            "n_samples": self.n_samples,
            "n_switches_true": self.n_switches_true,
            "n_switches_detected": self.n_switches_detected,
        }


def traj_error(data: TimeSeries, model_traj: TimeSeries) -> float:
    """Frobenius norm of (data - model) divided by the sample count N."""
    if data.X.shape != model_traj.X.shape:
        raise MetricsError(f"shape mismatch: {data.X.shape} vs {model_traj.X.shape}")
    if not np.allclose(data.t, model_traj.t):
        raise MetricsError("time grids differ")
    return float(np.linalg.norm(data.X - model_traj.X) / data.n_samples)


def _segment_stack(schedule: ParamSchedule, static_mask: tuple[bool, ...] | None) -> np.ndarray:
    """Stack per-segment values of varying parameters (segment-major), then
    static parameter values once each."""
    n_p = schedule.n_params
    mask = static_mask if static_mask is not None else tuple(False for _ in range(n_p))
    if len(mask) != n_p:
        raise MetricsError("static mask length must equal parameter count")
    if isinstance(schedule, PiecewiseSchedule):
        varying = [
            schedule.values[s, j]
            for s in range(schedule.n_segments)
            for j in range(n_p)
            if not mask[j]
        ]
        statics = [schedule.values[0, j] for j in range(n_p) if mask[j]]
        return np.array(varying + statics, dtype=float)
    if isinstance(schedule, MixedSchedule):
        varying = []
        statics = []
        for j, comp in enumerate(schedule.components):
            if isinstance(comp, PiecewiseScalar):
                vals = list(comp.values)
            elif isinstance(comp, Constant):
                vals = [comp.value]
            else:
                raise MetricsError("segment mode needs piecewise or constant components")
            if mask[j]:
                statics.extend(vals[:1])
            else:
                varying.extend(vals)
        return np.array(varying + statics, dtype=float)
    raise MetricsError("segment mode requires a piecewise-style schedule")


def param_error(
    true: ParamSchedule,
    est: ParamSchedule,
    mode: str = "segment",
    tgrid: np.ndarray | None = None,
    static_mask: tuple[bool, ...] | None = None,
) -> float:
    """Distance between schedules divided by the parameter count.

    segment mode stacks per-segment values (static parameters counted once);
    grid mode evaluates both schedules on tgrid and takes the Frobenius
    distance.
    """
    if true.n_params != est.n_params:
        raise MetricsError(f"parameter count mismatch: {true.n_params} vs {est.n_params}")
    n_p = true.n_params
    if mode == "grid":
        if tgrid is None:
            raise MetricsError("grid mode needs a time grid")
        pt = schedule_on_grid(true, tgrid)
        pe = schedule_on_grid(est, tgrid)
        return float(np.linalg.norm(pt - pe) / n_p)
    if mode != "segment":
        raise MetricsError(f"mode must be 'segment' or 'grid', got {mode!r}")
    a = _segment_stack(true, static_mask)
    b = _segment_stack(est, static_mask)
    if a.size != b.size:
        raise MetricsError(f"segment-count mismatch: {a.size} vs {b.size} stacked values")
    return float(np.linalg.norm(a - b) / n_p)


def switch_number_error(n_true: int, n_detected: int) -> int:
    """Signed count gap (true - detected): positive means under-detection."""
    if n_true < 0 or n_detected < 0:
        raise MetricsError("switch counts must be >= 0")
    return int(n_true) - int(n_detected)


def hausdorff(true_times, est_times) -> float:
    """Worst-case distance between the two switch-time sets (symmetric).

    Both empty -> 0; exactly one empty -> +inf.
    """
    a = np.atleast_1d(np.asarray(true_times, dtype=float))
    b = np.atleast_1d(np.asarray(est_times, dtype=float))
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return math.inf
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def add_white_noise(data: TimeSeries, sigma: float, seed: int) -> TimeSeries:
    """Add independent Gaussian(0, sigma^2) draws to every entry."""
    if sigma < 0:
        raise MetricsError("sigma must be >= 0")
    if sigma == 0:
        return data
    rng = np.random.default_rng(seed)
    return TimeSeries(data.t, data.X + rng.normal(0.0, sigma, size=data.X.shape), data.names)


def grid_switch_indices(tgrid: np.ndarray, switch_times) -> tuple[int, ...]:
    """Map true switch times onto the sampling grid.

    A breakpoint b maps to the first sample index strictly past the midpoint
    of its straddling interval: the first sample that mostly reflects the
    new regime.  A sample produced by an integration step straddling b
    blends both regimes, so the detectable regime boundary in data sits one
    sample later whenever the straddling sample is not majority-new; an
    exact midpoint tie resolves to the later sample.
    """
    t = np.asarray(tgrid, dtype=float)
    out = []
    for b in np.atleast_1d(np.asarray(switch_times, dtype=float)):
        if not (t[0] < b < t[-1]):
            raise MetricsError(f"switch time {b} outside the grid span")
        j = int(np.searchsorted(t, b, side="right"))
        dt_local = t[j] - t[j - 1]
        out.append(j if t[j] > b + 0.5 * dt_local + 1e-9 * dt_local else j + 1)
    return tuple(out)


def spearman_rho(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise MetricsError("need two same-length vectors of length >= 2")
    rx = _avg_ranks(x)
    ry = _avg_ranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if denom == 0:
        return 0.0
    return float(sx @ sy / denom)


def _avg_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j)
        i = j + 1
    return ranks
