"""Derivative-free optimizers (Nelder-Mead, Powell, differential evolution)
and the piecewise parameter-fitting pipeline that minimizes trajectory
error per segment, with optional bounds and static-parameter sharing.

Static parameters are fitted jointly: one decision vector holds the shared
static values followed by per-segment values of the varying parameters, and
the objective sums the per-segment trajectory errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detect import SwitchSet
from .integrate import DivergenceError, IntegratorChoice, simulate
from .model import (
    ModelError,
    ModelSpec,
    ParamSchedule,
    PiecewiseSchedule,
    TimeSeries,
    constant_schedule,
)

DIVERGENCE_PENALTY = 1e12

OPTIMIZERS = ("nelder_mead", "powell", "differential_evolution")


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DESettings:
    population_factor: int = 15  # population size per dimension
    mutation: float = 0.8
    crossover: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.population_factor < 1:
            raise FitError("population_factor must be >= 1")
        if not 0.0 < self.mutation <= 2.0:
            raise FitError("mutation factor must be in (0, 2]")
        if not 0.0 <= self.crossover <= 1.0:
            raise FitError("crossover rate must be in [0, 1]")


@dataclass(frozen=True)
class FitConfig:
    optimizer: str = "nelder_mead"
    bounds: tuple[tuple[float, float], ...] | None = None
    max_evals: int = 0  # 0 -> a dimension-dependent default
    f_tol: float = 1e-9
    x_tol: float = 1e-6
    de: DESettings = field(default_factory=DESettings)
    initial_guess: tuple[float, ...] | None = None
    integrator: IntegratorChoice = field(default_factory=IntegratorChoice)
    chain_segments: bool = False

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise FitError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.optimizer == "differential_evolution" and self.bounds is None:
            raise FitError("differential_evolution requires bounds")
        if self.bounds is not None:
            for lo, hi in self.bounds:
                if not lo < hi:
                    raise FitError(f"bound [{lo}, {hi}] must have lo < hi")

    def eval_budget(self, dim: int) -> int:
        return self.max_evals if self.max_evals > 0 else 1000 * max(dim, 1)


@dataclass(frozen=True)
class OptResult:
    x: np.ndarray
    fx: float
    evals: int


class _Budget:
    """Evaluation counter with optional clipping to bounds."""

    def __init__(self, f: Callable, max_evals: int, bounds: np.ndarray | None):
        self.f = f
        self.max_evals = max_evals
        self.bounds = bounds
        self.evals = 0

    def clip(self, x: np.ndarray) -> np.ndarray:
        if self.bounds is None:
            return x
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])

    def __call__(self, x: np.ndarray) -> float:
        self.evals += 1
        v = float(self.f(self.clip(np.asarray(x, dtype=float))))
        return v if math.isfinite(v) else math.inf

    @property
    def exhausted(self) -> bool:
        return self.evals >= self.max_evals


def _as_bounds(bounds, dim: int) -> np.ndarray | None:
    if bounds is None:
        return None
    b = np.asarray(bounds, dtype=float)
    if b.shape != (dim, 2):
        raise FitError(f"bounds must be ({dim}, 2), got {b.shape}")
    return b


def nelder_mead(f: Callable, x0, cfg: FitConfig) -> OptResult:
    """Simplex search with reflection 1, expansion 2, contraction 0.5, and
    shrink 0.5; the initial simplex perturbs each coordinate by 5% (0.00025
    for zero coordinates).  Bounds are enforced by clipping trial points."""
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    bounds = _as_bounds(cfg.bounds, dim)
    budget = _Budget(f, cfg.eval_budget(dim), bounds)

    sim = np.empty((dim + 1, dim))
    sim[0] = budget.clip(x0)
    for i in range(dim):
        v = x0.copy()
        v[i] = v[i] * 1.05 if v[i] != 0.0 else 0.00025
        sim[i + 1] = budget.clip(v)
    fsim = np.array([budget(v) for v in sim])
    if not math.isfinite(fsim[0]):
        raise FitError("objective is not finite at the initial point")

    while not budget.exhausted:
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        if (
            np.max(np.abs(sim[1:] - sim[0])) <= cfg.x_tol
            and np.max(np.abs(fsim[1:] - fsim[0])) <= cfg.f_tol
        ):
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = budget(xr)
        if fr < fsim[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = budget(xe)
            sim[-1], fsim[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
            continue
        if fr < fsim[-1]:  # outside contraction
            xc = centroid + 0.5 * (centroid - sim[-1])
            fc = budget(xc)
            if fc <= fr:
                sim[-1], fsim[-1] = xc, fc
                continue
        else:  # inside contraction
            xc = centroid - 0.5 * (centroid - sim[-1])
            fc = budget(xc)
            if fc < fsim[-1]:
                sim[-1], fsim[-1] = xc, fc
                continue
        for i in range(1, dim + 1):  # shrink toward the best vertex
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fsim[i] = budget(sim[i])

    best = int(np.argmin(fsim))
    return OptResult(sim[best].copy(), float(fsim[best]), budget.evals)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _bracket(g: Callable, budget: _Budget) -> tuple[float, float, float]:
    """Expand from [0, 1] until a triple a < b < c with g(b) below both ends."""
    a, b = 0.0, 1.0
    fa, fb = g(a), g(b)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa  # downhill is toward a; search the other way
    c = b + (1.0 + _GOLDEN) * (b - a)
    fc = g(c)
    while fc < fb and not budget.exhausted:
        a, b, fa, fb = b, c, fb, fc
        c = b + (1.0 + _GOLDEN) * (b - a)
        fc = g(c)
    return (a, c) if a < c else (c, a), b, fb


def _golden_section(g: Callable, lo: float, hi: float, x_tol: float, budget: _Budget):
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = g(c), g(d)
    while abs(hi - lo) > x_tol * (1.0 + abs(lo) + abs(hi)) and not budget.exhausted:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = g(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = g(d)
    return (c, fc) if fc < fd else (d, fd)


def _line_minimize(budget: _Budget, x: np.ndarray, direction: np.ndarray, x_tol: float):
    def g(alpha: float) -> float:
        return budget(x + alpha * direction)

    (lo, hi), mid, fmid = _bracket(g, budget)
    alpha, falpha = _golden_section(g, lo, hi, x_tol, budget)
    if fmid < falpha:
        alpha, falpha = mid, fmid
    return x + alpha * direction, falpha


def powell(f: Callable, x0, cfg: FitConfig) -> OptResult:
    """Powell's conjugate-direction method: one bracketing + golden-section
    line minimization per direction, with the classic direction-set update
    (replace the direction of largest decrease by the net displacement)."""
    x = np.asarray(x0, dtype=float).copy()
    dim = x.size
    bounds = _as_bounds(cfg.bounds, dim)
    budget = _Budget(f, cfg.eval_budget(dim), bounds)
    fx = budget(x)
    if not math.isfinite(fx):
        raise FitError("objective is not finite at the initial point")
    directions = [np.eye(dim)[i] for i in range(dim)]

    while not budget.exhausted:
        x_start, f_start = x.copy(), fx
        biggest_drop, biggest_i = 0.0, 0
        for i, u in enumerate(directions):
            f_before = fx
            x, fx = _line_minimize(budget, x, u, cfg.x_tol)
            if f_before - fx > biggest_drop:
                biggest_drop, biggest_i = f_before - fx, i
        if 2.0 * (f_start - fx) <= cfg.f_tol * (abs(f_start) + abs(fx)) + 1e-20:
            break
        # extrapolated-point test for replacing a direction
        x_ext = 2.0 * x - x_start
        f_ext = budget(x_ext)
        if f_ext < f_start:
            t = (
                2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - biggest_drop) ** 2
                - biggest_drop * (f_start - f_ext) ** 2
            )
            if t < 0.0:
                u_new = x - x_start
                norm = np.linalg.norm(u_new)
                if norm > 0:
                    x, fx = _line_minimize(budget, x, u_new / norm, cfg.x_tol)
                    directions[biggest_i] = directions[-1]
                    directions[-1] = u_new / norm

    return OptResult(budget.clip(x), fx, budget.evals)


def differential_evolution(f: Callable, bounds, cfg: FitConfig) -> OptResult:
    """rand/1/bin differential evolution: uniform initialization inside the
    bounds, mutation factor F and crossover rate CR from the config, and
    out-of-bounds trial coordinates resampled uniformly.  Deterministic for
    a fixed seed."""
    b = _as_bounds(bounds, len(bounds))
    if b is None:
        raise FitError("differential_evolution requires bounds")
    dim = b.shape[0]
    lo, hi = b[:, 0], b[:, 1]
    rng = np.random.default_rng(cfg.de.seed)
    pop_size = max(cfg.de.population_factor * dim, 5)
    budget = _Budget(f, cfg.eval_budget(dim), None)
    F, CR = cfg.de.mutation, cfg.de.crossover

    pop = lo + rng.random((pop_size, dim)) * (hi - lo)
    fpop = np.array([budget(v) for v in pop])
    generations = max(cfg.eval_budget(dim) // pop_size - 1, 0)

    for _ in range(generations):
        new_pop = pop.copy()
        new_f = fpop.copy()
        for i in range(pop_size):
            r1, r2, r3 = _distinct_indices(rng, pop_size, i)
            mutant = pop[r1] + F * (pop[r2] - pop[r3])
            out = (mutant < lo) | (mutant > hi)
            if np.any(out):
                mutant[out] = lo[out] + rng.random(int(out.sum())) * (hi - lo)[out]
            cross = rng.random(dim) < CR
            cross[rng.integers(dim)] = True
            trial = np.where(cross, mutant, pop[i])
            ft = budget(trial)
            if ft <= fpop[i]:
                new_pop[i], new_f[i] = trial, ft
        pop, fpop = new_pop, new_f
        mean_f = float(np.mean(fpop))
        if np.std(fpop) <= cfg.f_tol * max(1.0, abs(mean_f)):
            break

    best = int(np.argmin(fpop))
    return OptResult(pop[best].copy(), float(fpop[best]), budget.evals)


def _distinct_indices(rng, n: int, exclude: int) -> tuple[int, int, int]:
    picks: list[int] = []
    while len(picks) < 3:
        r = int(rng.integers(n))
        if r != exclude and r not in picks:
            picks.append(r)
    return picks[0], picks[1], picks[2]


def minimize(f: Callable, x0, cfg: FitConfig) -> OptResult:
    if cfg.optimizer == "nelder_mead":
        return nelder_mead(f, x0, cfg)
    if cfg.optimizer == "powell":
        return powell(f, x0, cfg)
    return differential_evolution(f, cfg.bounds, cfg)


# --- trajectory objectives ------------------------------------------------------


def segment_objective(
    model: ModelSpec,
    data: TimeSeries,
    segment: tuple[int, int],
    params,
    choice: IntegratorChoice = IntegratorChoice(),
) -> float:
    """Frobenius norm of (data - model) over one index range [lo, hi),
    simulating from the data column at lo under constant parameters.

    Divergence yields a large penalty instead of an error so optimizers can
    step through bad candidates.
    """
    lo, hi = segment
    if hi - lo < 2:
        raise FitError(f"segment [{lo}, {hi}) needs at least 2 samples")
    tseg = data.t[lo:hi]
    sched = constant_schedule(np.asarray(params, dtype=float), (float(tseg[0]), float(tseg[-1])))
    try:
        traj = simulate(model, sched, data.X[:, lo], tseg, choice)
    except (DivergenceError, ModelError):
        return DIVERGENCE_PENALTY
    resid = data.X[:, lo:hi] - traj.X
    return float(np.linalg.norm(resid))


@dataclass(frozen=True)
class FitResult:
    schedule: PiecewiseSchedule
    static_values: tuple[float, ...]
    objective: float
    evals: int
    per_segment_objective: tuple[float, ...]


def _segment_ranges(n_samples: int, indices: Sequence[int]) -> list[tuple[int, int]]:
    edges = [0, *indices, n_samples]
    return [(edges[k], edges[k + 1]) for k in range(len(edges) - 1)]


def fit_piecewise(
    model: ModelSpec,
    data: TimeSeries,
    switches: SwitchSet,
    cfg: FitConfig,
) -> FitResult:
    """Fit one constant parameter vector per segment between switches.

    With no static parameters each segment is fitted independently.  With a
    static mask, a single joint optimization shares the static values across
    all segments (decision vector = [static values; per-segment varying
    values]) and sums the per-segment objectives.
    """
    n_p = model.n_params
    ranges = _segment_ranges(data.n_samples, switches.indices)
    n_seg = len(ranges)
    for lo, hi in ranges:
        if hi - lo < 2:
            raise FitError(f"segment [{lo}, {hi}) is too short to fit")
    static_idx = [j for j, s in enumerate(model.static_mask) if s]
    varying_idx = [j for j, s in enumerate(model.static_mask) if not s]

    if not static_idx and not cfg.chain_segments:
        values, per_seg, evals = _fit_independent(model, data, ranges, cfg)
    elif not static_idx:
        values, per_seg, evals = _fit_chained(model, data, ranges, cfg)
    else:
        values, per_seg, evals = _fit_joint(
            model, data, ranges, cfg, static_idx, varying_idx
        )

    schedule = PiecewiseSchedule(
        np.asarray(switches.times, dtype=float),
        values,
        span=data.span,
    )
    total = math.sqrt(float(sum(v * v for v in per_seg))) / data.n_samples
    return FitResult(
        schedule=schedule,
        static_values=tuple(float(values[0, j]) for j in static_idx),
        objective=total,
        evals=evals,
        per_segment_objective=tuple(per_seg),
    )


def _initial_guess(cfg: FitConfig, dim: int, bounds: np.ndarray | None) -> np.ndarray:
    if cfg.initial_guess is not None:
        g = np.asarray(cfg.initial_guess, dtype=float)
        if g.size == dim:
            return g.copy()
        raise FitError(f"initial_guess must have length {dim}, got {g.size}")
    if bounds is not None:
        return bounds.mean(axis=1)
    return np.ones(dim)


def _expand_guess(cfg: FitConfig, n_p: int, per_param_to_decision) -> FitConfig | None:
    """Allow a per-parameter initial guess to seed a larger decision vector."""
    if cfg.initial_guess is None or len(cfg.initial_guess) != n_p:
        return None
    from dataclasses import replace

    return replace(cfg, initial_guess=tuple(per_param_to_decision(list(cfg.initial_guess))))


def _fit_independent(model, data, ranges, cfg):
    n_p = model.n_params
    bounds = _as_bounds(cfg.bounds, n_p) if cfg.bounds is not None else None
    values = np.empty((len(ranges), n_p))
    per_seg, evals = [], 0
    for k, seg in enumerate(ranges):
        objective = lambda p, seg=seg: segment_objective(model, data, seg, p, cfg.integrator)
        x0 = _initial_guess(cfg, n_p, bounds)
        res = minimize(objective, x0, cfg)
        values[k] = res.x
        per_seg.append(res.fx)
        evals += res.evals
    return values, per_seg, evals


def _fit_chained(model, data, ranges, cfg):
    """Like the independent fit, but each segment starts from the previous
    segment's final simulated state instead of the data column."""
    n_p = model.n_params
    bounds = _as_bounds(cfg.bounds, n_p) if cfg.bounds is not None else None
    values = np.empty((len(ranges), n_p))
    per_seg, evals = [], 0
    x_start = data.X[:, 0].copy()
    for k, (lo, hi) in enumerate(ranges):
        tseg = data.t[lo:hi]
        target = data.X[:, lo:hi]

        def objective(p, tseg=tseg, target=target, x_start=x_start):
            sched = constant_schedule(p, (float(tseg[0]), float(tseg[-1])))
            try:
                traj = simulate(model, sched, x_start, tseg, cfg.integrator)
            except (DivergenceError, ModelError):
                return DIVERGENCE_PENALTY
            return float(np.linalg.norm(target - traj.X))

        res = minimize(objective, _initial_guess(cfg, n_p, bounds), cfg)
        values[k] = res.x
        per_seg.append(res.fx)
        evals += res.evals
        sched = constant_schedule(res.x, (float(tseg[0]), float(tseg[-1])))
        x_start = simulate(model, sched, x_start, tseg, cfg.integrator).X[:, -1]
    return values, per_seg, evals


def _fit_joint(model, data, ranges, cfg, static_idx, varying_idx):
    """One optimization over [static values; per-segment varying values]."""
    n_p = model.n_params
    n_seg = len(ranges)
    n_static, n_vary = len(static_idx), len(varying_idx)
    dim = n_static + n_seg * n_vary

    def assemble(z) -> np.ndarray:
        """Decision vector -> (n_seg, n_p) parameter matrix."""
        vals = np.empty((n_seg, n_p))
        for col, j in enumerate(static_idx):
            vals[:, j] = z[col]
        for k in range(n_seg):
            base = n_static + k * n_vary
            for col, j in enumerate(varying_idx):
                vals[k, j] = z[base + col]
        return vals

    def objective(z) -> float:
        vals = assemble(z)
        total = 0.0
        for k, seg in enumerate(ranges):
            r = segment_objective(model, data, seg, vals[k], cfg.integrator)
            total += r * r
        return math.sqrt(total)

    d_bounds = None
    if cfg.bounds is not None:
        pb = _as_bounds(cfg.bounds, n_p)
        rows = [pb[j] for j in static_idx]
        for _ in range(n_seg):
            rows.extend(pb[j] for j in varying_idx)
        d_bounds = np.asarray(rows)

    expanded = _expand_guess(
        cfg,
        n_p,
        lambda g: [g[j] for j in static_idx]
        + [g[j] for _ in range(n_seg) for j in varying_idx],
    )
    run_cfg = expanded if expanded is not None else cfg
    from dataclasses import replace

    run_cfg = replace(run_cfg, bounds=tuple(map(tuple, d_bounds)) if d_bounds is not None else None)
    x0 = _initial_guess(run_cfg, dim, d_bounds)
    res = minimize(lambda z: objective(z), x0, run_cfg)

    vals = assemble(res.x)
    per_seg = [
        segment_objective(model, data, seg, vals[k], cfg.integrator)
        for k, seg in enumerate(ranges)
    ]
    return vals, per_seg, res.evals
