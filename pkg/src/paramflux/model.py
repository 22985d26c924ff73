"""Model and schedule types: time series data, expression-based dynamical
systems, piecewise/continuous parameter schedules, and the registry of
built-in example systems.

All types are immutable after construction; operations are pure functions.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from .expr import (
    Expr,
    ExprDomainError,
    TIME_SYMBOL,
    compile_exprs,
    eval_expr,
    parse_expr,
    pretty,
)


class ModelError(ValueError):
    """Base class for model/schedule construction and evaluation failures."""


class DomainEvalError(ModelError):
    def __init__(self, state_index: int, detail: str):
        super().__init__(f"domain error evaluating rhs of state {state_index}: {detail}")
        self.state_index = state_index


class ScheduleRangeError(ModelError):
    def __init__(self, t: float, span: tuple[float, float]):
        super().__init__(f"time {t} outside schedule range [{span[0]}, {span[1]}]")
        self.t = t


class UnknownModelError(ModelError):
    def __init__(self, name: str, valid: Sequence[str]):
        super().__init__(f"unknown model {name!r}; valid names: {', '.join(valid)}")
        self.name = name


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """Sampled trajectories: a strictly increasing time grid of N stamps and
    an m-state-by-N value matrix (one row per state)."""

    t: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        t = _readonly(np.atleast_1d(self.t))
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[np.newaxis, :]
        X = _readonly(X)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "X", X)
        if t.ndim != 1 or t.size < 2:
            raise ModelError("time grid must be 1-D with at least 2 stamps")
        if np.any(np.diff(t) <= 0):
            raise ModelError("time grid must be strictly increasing")
        if X.ndim != 2 or X.shape[1] != t.size:
            raise ModelError(f"X must be (m, {t.size}), got {X.shape}")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(X)):
            raise ModelError("time series entries must be finite")
        if self.names is not None and len(self.names) != X.shape[0]:
            raise ModelError("names length must match state count")

    @property
    def n_states(self) -> int:
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


@dataclass(frozen=True)
class MolGrid:
    """Spatial metadata for a method-of-lines system: interior point count,
    spatial domain, uniform step, and Dirichlet boundary values."""

    n_interior: int
    domain: tuple[float, float]
    dx: float
    boundary: tuple[float, float] = (0.0, 0.0)

    @property
    def interior_x(self) -> np.ndarray:
        lo, _ = self.domain
        return lo + self.dx * np.arange(1, self.n_interior + 1)


@dataclass(frozen=True)
class ModelSpec:
    """A named dynamical system dX/dt = f(X, p(t)) defined by expressions."""

    name: str
    states: tuple[str, ...]
    params: tuple[str, ...]
    rhs: tuple[Expr, ...]
    static_mask: tuple[bool, ...] = ()
    kind: str = "ode"  # "ode" | "mol"
    grid: MolGrid | None = None

    def __post_init__(self):
        if not self.static_mask:
            object.__setattr__(self, "static_mask", tuple(False for _ in self.params))
        if len(self.rhs) != len(self.states):
            raise ModelError("need exactly one rhs expression per state")
        seen = set(self.states) | set(self.params)
        if len(seen) != len(self.states) + len(self.params):
            raise ModelError("state and parameter names must be unique")
        if TIME_SYMBOL in seen:
            raise ModelError(f"{TIME_SYMBOL!r} is reserved for the time symbol")
        if len(self.static_mask) != len(self.params):
            raise ModelError("static_mask length must equal parameter count")
        if self.kind not in ("ode", "mol"):
            raise ModelError(f"kind must be 'ode' or 'mol', got {self.kind!r}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_params(self) -> int:
        return len(self.params)


def make_model(
    name: str,
    states: Sequence[str],
    params: Sequence[str],
    rhs_text: Sequence[str],
    static: Sequence[str] = (),
    kind: str = "ode",
    grid: MolGrid | None = None,
) -> ModelSpec:
    """Build a ModelSpec from expression strings."""
    rhs = tuple(parse_expr(s, states, params) for s in rhs_text)
    mask = tuple(p in set(static) for p in params)
    return ModelSpec(name, tuple(states), tuple(params), rhs, mask, kind, grid)


def with_static(model: ModelSpec, static: Sequence[str]) -> ModelSpec:
    """Return a copy of the model with the given parameters marked static."""
    unknown = set(static) - set(model.params)
    if unknown:
        raise ModelError(f"static names not among parameters: {sorted(unknown)}")
    return replace(model, static_mask=tuple(p in set(static) for p in model.params))


@functools.lru_cache(maxsize=128)
def rhs_function(model: ModelSpec) -> Callable:
    """Compiled fast-path evaluator ``f(x, p, t) -> tuple`` for a model."""
    return compile_exprs(model.rhs, model.states, model.params)


def eval_rhs(model: ModelSpec, x: Sequence[float], p: Sequence[float], t: float) -> np.ndarray:
    """Evaluate the state-derivative vector f(x, p) at time t.

    Domain failures (log of non-positive, 0^negative, division by zero) are
    reported with the index of the offending state equation.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != (model.n_states,):
        raise ModelError(f"state vector must have length {model.n_states}")
    if p.shape != (model.n_params,):
        raise ModelError(f"parameter vector must have length {model.n_params}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise ModelError("state and parameter vectors must be finite")
    try:
        return np.asarray(rhs_function(model)(x, p, t), dtype=float)
    except (ValueError, ZeroDivisionError, OverflowError):
        # slow path: locate the offending state equation
        env = {name: float(v) for name, v in zip(model.states, x)}
        env.update({name: float(v) for name, v in zip(model.params, p)})
        env[TIME_SYMBOL] = float(t)
        for i, e in enumerate(model.rhs):
            try:
                eval_expr(e, env)
            except ExprDomainError as exc:
                raise DomainEvalError(i, str(exc)) from exc
        raise  # pragma: no cover - fast/slow path disagreement


# --- parameter schedules ------------------------------------------------------


class ParamCurve(Protocol):
    def value_at(self, t: float) -> float: ...


@dataclass(frozen=True)
class FunctionCurve:
    """Ground-truth wrapper for an arbitrary scalar function of time."""

    fn: Callable[[float], float]
    label: str = ""

    def value_at(self, t: float) -> float:
        return float(self.fn(t))


@dataclass(frozen=True)
class Constant:
    value: float

    def value_at(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PiecewiseScalar:
    """Scalar piecewise-constant component: value k on (b[k-1], b[k]], with
    the first interval closed at its left end."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = _readonly(np.atleast_1d(self.breakpoints))
        vals = _readonly(np.atleast_1d(self.values))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ModelError("breakpoints must be strictly increasing")
        if vals.size != bp.size + 1:
            raise ModelError("need exactly one value per segment")

    def value_at(self, t: float) -> float:
        return float(self.values[int(np.searchsorted(self.breakpoints, t, side="left"))])


class ParamSchedule:
    """Base class: a time-dependent parameter vector p(t)."""

    span: tuple[float, float]
    n_params: int

    def values_at(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def _check_range(self, t: float):
        lo, hi = self.span
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        if t < lo - slack or t > hi + slack:
            raise ScheduleRangeError(t, self.span)


@dataclass(frozen=True)
class PiecewiseSchedule(ParamSchedule):
    """Vector piecewise-constant schedule: segment k is active on
    (t_{k-1}, t_k]; the first segment is closed at the left end."""

    breakpoints: np.ndarray
    values: np.ndarray  # (n_segments, n_params)
    span: tuple[float, float]

    def __post_init__(self):
        bp = _readonly(np.atleast_1d(self.breakpoints))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, np.newaxis]
        vals = _readonly(vals)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "span", (float(self.span[0]), float(self.span[1])))
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ModelError("breakpoints must be strictly increasing")
        lo, hi = self.span
        if bp.size and (bp[0] <= lo or bp[-1] >= hi):
            raise ModelError("breakpoints must lie strictly inside the time span")
        if vals.shape[0] != bp.size + 1:
            raise ModelError("need exactly one value row per segment")
        if not np.all(np.isfinite(vals)):
            raise ModelError("segment values must be finite")

    @property
    def n_params(self) -> int:
        return self.values.shape[1]

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    def segment_index(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="left"))

    def values_at(self, t: float) -> np.ndarray:
        self._check_range(t)
        return self.values[self.segment_index(t)]


def constant_schedule(values: Sequence[float], span: tuple[float, float]) -> PiecewiseSchedule:
    return PiecewiseSchedule(np.empty(0), np.asarray(values, dtype=float)[np.newaxis, :], span)


@dataclass(frozen=True)
class ContinuousSchedule(ParamSchedule):
    """One fitted/true curve per parameter."""

    curves: tuple[ParamCurve, ...]
    span: tuple[float, float]

    @property
    def n_params(self) -> int:
        return len(self.curves)

    def values_at(self, t: float) -> np.ndarray:
        self._check_range(t)
        return np.array([c.value_at(t) for c in self.curves], dtype=float)


@dataclass(frozen=True)
class MixedSchedule(ParamSchedule):
    """Per-parameter mixture of constants, piecewise scalars, and curves."""

    components: tuple[ParamCurve, ...]
    span: tuple[float, float]

    @property
    def n_params(self) -> int:
        return len(self.components)

    def values_at(self, t: float) -> np.ndarray:
        self._check_range(t)
        return np.array([c.value_at(t) for c in self.components], dtype=float)


def eval_schedule(schedule: ParamSchedule, t: float) -> np.ndarray:
    """Evaluate a schedule at time t (raising on out-of-range times)."""
    return schedule.values_at(t)


def schedule_on_grid(schedule: ParamSchedule, tgrid: np.ndarray) -> np.ndarray:
    """Evaluate a schedule on a whole grid, returning an (n_params, N) matrix."""
    return np.column_stack([schedule.values_at(float(t)) for t in np.asarray(tgrid)])


# --- built-in example systems -------------------------------------------------


@dataclass(frozen=True)
class BuiltinSystem:
    model: ModelSpec
    truth: ParamSchedule
    x0: np.ndarray
    tgrid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", _readonly(self.x0))
        object.__setattr__(self, "tgrid", _readonly(self.tgrid))


def _pvts() -> BuiltinSystem:
    model = make_model(
        "pvts",
        states=["x", "y"],
        params=["alpha", "delta", "k", "n"],
        rhs_text=[
            "alpha/(1 + (y/k)^n) - delta*x",
            "alpha/(1 + (x/k)^n) - delta*y",
        ],
    )
    truth = PiecewiseSchedule(
        np.array([12.0]),
        np.array([[1.0, 0.3, 1.0, 3.35], [8.0, 0.6, 1.0, 3.35]]),
        span=(0.0, 24.0),
    )
    return BuiltinSystem(model, truth, np.array([1.0, 2.0]), np.linspace(0.0, 24.0, 1000))


def _gene() -> BuiltinSystem:
    model = make_model(
        "gene",
        states=["m", "p"],
        params=["alpha_m", "delta_m", "alpha_p", "delta_p"],
        rhs_text=["alpha_m - delta_m*m", "alpha_p*m - delta_p*p"],
    )
    truth = PiecewiseSchedule(
        np.array([12.0]),
        np.array([[4.0, 1.0, 4.0, 1.0], [5.0, 1.0, 5.0, 1.0]]),
        span=(0.0, 24.0),
    )
    # start below the pre-switch steady state (4, 16): the settling
    # transient keeps the rate/decay pairs identifiable without the sharp
    # startup curvature a cold start would add
    return BuiltinSystem(model, truth, np.array([3.0, 12.0]), np.linspace(0.0, 24.0, 1001))


def _gene_nonuniform() -> BuiltinSystem:
    model = make_model(
        "gene_nonuniform",
        states=["m", "p"],
        params=["alpha_m", "delta_m", "alpha_p", "delta_p"],
        rhs_text=["alpha_m - delta_m*m", "alpha_p*m - delta_p*p"],
    )
    # alpha_m switches at {5, 15}, alpha_p at {5, 10, 15, 20}, decay rates fixed
    truth = PiecewiseSchedule(
        np.array([5.0, 10.0, 15.0, 20.0]),
        np.array(
            [
                [4.0, 1.0, 4.0, 1.0],
                [5.0, 1.0, 5.0, 1.0],
                [5.0, 1.0, 6.0, 1.0],
                [6.0, 1.0, 7.0, 1.0],
                [6.0, 1.0, 8.0, 1.0],
            ]
        ),
        span=(0.0, 25.0),
    )
    return BuiltinSystem(model, truth, np.array([3.0, 12.0]), np.linspace(0.0, 25.0, 1001))


def _heat_mol() -> BuiltinSystem:
    from .integrate import build_mol_model  # deferred: integrate imports this module

    model = build_mol_model("heat", 100)
    truth = PiecewiseSchedule(
        np.array([0.25, 0.5, 0.75]),
        np.array([[0.1, 0.5], [2.1, 0.4], [4.1, 0.3], [6.1, 0.2]]),
        span=(0.0, 1.0),
    )
    x = model.grid.interior_x
    x0 = np.where(x <= math.pi / 2, x, math.pi - x)
    # 100 times with spacing 0.01 so the schedule breakpoints land exactly on
    # sampling instants (the final sample sits at t=0.99)
    return BuiltinSystem(model, truth, x0, np.arange(100) / 100.0)


def _advdiff_mol() -> BuiltinSystem:
    from .integrate import build_mol_model

    model = build_mol_model("advdiff", 100)
    truth = MixedSchedule(
        (
            FunctionCurve(lambda t: math.sin(3.0 * t - 1.0), "sin(3*t - 1)"),
            Constant(0.01),
        ),
        span=(0.0, 1.0),
    )
    x = model.grid.interior_x
    x0 = np.where((x >= 0.0) & (x <= math.pi), np.sin(3.0 * x), 0.0)
    return BuiltinSystem(model, truth, x0, np.linspace(0.0, 1.0, 100))


_REGISTRY: dict[str, Callable[[], BuiltinSystem]] = {
    "pvts": _pvts,
    "gene": _gene,
    "gene_nonuniform": _gene_nonuniform,
    "heat_mol": _heat_mol,
    "advdiff_mol": _advdiff_mol,
}


def builtin_names() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def builtin_model(name: str) -> BuiltinSystem:
    """Return a registered example system with its ground-truth schedule,
    initial condition, and default time grid."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownModelError(name, builtin_names()) from None
    return factory()


def format_model(model: ModelSpec) -> list[str]:
    """Human-readable rhs lines, one per state."""
    return [f"d{s}/dt = {pretty(e)}" for s, e in zip(model.states, model.rhs)]
