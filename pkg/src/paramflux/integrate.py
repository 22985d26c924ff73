"""Fixed-step explicit integration of expression models under a parameter
schedule, plus method-of-lines construction of the built-in PDE systems.

Forward Euler is the workhorse inside optimization loops; classic RK4 with
generous substeps is used for ground-truth generation.  The schedule is
sampled once per substep, at the substep's left endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ModelError,
    ModelSpec,
    MolGrid,
    ParamSchedule,
    TimeSeries,
    make_model,
    rhs_function,
)

METHODS = ("forward_euler", "rk4")


class IntegrationError(ModelError):
    pass


class DivergenceError(IntegrationError):
    def __init__(self, time_index: int, detail: str = "state became non-finite"):
        super().__init__(f"{detail} while producing sample {time_index}")
        self.time_index = time_index


@dataclass(frozen=True)
class IntegratorChoice:
    method: str = "forward_euler"
    substeps: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise IntegrationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.substeps < 1:
            raise IntegrationError("substeps must be >= 1")


def simulate(
    model: ModelSpec,
    schedule: ParamSchedule,
    x0,
    tgrid,
    choice: IntegratorChoice = IntegratorChoice(),
) -> TimeSeries:
    """Integrate the model over tgrid; column 0 is x0, column j+1 is produced
    from column j by `substeps` explicit steps of the chosen method.

    Raises DivergenceError (with the offending time index) if the state
    leaves the finite floats mid-integration.
    """
    t = np.asarray(tgrid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise IntegrationError("tgrid must be 1-D and strictly increasing")
    x = [float(v) for v in np.asarray(x0, dtype=float)]
    if len(x) != model.n_states:
        raise IntegrationError(f"x0 must have length {model.n_states}")

    rhs = rhs_function(model)
    nsub = choice.substeps
    euler = choice.method == "forward_euler"
    out = np.empty((model.n_states, t.size))
    out[:, 0] = x
    isfinite = math.isfinite

    for j in range(t.size - 1):
        h = (t[j + 1] - t[j]) / nsub
        try:
            for k in range(nsub):
                tl = t[j] + k * h
                p = schedule.values_at(tl).tolist()
                if euler:
                    f = rhs(x, p, tl)
                    x = [xi + h * fi for xi, fi in zip(x, f)]
                else:
                    half = 0.5 * h
                    k1 = rhs(x, p, tl)
                    k2 = rhs([xi + half * v for xi, v in zip(x, k1)], p, tl + half)
                    k3 = rhs([xi + half * v for xi, v in zip(x, k2)], p, tl + half)
                    k4 = rhs([xi + h * v for xi, v in zip(x, k3)], p, tl + h)
                    sixth = h / 6.0
                    x = [
                        xi + sixth * (a + 2.0 * (b + c) + d)
                        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
                    ]
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DivergenceError(j + 1, f"domain failure ({exc})") from exc
        if not all(isfinite(v) for v in x):
            raise DivergenceError(j + 1)
        out[:, j + 1] = x

    return TimeSeries(t, out, names=model.states)


# --- method of lines ----------------------------------------------------------

_PDE_DEFAULTS = {
    "heat": {"domain": (0.0, math.pi), "params": ("p1", "p2")},
    "advdiff": {"domain": (-math.pi / 4.0, math.pi), "params": ("alpha", "D")},
}


def build_mol_model(
    pde: str,
    n_interior: int,
    domain: tuple[float, float] | None = None,
    boundary: tuple[float, float] = (0.0, 0.0),
) -> ModelSpec:
    """Discretize a built-in PDE in space, producing an ODE system with one
    state per interior grid point.

    Second spatial derivatives use the central stencil
    (u_{i-1} - 2 u_i + u_{i+1}) / dx^2, first derivatives the central stencil
    (u_{i+1} - u_{i-1}) / (2 dx); Dirichlet boundary values are folded in as
    constants.
    """
    if pde not in _PDE_DEFAULTS:
        raise ModelError(f"pde must be one of {tuple(_PDE_DEFAULTS)}, got {pde!r}")
    if n_interior < 3:
        raise ModelError("method of lines needs at least 3 interior points")
    spec = _PDE_DEFAULTS[pde]
    lo, hi = domain if domain is not None else spec["domain"]
    dx = (hi - lo) / (n_interior + 1)
    grid = MolGrid(n_interior, (float(lo), float(hi)), dx, boundary)
    states = [f"u{i}" for i in range(1, n_interior + 1)]
    dx2 = repr(dx * dx)
    two_dx = repr(2.0 * dx)

    rhs_text = []
    for i in range(n_interior):
        left = states[i - 1] if i > 0 else repr(float(boundary[0]))
        right = states[i + 1] if i < n_interior - 1 else repr(float(boundary[1]))
        lap = f"(({left} - 2*{states[i]} + {right}) / {dx2})"
        if pde == "heat":
            rhs_text.append(f"p1 * t^p2 * {lap}")
        else:
            grad = f"(({right} - {left}) / {two_dx})"
            rhs_text.append(f"alpha * {grad} + D * {lap}")

    return make_model(
        f"{pde}_mol_{n_interior}",
        states=states,
        params=list(spec["params"]),
        rhs_text=rhs_text,
        kind="mol",
        grid=grid,
    )
