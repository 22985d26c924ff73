"""paramflux: time-varying parameter estimation for dynamical systems.

Detects discrete parameter switches in trajectory data, fits
piecewise-constant parameters per segment by minimizing trajectory error,
and identifies continuously varying parameters with sparse dictionary
regression.
"""

from .expr import parse_expr, pretty
from .model import (
    BuiltinSystem,
    Constant,
    ContinuousSchedule,
    FunctionCurve,
    MixedSchedule,
    ModelSpec,
    ParamSchedule,
    PiecewiseScalar,
    PiecewiseSchedule,
    TimeSeries,
    builtin_model,
    builtin_names,
    constant_schedule,
    eval_rhs,
    eval_schedule,
    make_model,
    with_static,
)
from .integrate import IntegratorChoice, build_mol_model, simulate

__version__ = "0.1.0"

__all__ = [
    "BuiltinSystem",
    "Constant",
    "ContinuousSchedule",
    "FunctionCurve",
    "IntegratorChoice",
    "MixedSchedule",
    "ModelSpec",
    "ParamSchedule",
    "PiecewiseScalar",
    "PiecewiseSchedule",
    "TimeSeries",
    "build_mol_model",
    "builtin_model",
    "builtin_names",
    "constant_schedule",
    "eval_rhs",
    "eval_schedule",
    "make_model",
    "parse_expr",
    "pretty",
    "simulate",
    "with_static",
    "__version__",
]
