"""Continuously varying parameter identification: dense segmentation of the
data into near-equal intervals, per-interval parameter sampling, and
dictionary-based sparse (LASSO) regression with parameterized atoms.

Each atom is a parameterized scalar function of time; a fitted curve is a
sparse weighted combination of atoms, found by alternating a
soft-thresholding weight step with a Nelder-Mead inner-parameter step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .detect import SwitchSet
from .fit import FitConfig, FitResult, fit_piecewise, nelder_mead
from .model import ModelSpec, TimeSeries

ACTIVE_WEIGHT = 1e-6

FAMILIES = ("sinusoid", "power", "stretched_exp", "constant")


class SparseRegError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    """One dictionary column: a parameterized function of time."""

    family: str
    theta: tuple[float, ...] = ()
    theta_bounds: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SparseRegError(f"family must be one of {FAMILIES}, got {self.family!r}")
        n = {"sinusoid": 2, "power": 1, "stretched_exp": 2, "constant": 0}[self.family]
        bounds = self.theta_bounds
        if not bounds and n:
            bounds = _DEFAULT_BOUNDS[self.family]
        theta = self.theta
        if not theta and n:
            theta = tuple(0.5 * (lo + hi) for lo, hi in bounds)
        object.__setattr__(self, "theta_bounds", tuple(tuple(map(float, b)) for b in bounds))
        object.__setattr__(self, "theta", tuple(float(v) for v in theta))
        if len(self.theta) != n or len(self.theta_bounds) != n:
            raise SparseRegError(f"{self.family} needs {n} inner parameter(s)")
        for v, (lo, hi) in zip(self.theta, self.theta_bounds):
            if not (lo <= v <= hi and lo < hi):
                raise SparseRegError(f"theta {v} outside bounds [{lo}, {hi}]")

    def value_at(self, t: float) -> float:
        return float(self.column(np.array([t]))[0])

    def column(self, tgrid: np.ndarray) -> np.ndarray:
        t = np.asarray(tgrid, dtype=float)
        if self.family == "sinusoid":
            omega, phase = self.theta
            return np.sin(omega * t + phase)
        if self.family == "power":
            (b,) = self.theta
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.power(t, b)
        if self.family == "stretched_exp":
            b, c = self.theta
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                return np.exp(b * np.power(t, c))
        return np.ones_like(t)

    def describe(self) -> str:
        if self.family == "sinusoid":
            return f"sin({self.theta[0]:.3g}*t + {self.theta[1]:.3g})"
        if self.family == "power":
            return f"t^{self.theta[0]:.3g}"
        if self.family == "stretched_exp":
            return f"exp({self.theta[0]:.3g}*t^{self.theta[1]:.3g})"
        return "1"


_DEFAULT_BOUNDS = {
    "sinusoid": ((0.5, 6.5), (-math.pi, math.pi)),
    "power": ((0.2, 3.0),),
    "stretched_exp": ((-5.0, 1.0), (0.1, 2.0)),
}


def default_dictionary() -> tuple[Atom, ...]:
    return (
        Atom("sinusoid"),
        Atom("power"),
        Atom("stretched_exp"),
        Atom("constant"),
    )


@dataclass(frozen=True)
class SparseFit:
    """A fitted sparse combination of atoms for one parameter."""

    atoms: tuple[Atom, ...]
    weights: tuple[float, ...]
    lam: float
    residual: float
    pruned: tuple[tuple[Atom, float], ...] = ()

    def value_at(self, t: float) -> float:
        return float(sum(w * a.value_at(t) for a, w in zip(self.atoms, self.weights)))

    def curve(self, tgrid: np.ndarray) -> np.ndarray:
        D = eval_dictionary(self.atoms, tgrid)
        return D @ np.asarray(self.weights)

    def describe(self) -> str:
        """Pretty-print the recovered expression, e.g. '0.97*sin(3*t - 1)'."""
        parts = [f"{w:.3g}*{a.describe()}" for a, w in zip(self.atoms, self.weights)]
        main = " + ".join(parts) if parts else "0"
        if self.pruned:
            eps = " + ".join(f"{w:.3g}*{a.describe()}" for a, w in self.pruned)
            return f"{main} + [{eps}]"
        return main


# --- operations -----------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSamples:
    """Finite vector approximation of p(t): per-interval constants."""

    midtimes: np.ndarray
    values: np.ndarray  # (n_intervals, n_params)
    fit: FitResult
    boundaries: tuple[int, ...]


def interval_partition(n_samples: int) -> list[int]:
    """Sizes of floor(N/6) near-equal contiguous intervals; remainder samples
    go one each to the leading intervals."""
    if n_samples < 12:
        raise SparseRegError(f"need at least 12 samples to segment, got {n_samples}")
    n_int = n_samples // 6
    base = n_samples // n_int
    rem = n_samples - base * n_int
    return [base + 1] * rem + [base] * (n_int - rem)


def sample_parameters(model: ModelSpec, data: TimeSeries, cfg: FitConfig) -> ParameterSamples:
    """Partition the grid into floor(N/6) intervals and fit each one,
    returning interval midpoint times and the fitted per-interval vectors
    (static-masked parameters are fitted jointly across intervals)."""
    sizes = interval_partition(data.n_samples)
    if min(sizes) < 2:
        raise SparseRegError("interval too short to fit")
    edges = np.cumsum(sizes)[:-1]
    boundaries = SwitchSet(
        indices=tuple(int(e) for e in edges),
        times=tuple(float(data.t[e]) for e in edges),
        per_state=(),
    )
    fit = fit_piecewise(model, data, boundaries, cfg)
    lo = 0
    midtimes = []
    for size in sizes:
        hi = lo + size
        midtimes.append(0.5 * (data.t[lo] + data.t[hi - 1]))
        lo = hi
    return ParameterSamples(
        midtimes=np.asarray(midtimes),
        values=np.asarray(fit.schedule.values),
        fit=fit,
        boundaries=boundaries.indices,
    )


def eval_dictionary(atoms, tgrid: np.ndarray) -> np.ndarray:
    """Stack atom columns into the (len(tgrid), r) dictionary matrix."""
    if not atoms:
        raise SparseRegError("dictionary must contain at least one atom")
    cols = []
    for atom in atoms:
        col = atom.column(tgrid)
        if not np.all(np.isfinite(col)):
            raise SparseRegError(f"atom {atom.describe()} is non-finite on the grid")
        cols.append(col)
    return np.column_stack(cols)


def soft_threshold(value: float, threshold: float) -> float:
    return math.copysign(max(abs(value) - threshold, 0.0), value)


def lasso_weights(D: np.ndarray, p: np.ndarray, lam: float) -> np.ndarray:
    """Minimize 0.5*||p - D w||^2 + lam*||w||_1 (in the column-normalized
    basis) by cyclic coordinate descent with soft-thresholding; weights are
    rescaled back to the original columns."""
    D = np.asarray(D, dtype=float)
    p = np.asarray(p, dtype=float).ravel()
    if D.ndim != 2 or D.shape[0] != p.size:
        raise SparseRegError(f"need D with {p.size} rows, got {D.shape}")
    if lam < 0:
        raise SparseRegError("lambda must be >= 0")
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0.0):
        dead = int(np.argmin(norms))
        raise SparseRegError(f"dictionary column {dead} is identically zero")
    Dn = D / norms
    r_dim = D.shape[1]
    v = np.zeros(r_dim)
    resid = p.copy()
    for _ in range(10_000):
        max_change = 0.0
        for j in range(r_dim):
            old = v[j]
            rho = float(Dn[:, j] @ resid) + old
            new = soft_threshold(rho, lam)
            if new != old:
                resid += Dn[:, j] * (old - new)
                v[j] = new
                max_change = max(max_change, abs(new - old) / norms[j])
        if max_change < 1e-8:
            break
    return v / norms


def _lasso_objective(D: np.ndarray, p: np.ndarray, w: np.ndarray, lam: float) -> float:
    norms = np.linalg.norm(D, axis=0)
    resid = p - D @ w
    return 0.5 * float(resid @ resid) + lam * float(np.sum(np.abs(w * norms)))


def sparse_fit(
    midtimes: np.ndarray,
    samples: np.ndarray,
    atoms=None,
    lam: float = 0.01,
    cfg: FitConfig | None = None,
    prune_threshold: float = ACTIVE_WEIGHT,
) -> SparseFit:
    """Fit one parameter's samples with a sparse atom combination.

    Alternates (a) a LASSO weight step at the current inner parameters with
    (b) a Nelder-Mead step over the inner parameters of active atoms, until
    the penalized objective stops improving (or 50 rounds).  Atoms whose
    final weight is below the pruning threshold are reported as a small
    remainder term rather than part of the curve.
    """
    t = np.asarray(midtimes, dtype=float)
    p = np.asarray(samples, dtype=float).ravel()
    if t.size != p.size or t.size < 2:
        raise SparseRegError("need at least two samples")
    atoms = tuple(atoms) if atoms is not None else default_dictionary()
    cfg = cfg if cfg is not None else FitConfig()

    D = eval_dictionary(atoms, t)
    w = lasso_weights(D, p, lam)
    best = _lasso_objective(D, p, w, lam)

    for _ in range(50):
        atoms, w = _theta_step(atoms, w, t, p, cfg)
        D = eval_dictionary(atoms, t)
        w = lasso_weights(D, p, lam)
        obj = _lasso_objective(D, p, w, lam)
        if best - obj < 1e-8:
            best = min(best, obj)
            break
        best = obj

    residual = float(np.linalg.norm(p - D @ w))
    keep = [i for i in range(len(atoms)) if abs(w[i]) >= prune_threshold]
    drop = [i for i in range(len(atoms)) if abs(w[i]) < prune_threshold]
    return SparseFit(
        atoms=tuple(atoms[i] for i in keep),
        weights=tuple(float(w[i]) for i in keep),
        lam=lam,
        residual=residual,
        pruned=tuple((atoms[i], float(w[i])) for i in drop if w[i] != 0.0),
    )


def _theta_step(atoms, w, t, p, cfg: FitConfig):
    """Nelder-Mead over the stacked inner parameters of active atoms."""
    active = [i for i, wi in enumerate(w) if abs(wi) > ACTIVE_WEIGHT and atoms[i].theta]
    if not active:
        return atoms, w
    x0, bounds, slices = [], [], []
    pos = 0
    for i in active:
        x0.extend(atoms[i].theta)
        bounds.extend(atoms[i].theta_bounds)
        slices.append((i, pos, pos + len(atoms[i].theta)))
        pos += len(atoms[i].theta)

    def rebuild(z) -> tuple[Atom, ...]:
        out = list(atoms)
        for i, a, b in slices:
            out[i] = replace(atoms[i], theta=tuple(float(v) for v in z[a:b]))
        return tuple(out)

    def objective(z) -> float:
        try:
            D = eval_dictionary(rebuild(z), t)
        except SparseRegError:
            return math.inf
        return float(np.linalg.norm(p - D @ np.asarray(w)))

    theta_cfg = replace(cfg, optimizer="nelder_mead", bounds=tuple(bounds), initial_guess=None)
    res = nelder_mead(objective, np.asarray(x0), theta_cfg)
    return rebuild(res.x), w
