"""Switch detection: per-signal binary segmentation with pluggable segment
costs (L2, L1, autoregressive), merged across all states of a system with a
minimum-gap rule between detected switches.

A detected switch index i marks the first sample of the new regime.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .model import TimeSeries

COST_KINDS = ("l2", "l1", "ar")


class DetectError(ValueError):
    pass


class SegmentTooShortError(DetectError):
    pass


class NoAdmissibleSplitError(DetectError):
    pass


class FixedCountInfeasibleError(DetectError):
    pass


class FixedCountMismatchError(DetectError):
    def __init__(self, expected: int, found: int):
        super().__init__(f"detected switch count {found} != expected {expected}")
        self.expected = expected
        self.found = found


@dataclass(frozen=True)
class CostFn:
    kind: str = "l2"
    order: int = 1  # used by the autoregressive cost only

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise DetectError(f"cost must be one of {COST_KINDS}, got {self.kind!r}")
        if self.kind == "ar" and self.order < 1:
            raise DetectError("autoregressive order must be >= 1")

    @property
    def min_segment(self) -> int:
        """Shortest segment the cost is well-posed on."""
        return self.order + 2 if self.kind == "ar" else 2


@dataclass(frozen=True)
class DetectConfig:
    """Detection settings: exactly one of noise_std (threshold mode) or
    fixed_count (known switch count) must be given."""

    cost: CostFn = field(default_factory=CostFn)
    min_gap: int = 1
    noise_std: float | None = None
    fixed_count: int | None = None
    threshold_scale: float = 1.0

    def __post_init__(self):
        if (self.noise_std is None) == (self.fixed_count is None):
            raise DetectError("set exactly one of noise_std or fixed_count")
        if self.noise_std is not None and self.noise_std <= 0:
            raise DetectError("noise_std must be positive")
        if self.fixed_count is not None and self.fixed_count < 0:
            raise DetectError("fixed_count must be >= 0")
        if self.min_gap < 1:
            raise DetectError("min_gap must be >= 1")
        if self.threshold_scale <= 0:
            raise DetectError("threshold_scale must be positive")

    @property
    def min_segment(self) -> int:
        return max(self.min_gap, self.cost.min_segment)

    def gain_threshold(self, n_samples: int) -> float:
        """Acceptance threshold for one split in noise-std mode: a BIC-style
        penalty 2*sigma^2*ln(N), times a configurable scale."""
        return self.threshold_scale * 2.0 * self.noise_std**2 * math.log(n_samples)


@dataclass(frozen=True)
class SwitchSet:
    """Detected switches: merged indices/times plus per-state provenance."""

    indices: tuple[int, ...]
    times: tuple[float, ...]
    per_state: tuple[tuple[int, ...], ...]

    @property
    def count(self) -> int:
        return len(self.indices)


def segment_cost(signal: np.ndarray, lo: int, hi: int, cost: CostFn) -> float:
    """Cost of fitting one homogeneous model on signal[lo:hi).

    l2: sum of squared deviations from the segment mean; l1: sum of absolute
    deviations from the segment median; ar(q): residual sum of squares of a
    least-squares AR(q) fit with intercept.
    """
    n = hi - lo
    if n < cost.min_segment:
        raise SegmentTooShortError(
            f"segment [{lo}, {hi}) has {n} samples; {cost.kind} needs >= {cost.min_segment}"
        )
    x = np.asarray(signal, dtype=float)
    if cost.kind == "l2":
        seg = x[lo:hi]
        return float(np.sum((seg - seg.mean()) ** 2))
    if cost.kind == "l1":
        seg = x[lo:hi]
        return float(np.sum(np.abs(seg - np.median(seg))))
    return _ar_cost(x, lo, hi, cost.order)


def _ar_cost(x: np.ndarray, lo: int, hi: int, order: int) -> float:
    """AR(q) residual sum of squares over the samples predicted inside
    [lo, hi); each sample regresses on its own immediate past, which may
    reach before lo (a sample belongs to the regime that produced it)."""
    start = max(lo, order)
    y = x[start:hi]
    cols = [np.ones(y.size)]
    cols.extend(x[start - lag : hi - lag] for lag in range(1, order + 1))
    design = np.column_stack(cols)
    sol, rss, _, _ = np.linalg.lstsq(design, y, rcond=None)
    if rss.size:
        return float(rss[0])
    resid = y - design @ sol
    return float(resid @ resid)


def best_split(
    signal: np.ndarray, lo: int, hi: int, cost: CostFn, min_len: int | None = None
) -> tuple[int, float]:
    """Best single split of signal[lo:hi): the index s (first sample of the
    right part) maximizing cost(lo,hi) - cost(lo,s) - cost(s,hi).

    Ties break toward the smallest s.  Both parts must have at least
    min_len samples (default: the cost's own minimum).
    """
    if min_len is None:
        min_len = cost.min_segment
    min_len = max(min_len, cost.min_segment)
    first, last = lo + min_len, hi - min_len
    if first > last:
        raise NoAdmissibleSplitError(f"segment [{lo}, {hi}) admits no split at min length {min_len}")
    whole = segment_cost(signal, lo, hi, cost)
    best_s, best_gain = -1, -math.inf
    for s in range(first, last + 1):
        gain = whole - segment_cost(signal, lo, s, cost) - segment_cost(signal, s, hi, cost)
        if gain > best_gain:
            best_s, best_gain = s, gain
    return best_s, best_gain


def binseg_single(signal: np.ndarray, cfg: DetectConfig) -> list[int]:
    """Greedy binary segmentation of one scalar signal.

    fixed_count mode keeps splitting the segment with the largest gain until
    exactly that many splits exist (error if infeasible); noise_std mode
    accepts splits while the best available gain exceeds the threshold.
    """
    x = np.asarray(signal, dtype=float).ravel()
    n = x.size
    min_len = cfg.min_segment
    if n < 2 * min_len:
        if cfg.fixed_count:
            raise FixedCountInfeasibleError(
                f"signal of length {n} cannot hold {cfg.fixed_count} switches"
            )
        return []

    heap: list[tuple[float, int, int, int]] = []  # (-gain, split, lo, hi)

    def push(lo: int, hi: int):
        try:
            s, gain = best_split(x, lo, hi, cfg.cost, min_len)
        except (NoAdmissibleSplitError, SegmentTooShortError):
            return
        heapq.heappush(heap, (-gain, s, lo, hi))

    push(0, n)
    splits: list[int] = []
    threshold = None if cfg.noise_std is None else cfg.gain_threshold(n)

    while heap:
        if cfg.fixed_count is not None and len(splits) >= cfg.fixed_count:
            break
        neg_gain, s, lo, hi = heapq.heappop(heap)
        if threshold is not None and -neg_gain <= threshold:
            break
        splits.append(s)
        push(lo, s)
        push(s, hi)

    if cfg.fixed_count is not None and len(splits) < cfg.fixed_count:
        raise FixedCountInfeasibleError(
            f"only {len(splits)} admissible splits exist, expected {cfg.fixed_count}"
        )
    return sorted(splits)


def _apply_gap(indices: list[int], min_gap: int) -> list[int]:
    """Keep a sorted switch only if it exceeds the previously kept one by
    more than min_gap."""
    kept: list[int] = []
    for i in indices:
        if not kept or i > kept[-1] + min_gap:
            kept.append(i)
    return kept


def detect_switches(data: TimeSeries, cfg: DetectConfig) -> SwitchSet:
    """Run binary segmentation on every state row, merge switches across
    states (dropping duplicates and re-applying the gap rule), and return
    the merged switch set with per-state provenance.

    In fixed_count mode the merged count must equal the expected count.
    """
    if data.n_states == 0:
        raise DetectError("data has no state rows")
    n = data.n_samples
    per_state: list[tuple[int, ...]] = []
    for j in range(data.n_states):
        raw = binseg_single(data.X[j], cfg)
        kept = _apply_gap(raw, cfg.min_gap)
        if kept and kept[-1] == n - 1:  # the final sample cannot open a new regime
            kept.pop()
        per_state.append(tuple(kept))

    merged = _apply_gap(sorted(set().union(*per_state) if per_state else set()), cfg.min_gap)
    if cfg.fixed_count is not None and len(merged) != cfg.fixed_count:
        raise FixedCountMismatchError(cfg.fixed_count, len(merged))
    return SwitchSet(
        indices=tuple(merged),
        times=tuple(float(data.t[i]) for i in merged),
        per_state=tuple(per_state),
    )
