"""Penalized least-squares change-point detection on daily mobility series.

A segmentation of ``m[0:T]`` is a strictly increasing tuple of breakpoints
``b_1 < ... < b_K`` with ``0 < b_k < T``. Breakpoint ``b`` is the 0-based index
of the first day of a new regime, so segments are the half-open ranges
``[0, b_1), [b_1, b_2), ..., [b_K, T)``. The detectors minimize

    sum of segment costs + beta * K

subject to every segment holding at least ``min_seg_len`` days. The
unsegmented series is always admissible, even when shorter than that.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import NoChangePointError
from .ingest import MobilitySeries

COST_KINDS = ("l2-mean", "l2-constant-reference")

SeriesLike = Union[MobilitySeries, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class SegmentCost:
    """Within-segment homogeneity cost.

    ``l2-mean`` is the squared deviation from the segment's own mean;
    ``l2-constant-reference`` is the squared deviation from ``reference``.
    """

    kind: str = "l2-mean"
    reference: float = 0.0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {COST_KINDS}")


L2_MEAN = SegmentCost()


@dataclass(frozen=True)
class Segmentation:
    breakpoints: Tuple[int, ...]
    objective: float
    beta: float
    n: int
    cost: SegmentCost = L2_MEAN
    min_seg_len: int = 1

    @property
    def K(self) -> int:
        return len(self.breakpoints)

    @property
    def segments(self) -> List[Tuple[int, int]]:
        edges = [0, *self.breakpoints, self.n]
        return list(zip(edges[:-1], edges[1:]))

    def is_consistent(self, series: SeriesLike, rtol: float = 1e-9) -> bool:
        """Recompute the objective from the stored breakpoints and compare."""
        again = objective(series, self.breakpoints, self.beta, self.cost)
        return math.isclose(again, self.objective, rel_tol=rtol, abs_tol=1e-9)


def _values(series: SeriesLike) -> np.ndarray:
    if isinstance(series, MobilitySeries):
        return series.values
    return np.asarray(series, dtype=float)


def segment_cost(series: SeriesLike, start: int, end: int, cost: SegmentCost = L2_MEAN) -> float:
    """Cost of the half-open segment ``[start, end)``, by direct summation."""
    x = _values(series)
    if not 0 <= start < end <= len(x):
        raise ValueError(f"invalid segment [{start}, {end}) for series of length {len(x)}")
    seg = x[start:end]
    if cost.kind == "l2-mean":
        dev = seg - seg.mean()
    else:
        dev = seg - cost.reference
    return float(np.sum(dev * dev))


def objective(
    series: SeriesLike, breakpoints: Sequence[int], beta: float, cost: SegmentCost = L2_MEAN
) -> float:
    """Penalized objective of a given segmentation; the canonical scorer."""
    x = _values(series)
    edges = [0, *breakpoints, len(x)]
    total = 0.0
    for start, end in zip(edges[:-1], edges[1:]):
        total += segment_cost(x, start, end, cost)
    if breakpoints:
        total += beta * len(breakpoints)
    return total


def default_beta(series: SeriesLike) -> float:
    """BIC-style penalty ``2 log(T) sigma^2``.

    The noise scale comes from the MAD of first differences, which a few
    level shifts barely move; it falls back to the plain variance when the
    differences are mostly zero.
    """
    x = _values(series)
    diffs = np.diff(x)
    sigma = 1.4826 * np.median(np.abs(diffs - np.median(diffs))) / math.sqrt(2.0)
    var = sigma**2 if sigma > 0 else float(np.var(x))
    return 2.0 * math.log(len(x)) * var


class _PrefixCost:
    """Vectorized segment costs via prefix sums (data centred first)."""

    def __init__(self, x: np.ndarray, cost: SegmentCost):
        self.kind = cost.kind
        if cost.kind == "l2-mean":
            y = x - x.mean()
            self.s1 = np.concatenate(([0.0], np.cumsum(y)))
            self.s2 = np.concatenate(([0.0], np.cumsum(y * y)))
        else:
            d = x - cost.reference
            self.s2 = np.concatenate(([0.0], np.cumsum(d * d)))

    def __call__(self, starts: np.ndarray, end: int) -> np.ndarray:
        sq = self.s2[end] - self.s2[starts]
        if self.kind == "l2-mean":
            lin = self.s1[end] - self.s1[starts]
            sq = sq - lin * lin / (end - starts)
        return np.maximum(sq, 0.0)


def _check(x: np.ndarray, beta: float, min_seg_len: int) -> None:
    if len(x) < 2:
        raise ValueError("change-point detection needs T >= 2")
    if not beta >= 0:
        raise ValueError("beta must be non-negative")
    if min_seg_len < 1:
        raise ValueError("min_seg_len must be at least 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")


def _backtrack(prev: np.ndarray, t: int) -> List[int]:
    """Breakpoints of the best prefix ending at ``t`` (``t`` itself excluded)."""
    out = []
    t = int(prev[t])
    while t > 0:
        out.append(t)
        t = int(prev[t])
    return out[::-1]


def _best(cands: np.ndarray, vals: np.ndarray, nbk: np.ndarray, prev: np.ndarray) -> int:
    """Pick the minimizing candidate: lowest value, fewest breaks, then lexicographic."""
    best = vals.min()
    tied = cands[vals == best]
    if len(tied) > 1:
        ks = nbk[tied] + (tied > 0)
        tied = tied[ks == ks.min()]
    if len(tied) > 1:
        return int(min(tied, key=lambda s: _backtrack(prev, int(s)) + [int(s)] if s > 0 else []))
    return int(tied[0])


def _run(x: np.ndarray, beta: float, cost: SegmentCost, min_seg_len: int, prune: bool) -> Segmentation:
    _check(x, beta, min_seg_len)
    T = len(x)
    seg_cost = _PrefixCost(x, cost)
    F = np.full(T + 1, np.inf)
    F[0] = 0.0
    prev = np.zeros(T + 1, dtype=np.int64)
    nbk = np.zeros(T + 1, dtype=np.int64)

    active = np.array([0], dtype=np.int64)
    expire = np.array([np.iinfo(np.int64).max], dtype=np.int64)
    for t in range(1, T + 1):
        new = t - min_seg_len
        if new >= min_seg_len and np.isfinite(F[new]):
            active = np.append(active, new)
            expire = np.append(expire, np.iinfo(np.int64).max)
        if prune:
            keep = expire > t
            active, expire = active[keep], expire[keep]
        if t < min_seg_len and t < T:
            continue  # [0, t) is too short to precede a breakpoint
        vals = F[active] + seg_cost(active, t) + np.where(active > 0, beta, 0.0)
        s = _best(active, vals, nbk, prev)
        F[t] = vals[active == s][0]
        prev[t] = s
        nbk[t] = nbk[s] + (s > 0)
        if prune and t >= min_seg_len:
            # s cannot beat a path through t for any end >= t + min_seg_len
            hopeless = (vals > F[t] + beta) & (expire == np.iinfo(np.int64).max)
            expire[hopeless] = t + min_seg_len

    bps = tuple(_backtrack(prev, T))
    return Segmentation(bps, objective(x, bps, beta, cost), float(beta), T, cost, min_seg_len)


def detect_exact(
    series: SeriesLike, beta: float | None = None, cost: SegmentCost = L2_MEAN, min_seg_len: int = 2
) -> Segmentation:
    """Globally optimal segmentation by dynamic programming over all prefixes, O(T^2)."""
    x = _values(series)
    beta = default_beta(x) if beta is None else beta
    return _run(x, beta, cost, min_seg_len, prune=False)


def detect_pruned(
    series: SeriesLike, beta: float | None = None, cost: SegmentCost = L2_MEAN, min_seg_len: int = 2
) -> Segmentation:
    """Same optimum as :func:`detect_exact`, with PELT-style candidate pruning.

    A candidate start ``s`` is discarded at time ``t`` once the best path
    through ``t`` is strictly cheaper; with a minimum segment length the
    discard only takes effect ``min_seg_len`` steps later, when ``t`` can
    actually serve as the previous breakpoint.
    """
    x = _values(series)
    beta = default_beta(x) if beta is None else beta
    return _run(x, beta, cost, min_seg_len, prune=True)


def change_date(series: MobilitySeries, seg: Segmentation) -> dt.date:
    """Calendar date of the first detected breakpoint."""
    if seg.K == 0:
        raise NoChangePointError("segmentation contains no change point")
    return series.date_at(seg.breakpoints[0])
