"""Optimal boundary extraction from feature sequences.

Groups of at most ``G`` frames are chosen to minimise the total squared
deviation of frames from their group mean. The search is split into a
``T x G`` table of range costs and an interval-cover dynamic program whose
sequential depth equals the number of groups ``k``; every stage is a single
vectorised min over ``G`` candidates for all start frames at once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    FeatureSequence,
    PrefixSums,
    Segmentation,
    ValidationError,
    as_frames,
    group_means,
    per_frame_loss,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_GROUP = 50
DEFAULT_QUANTILE = 0.75

# relative slack when deciding that two DP candidates tie
_TIE_RTOL = 1e-12


class InfeasibleError(ValidationError):
    """No segmentation with the requested number of groups exists."""


class CalibrationError(ValueError):
    """The requested unit rate lies outside what any threshold can reach."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True, eq=False)
class SegmentCostTable:
    """Costs of every group of length ``g <= G`` ending at every frame.

    ``costs[t - 1, g - 1]`` is the cost of frames ``t-g+1..t``; entries with
    ``g > t`` are ``inf``.
    """

    costs: np.ndarray
    G: int

    @property
    def T(self) -> int:
        return self.costs.shape[0]

    @property
    def valid(self) -> np.ndarray:
        t = np.arange(1, self.T + 1)[:, None]
        g = np.arange(1, self.G + 1)[None, :]
        return g <= t

    def at(self, t: int, g: int) -> float:
        if not (1 <= t <= self.T and 1 <= g <= self.G):
            raise ValidationError(f"({t}, {g}) outside table of shape {self.costs.shape}")
        return float(self.costs[t - 1, g - 1])


def _start_costs(prefix: PrefixSums, G: int) -> np.ndarray:
    """``(T, G)`` costs indexed by 0-based start row and length; inf if too long."""
    T = prefix.T
    out = np.full((T, G), np.inf)
    for g in range(1, min(G, T) + 1):
        out[: T - g + 1, g - 1] = prefix.costs_by_length(g)
    return out


def build_cost_table(feats, G: int = DEFAULT_MAX_GROUP) -> SegmentCostTable:
    if G < 1:
        raise ValidationError(f"G must be >= 1, got {G}")
    prefix = PrefixSums(feats)
    T = prefix.T
    costs = np.full((T, G), np.inf)
    for g in range(1, min(G, T) + 1):
        costs[g - 1 :, g - 1] = prefix.costs_by_length(g)
    return SegmentCostTable(costs, int(G))


class IntervalCover:
    """Suffix dynamic program over start frame and number of groups.

    ``stages[i][s]`` is the least cost of covering 0-based rows ``s..T-1``
    with exactly ``i`` groups of length ``<= G``. Stages are added on demand,
    so solving for increasing ``k`` reuses all earlier work.
    """

    def __init__(self, feats, G: int = DEFAULT_MAX_GROUP):
        if G < 1:
            raise ValidationError(f"G must be >= 1, got {G}")
        self.frames = as_frames(feats)
        self.prefix = PrefixSums(self.frames)
        self.T = self.prefix.T
        self.G = min(int(G), self.T)
        self.start_costs = _start_costs(self.prefix, self.G)
        s = np.arange(self.T)[:, None]
        g = np.arange(1, self.G + 1)[None, :]
        self._next = np.minimum(s + g, self.T)
        f0 = np.full(self.T + 1, np.inf)
        f0[self.T] = 0.0
        self.stages = [f0]
        total = self.prefix.cost(1, self.T + 1)
        self._atol = _TIE_RTOL * total

    @property
    def min_k(self) -> int:
        return -(-self.T // self.G)

    @property
    def n_stages(self) -> int:
        """Sequential DP stages computed so far."""
        return len(self.stages) - 1

    def extend(self, k: int) -> None:
        while self.n_stages < k:
            prev = self.stages[-1]
            f = np.empty(self.T + 1)
            f[: self.T] = np.min(self.start_costs + prev[self._next], axis=1)
            f[self.T] = np.inf
            self.stages.append(f)

    def check(self, k: int) -> None:
        if k < 1 or k > self.T:
            raise ValidationError(f"k must satisfy 1 <= k <= T={self.T}, got {k}")
        if k * self.G < self.T:
            raise InfeasibleError(
                f"k={k} groups of at most G={self.G} frames cannot cover T={self.T}; "
                f"minimum feasible k is {self.min_k}"
            )

    def boundaries(self, k: int) -> np.ndarray:
        """Lexicographically smallest optimal 1-based boundary list."""
        self.check(k)
        self.extend(k)
        b = [1]
        s = 0
        for i in range(k, 0, -1):
            cand = self.start_costs[s] + self.stages[i - 1][self._next[s]]
            best = cand.min()
            thr = best + _TIE_RTOL * abs(best) + self._atol
            g = int(np.flatnonzero(cand <= thr)[0]) + 1
            s += g
            b.append(s + 1)
        return np.asarray(b, dtype=np.int64)

    def solve(self, k: int) -> Segmentation:
        b = self.boundaries(k)
        cost = sum(self.prefix.cost(int(lo), int(hi)) for lo, hi in zip(b[:-1], b[1:]))
        seg = Segmentation(b, self.T)
        return Segmentation(b, self.T, objective=float(cost), per_frame_loss=per_frame_loss(self.frames, seg))


def extract_boundaries(feats, k: int, G: int = DEFAULT_MAX_GROUP) -> Segmentation:
    """Exact minimum-cost segmentation into ``k`` groups of at most ``G`` frames.

    The returned segmentation carries the optimal total cost in ``objective``
    and every frame's squared deviation from its group mean in
    ``per_frame_loss``. Among equally good segmentations the one with the
    lexicographically smallest boundary list wins.

    >>> seg = extract_boundaries([[0.], [1.], [10.], [11.]], k=2)
    >>> seg.boundaries.tolist(), seg.objective
    ([1, 3, 5], 1.0)
    """
    return IntervalCover(feats, G).solve(int(k))


def _required_count(quantile: float, T: int) -> int:
    return max(1, math.ceil(quantile * T - 1e-9))


class RateProfile:
    """Per-utterance record of how the selected ``k`` depends on ``delta``.

    For every ``k`` the predicate "at least ``ceil(q T)`` frames have loss
    below ``delta``" holds exactly when the ``ceil(q T)``-th smallest frame
    loss is below ``delta``. Caching that order statistic per ``k`` makes the
    selected ``k`` a cheap, monotone function of ``delta``.
    """

    def __init__(self, feats, quantile: float = DEFAULT_QUANTILE, G: int = DEFAULT_MAX_GROUP):
        if not (0 < quantile <= 1):
            raise ValidationError(f"quantile must lie in (0, 1], got {quantile}")
        if isinstance(feats, FeatureSequence):
            self.duration_sec = feats.duration_sec
        else:
            self.duration_sec = None
        self.cover = IntervalCover(feats, G)
        self.quantile = float(quantile)
        self.required = _required_count(quantile, self.cover.T)
        self.thresholds: dict[int, float] = {}
        self._segs: dict[int, Segmentation] = {}

    @property
    def T(self) -> int:
        return self.cover.T

    def segmentation(self, k: int) -> Segmentation:
        if k not in self._segs:
            self._segs[k] = self.cover.solve(k)
        return self._segs[k]

    def threshold(self, k: int) -> float:
        """``required``-th smallest per-frame loss at ``k`` groups."""
        if k not in self.thresholds:
            loss = self.segmentation(k).per_frame_loss
            self.thresholds[k] = float(np.partition(loss, self.required - 1)[self.required - 1])
            # segmentations are only needed for the selected k
            self._segs.pop(k, None)
        return self.thresholds[k]

    def passes(self, k: int, delta: float) -> bool:
        return self.threshold(k) < delta

    def select(self, delta: float) -> Optional[int]:
        """Smallest ``k`` passing the predicate, or ``None``."""
        for k in range(self.cover.min_k, self.T + 1):
            if self.passes(k, delta):
                return k
        return None

    def select_bisect(self, delta: float) -> Optional[int]:
        lo, hi = self.cover.min_k, self.T
        if not self.passes(hi, delta):
            return None
        while lo < hi:
            mid = (lo + hi) // 2
            if self.passes(mid, delta):
                hi = mid
            else:
                lo = mid + 1
        k = lo
        if k > self.cover.min_k and self.passes(k - 1, delta):
            logger.debug("bisection result k=%d not minimal, falling back to scan", k)
            return self.select(delta)
        return k


def select_k(
    feats,
    delta: float,
    quantile: float = DEFAULT_QUANTILE,
    G: int = DEFAULT_MAX_GROUP,
    search: str = "scan",
) -> Segmentation:
    """Segment with the fewest groups whose per-frame losses mostly fall below ``delta``.

    ``k`` is the smallest value for which at least ``ceil(quantile * T)``
    frames have a squared deviation from their group mean strictly below
    ``delta``. ``search="bisect"`` binary-searches ``k`` and then confirms
    that ``k - 1`` fails, scanning if it does not.
    """
    if delta < 0:
        raise ValidationError(f"delta must be >= 0, got {delta}")
    profile = RateProfile(feats, quantile, G)
    if search == "scan":
        k = profile.select(delta)
    elif search == "bisect":
        k = profile.select_bisect(delta)
    else:
        raise ValidationError(f"unknown search mode {search!r}")
    if k is None:
        raise InfeasibleError(
            f"no k <= T={profile.T} leaves {profile.required} frames with loss < {delta}; raise delta"
        )
    return profile.segmentation(k)


@dataclass(frozen=True)
class CalibrationResult:
    delta: float
    rate_hz: float
    target_hz: float
    converged: bool
    iterations: int
    ks: tuple


def _corpus_rate(ks, durations, pooling: str) -> float:
    if pooling == "total":
        return float(sum(ks) / sum(durations))
    if pooling == "mean":
        return float(np.mean([k / d for k, d in zip(ks, durations)]))
    raise ValidationError(f"unknown pooling {pooling!r}")


def calibrate_delta(
    corpus: Sequence[FeatureSequence],
    target_hz: float,
    quantile: float = DEFAULT_QUANTILE,
    G: int = DEFAULT_MAX_GROUP,
    tol_hz: float = 0.05,
    max_iter: int = 40,
    pooling: str = "total",
    profiles: Optional[Sequence[RateProfile]] = None,
) -> CalibrationResult:
    """Find ``delta`` whose corpus unit rate (before dedup) matches ``target_hz``.

    The rate is total units over total duration (``pooling="total"``) or the
    mean of per-utterance rates (``pooling="mean"``). Geometric bisection
    over ``delta`` stops once the rate is within ``tol_hz``; the rate is a
    step function so an exact hit may not exist, in which case the closest
    probe is returned with ``converged=False``.
    """
    if not corpus:
        raise ValidationError("calibration corpus is empty")
    if target_hz <= 0:
        raise ValidationError("target_hz must be > 0")
    for fs in corpus:
        if target_hz > fs.frame_rate_hz:
            raise ValidationError(f"target {target_hz} Hz exceeds frame rate {fs.frame_rate_hz} Hz")
    if profiles is None:
        profiles = [RateProfile(fs, quantile, G) for fs in corpus]
    durations = [fs.duration_sec for fs in corpus]

    def rate(delta):
        ks = [p.select(delta) for p in profiles]
        return _corpus_rate(ks, durations, pooling), tuple(ks)

    hi = max(p.threshold(p.cover.min_k) for p in profiles)
    hi = 2.0 * hi if hi > 0 else 1.0
    r_hi, ks_hi = rate(hi)
    probes = [(abs(r_hi - target_hz), hi, r_hi, ks_hi)]
    if abs(r_hi - target_hz) <= tol_hz:
        return CalibrationResult(hi, r_hi, target_hz, True, 0, ks_hi)
    if r_hi > target_hz:
        raise CalibrationError(
            f"target {target_hz} Hz is below the minimum reachable rate {r_hi:.4f} Hz",
            bracket=(r_hi, None),
        )

    lo = hi
    floor = hi * 1e-15
    while True:
        lo /= 16.0
        r_lo, ks_lo = rate(lo)
        probes.append((abs(r_lo - target_hz), lo, r_lo, ks_lo))
        if abs(r_lo - target_hz) <= tol_hz:
            return CalibrationResult(lo, r_lo, target_hz, True, 0, ks_lo)
        if r_lo > target_hz:
            break
        if lo < floor:
            raise CalibrationError(
                f"target {target_hz} Hz outside reachable rates [{r_hi:.4f}, {r_lo:.4f}] Hz",
                bracket=(r_hi, r_lo),
            )
        hi, r_hi = lo, r_lo

    it = 0
    for it in range(1, max_iter + 1):
        mid = math.sqrt(lo * hi)
        r, ks = rate(mid)
        probes.append((abs(r - target_hz), mid, r, ks))
        if abs(r - target_hz) <= tol_hz:
            return CalibrationResult(mid, r, target_hz, True, it, ks)
        if r > target_hz:
            lo = mid
        else:
            hi = mid
    _, delta, r, ks = min(probes, key=lambda p: (p[0], p[1]))
    logger.warning("calibration did not reach %.3f Hz within %.3f; closest rate %.4f Hz", target_hz, tol_hz, r)
    return CalibrationResult(delta, r, target_hz, False, it, ks)


def corpus_rate(corpus: Sequence[FeatureSequence], delta: float, quantile=DEFAULT_QUANTILE,
                G=DEFAULT_MAX_GROUP, pooling="total", profiles=None) -> float:
    """Units per second the ``delta`` rule produces on ``corpus``."""
    if profiles is None:
        profiles = [RateProfile(fs, quantile, G) for fs in corpus]
    ks = []
    for p in profiles:
        k = p.select(delta)
        if k is None:
            raise InfeasibleError(f"delta={delta} admits no k")
        ks.append(k)
    return _corpus_rate(ks, [fs.duration_sec for fs in corpus], pooling)


def sylboost_loss(student, teacher, seg: Segmentation) -> float:
    """Mean over frames of the squared error between each student frame and
    the teacher mean of its group, summed over feature dimensions."""
    x = as_frames(student)
    y = as_frames(teacher)
    if x.shape != y.shape:
        raise ValidationError(f"student {x.shape} and teacher {y.shape} shapes differ")
    if seg.T != x.shape[0]:
        raise ValidationError(f"segmentation covers {seg.T} frames, features have {x.shape[0]}")
    target = group_means(y, seg)[seg.group_index()]
    resid = x - target
    return float(np.einsum("ij,ij->", resid, resid) / x.shape[0])
