"""Loss-prediction matrix assembly and normalized min-cut segmentation.

A masked-prediction model is run with contiguous masks slid over the
utterance. For a mask starting right after frame ``r`` the probabilities of
the first ``span // 2`` masked frames fill row ``r`` above the diagonal; for
a mask ending right before frame ``r`` the probabilities of the last
``span // 2`` masked frames fill row ``r`` below it. Everything outside that
band stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import Segmentation, ValidationError

DEFAULT_SPAN = 50

# segment ratios whose denominator falls below this contribute zero
_DENOM_EPS = 1e-12
_TIE_RTOL = 1e-12


class ConflictError(ValueError):
    """Two records write the same cell of the loss matrix."""


@dataclass(frozen=True)
class MaskProbabilityRecord:
    """Probabilities of the teacher labels at masked frames for one mask.

    ``mask_start`` and ``mask_end`` are inclusive 1-based frame indices.
    """

    mask_start: int
    mask_end: int
    probs: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mask_start > self.mask_end:
            raise ValidationError(f"mask_start {self.mask_start} > mask_end {self.mask_end}")
        if self.mask_start < 1:
            raise ValidationError(f"mask_start must be >= 1, got {self.mask_start}")
        probs = {}
        for t, p in self.probs.items():
            t = int(t)
            p = float(p)
            if not (self.mask_start <= t <= self.mask_end):
                raise ValidationError(f"timestep {t} outside mask [{self.mask_start}, {self.mask_end}]")
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"probability {p} at t={t} outside [0, 1]")
            probs[t] = p
        object.__setattr__(self, "probs", probs)

    @property
    def length(self) -> int:
        return self.mask_end - self.mask_start + 1


@dataclass(frozen=True, eq=False)
class LossPredMatrix:
    """Banded ``T x T`` matrix ``C`` indexed 0-based as ``C[r - 1, c - 1]``.

    ``written`` marks the cells some record filled.
    """

    C: np.ndarray
    span: int
    written: np.ndarray = None

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValidationError(f"C must be square, got {C.shape}")
        if np.any(C < 0) or np.any(C > 1) or not np.all(np.isfinite(C)):
            raise ValidationError("C entries must lie in [0, 1]")
        object.__setattr__(self, "C", C)
        if self.written is None:
            object.__setattr__(self, "written", C != 0)

    @property
    def T(self) -> int:
        return self.C.shape[0]

    def band_mask(self) -> np.ndarray:
        return band_mask(self.T, self.span)


def band_mask(T: int, span: int) -> np.ndarray:
    """Cells ``r != c`` with ``|r - c| <= span // 2``."""
    idx = np.arange(T)
    off = np.abs(idx[:, None] - idx[None, :])
    return (off > 0) & (off <= span // 2)


def assemble_loss_matrix(records: Iterable[MaskProbabilityRecord], T: int, span: int = DEFAULT_SPAN) -> LossPredMatrix:
    """Place every record's probabilities into the loss matrix.

    Assembly is order independent. A triangle whose anchor row falls outside
    ``[1, T]`` (mask touching an utterance edge) is skipped. Writing one cell
    twice raises :class:`ConflictError`.
    """
    if span < 2 or span % 2:
        raise ValidationError(f"span must be even and >= 2, got {span}")
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    half = span // 2
    C = np.zeros((T, T))
    written = np.zeros((T, T), dtype=bool)

    def put(r, c, p, rec):
        if written[r - 1, c - 1]:
            raise ConflictError(f"cell ({r}, {c}) written twice (second by mask [{rec.mask_start}, {rec.mask_end}])")
        written[r - 1, c - 1] = True
        C[r - 1, c - 1] = p

    for rec in records:
        if rec.mask_end > T:
            raise ValidationError(f"mask [{rec.mask_start}, {rec.mask_end}] exceeds T={T}")
        if rec.length > span:
            raise ValidationError(f"mask [{rec.mask_start}, {rec.mask_end}] longer than span={span}")
        # upper triangle: mask starts just after row r
        r = rec.mask_start - 1
        if r >= 1:
            for c in range(rec.mask_start, min(rec.mask_start + half, rec.mask_end + 1)):
                if c in rec.probs and c - r <= half:
                    put(r, c, rec.probs[c], rec)
        # lower triangle: mask ends just before row r
        r = rec.mask_end + 1
        if r <= T:
            for c in range(max(rec.mask_end - half + 1, rec.mask_start), rec.mask_end + 1):
                if c in rec.probs and r - c <= half:
                    put(r, c, rec.probs[c], rec)
    return LossPredMatrix(C, int(span), written)


def sliding_window_records(T: int, span: int, prob) -> list[MaskProbabilityRecord]:
    """Records for a full sliding-window export.

    One mask starts after every frame ``r = 0..T-1`` and one ends before
    every frame ``r = 2..T+1``; the edge-clipped masks needed to reach the
    first rows are included. ``prob(mask_start, mask_end, t)`` supplies each
    probability.
    """
    masks = set()
    for r in range(0, T):
        masks.add((r + 1, min(T, r + span)))
    for r in range(2, T + 2):
        masks.add((max(1, r - span), r - 1))
    out = []
    for lo, hi in sorted(masks):
        out.append(MaskProbabilityRecord(lo, hi, {t: prob(lo, hi, t) for t in range(lo, hi + 1)}))
    return out


class _CutScores:
    """Normalized-cut score of every contiguous segment via 2-D prefix sums."""

    def __init__(self, C: np.ndarray):
        C = np.asarray(C, dtype=np.float64)
        T = C.shape[0]
        self.T = T
        P = np.zeros((T + 1, T + 1))
        P[1:, 1:] = C.cumsum(0).cumsum(1)
        self.P = P
        deg = C.sum(axis=1) + C.sum(axis=0)
        self.deg = np.concatenate([[0.0], np.cumsum(deg)])

    def score(self, a: int, b: int) -> float:
        """Score of 0-based rows ``a..b-1``."""
        P = self.P
        within = P[b, b] - P[a, b] - P[b, a] + P[a, a]
        denom = self.deg[b] - self.deg[a] - within
        return float(within / denom) if denom > _DENOM_EPS else 0.0

    def matrix(self) -> np.ndarray:
        """``(T+1, T+1)`` scores ``R[a, b]`` for ``a < b``; ``-inf`` elsewhere."""
        P = self.P
        d = np.diag(P)
        # within[a, b] = P[b,b] - P[b,a] - P[a,b] + P[a,a]
        within = d[None, :] - P.T - P + d[:, None]
        denom = self.deg[None, :] - self.deg[:, None] - within
        with np.errstate(divide="ignore", invalid="ignore"):
            R = np.where(denom > _DENOM_EPS, within / denom, 0.0)
        a = np.arange(self.T + 1)
        R[a[:, None] >= a[None, :]] = -np.inf
        return R


def cut_objective(C, boundaries) -> float:
    """Normalized-cut objective of a 1-based boundary list on ``C``."""
    if isinstance(C, LossPredMatrix):
        C = C.C
    scores = _CutScores(C)
    b = np.asarray(boundaries) - 1
    return float(sum(scores.score(int(lo), int(hi)) for lo, hi in zip(b[:-1], b[1:])))


def normalized_mincut(C, k: int) -> Segmentation:
    """Contiguous ``k``-group segmentation maximising the normalized-cut score.

    Each group contributes its within-group mass divided by its degree minus
    that mass. Solved exactly by a suffix dynamic program in ``O(T^2 k)``;
    ties go to the lexicographically smallest boundary list. The maximised
    score is returned in ``objective``.
    """
    if isinstance(C, LossPredMatrix):
        C = C.C
    C = np.asarray(C, dtype=np.float64)
    T = C.shape[0]
    if not (1 <= k <= T):
        raise ValidationError(f"k must satisfy 1 <= k <= T={T}, got {k}")
    R = _CutScores(C).matrix()
    # stages[i][a]: best score covering rows a..T-1 with i groups
    neg = np.full(T + 1, -np.inf)
    f = neg.copy()
    f[T] = 0.0
    stages = [f]
    for _ in range(k):
        f = np.max(R + stages[-1][None, :], axis=1)
        stages.append(f)
    scale = max(float(np.max(np.abs(R[np.isfinite(R)]), initial=0.0)), 1.0)
    b = [1]
    a = 0
    total = 0.0
    for i in range(k, 0, -1):
        cand = R[a] + stages[i - 1]
        best = cand.max()
        thr = best - _TIE_RTOL * max(abs(best), scale)
        nxt = int(np.flatnonzero(cand >= thr)[0])
        total += R[a, nxt]
        a = nxt
        b.append(a + 1)
    return Segmentation(np.asarray(b), T, objective=float(total))
