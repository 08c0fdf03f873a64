"""Boundary-detection and clustering scores against reference alignments."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import UnitSequence, ValidationError

DEFAULT_TOLERANCES = (0.02, 0.05)

# slack on the tolerance window so frame-grid times are not lost to round-off
_TOL_SLACK = 1e-9


@dataclass(frozen=True)
class ReferenceAlignment:
    """Labelled, ordered, nonoverlapping time intervals in seconds."""

    intervals: tuple

    def __post_init__(self):
        ivs = tuple((float(s), float(e), str(lab)) for s, e, lab in self.intervals)
        for s, e, _ in ivs:
            if not s < e:
                raise ValidationError(f"interval [{s}, {e}] needs start < end")
        for (_, e0, _), (s1, _, _) in zip(ivs, ivs[1:]):
            if s1 < e0 - _TOL_SLACK:
                raise ValidationError("reference intervals must be ordered and nonoverlapping")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    @property
    def end_sec(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0

    def boundaries(self) -> np.ndarray:
        """Sorted unique interval edges in seconds."""
        edges = [t for s, e, _ in self.intervals for t in (s, e)]
        return _unique_times(edges)


def _unique_times(times) -> np.ndarray:
    t = np.sort(np.asarray(list(times), dtype=np.float64))
    if t.size == 0:
        return t
    keep = np.concatenate([[True], np.diff(t) > _TOL_SLACK])
    return t[keep]


def strip_edges(times, end_sec: float, start_sec: float = 0.0) -> np.ndarray:
    """Drop boundaries sitting on the utterance start or end."""
    t = np.asarray(times, dtype=np.float64)
    keep = (np.abs(t - start_sec) > _TOL_SLACK) & (np.abs(t - end_sec) > _TOL_SLACK)
    return t[keep]


def unit_boundaries(units: UnitSequence) -> np.ndarray:
    """Interval edges of a unit sequence in seconds (frame 1 is time 0)."""
    if len(units) == 0:
        return np.zeros(0)
    frames = np.concatenate([units.starts, units.ends[-1:]])
    return (frames - 1) / units.frame_rate_hz


def match_pairs(ref, hyp, tol: float) -> list[tuple[int, int]]:
    """One-to-one matches between reference and hypothesis boundaries.

    All pairs within ``tol`` are visited closest first, ties by reference
    then hypothesis index; a pair is kept when neither side is taken yet.
    """
    ref = np.asarray(ref, dtype=np.float64)
    hyp = np.asarray(hyp, dtype=np.float64)
    if ref.size == 0 or hyp.size == 0:
        return []
    d = np.abs(ref[:, None] - hyp[None, :])
    ri, hi = np.nonzero(d <= tol + _TOL_SLACK)
    order = np.lexsort((hi, ri, d[ri, hi]))
    used_r, used_h = set(), set()
    pairs = []
    for n in order:
        r, h = int(ri[n]), int(hi[n])
        if r in used_r or h in used_h:
            continue
        used_r.add(r)
        used_h.add(h)
        pairs.append((r, h))
    return sorted(pairs)


def match_boundaries(ref, hyp, tol: float) -> int:
    return len(match_pairs(ref, hyp, tol))


@dataclass(frozen=True)
class BoundaryScore:
    precision: float
    recall: float
    f1: float
    r_value: float
    tolerance_sec: float
    hits: int
    num_ref: int
    num_hyp: int

    def as_dict(self) -> dict:
        return asdict(self)


def r_value(recall: float, num_ref: int, num_hyp: int) -> float:
    """Combined hit-rate / over-segmentation score (1 is perfect)."""
    hr = 100.0 * recall
    os_ = 100.0 * (num_hyp / num_ref - 1.0)
    r1 = math.sqrt((100.0 - hr) ** 2 + os_ ** 2)
    r2 = (-os_ + hr - 100.0) / math.sqrt(2.0)
    return 1.0 - (abs(r1) + abs(r2)) / 200.0


def score_from_counts(hits: int, num_ref: int, num_hyp: int, tol: float) -> BoundaryScore:
    if num_ref == 0:
        raise ValidationError("recall is undefined without reference boundaries")
    precision = hits / num_hyp if num_hyp else 0.0
    recall = hits / num_ref
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return BoundaryScore(precision, recall, f1, r_value(recall, num_ref, num_hyp), float(tol), int(hits), int(num_ref), int(num_hyp))


def boundary_score(ref, hyp, tol: float) -> BoundaryScore:
    """Precision, recall, F1 and R-value of ``hyp`` against ``ref`` (seconds)."""
    ref = np.asarray(ref, dtype=np.float64)
    hyp = np.asarray(hyp, dtype=np.float64)
    return score_from_counts(match_boundaries(ref, hyp, tol), ref.size, hyp.size, tol)


def pool_scores(scores: Sequence[BoundaryScore], mode: str = "pooled") -> BoundaryScore:
    """Combine per-utterance scores at one tolerance.

    ``pooled`` sums hits and boundary counts over the corpus before scoring;
    ``mean`` averages precision, recall, F1 and R over utterances.
    """
    if not scores:
        raise ValidationError("no scores to combine")
    tol = scores[0].tolerance_sec
    hits = sum(s.hits for s in scores)
    nr = sum(s.num_ref for s in scores)
    nh = sum(s.num_hyp for s in scores)
    if mode == "pooled":
        return score_from_counts(hits, nr, nh, tol)
    if mode == "mean":
        return BoundaryScore(
            float(np.mean([s.precision for s in scores])),
            float(np.mean([s.recall for s in scores])),
            float(np.mean([s.f1 for s in scores])),
            float(np.mean([s.r_value for s in scores])),
            tol, hits, nr, nh,
        )
    raise ValidationError(f"unknown mode {mode!r}")


def purity_counts(units: UnitSequence, ref: ReferenceAlignment, weighting: str = "segment") -> Counter:
    """Unit/label co-occurrence counts.

    Each unit interval is paired with the reference interval it overlaps
    most (earlier interval on ties). ``segment`` weighting counts each pair
    once; ``frame`` weights it by the unit's frame count. Units overlapping
    no reference interval are skipped.
    """
    if weighting not in ("segment", "frame"):
        raise ValidationError(f"unknown weighting {weighting!r}")
    counts: Counter = Counter()
    if not len(ref) or not len(units):
        return counts
    rs = np.array([s for s, _, _ in ref.intervals])
    re_ = np.array([e for _, e, _ in ref.intervals])
    labels = [lab for _, _, lab in ref.intervals]
    rate = units.frame_rate_hz
    for uid, start, end in units:
        us, ue = (start - 1) / rate, (end - 1) / rate
        overlap = np.minimum(ue, re_) - np.maximum(us, rs)
        j = int(np.argmax(overlap))
        if overlap[j] <= 0:
            continue
        counts[(uid, labels[j])] += (end - start) if weighting == "frame" else 1
    return counts


def purity_from_counts(counts: Mapping) -> tuple[float, float]:
    """``(cluster_purity, syllable_purity)`` from ``{(unit, label): n}``."""
    total = sum(counts.values())
    if total <= 0:
        raise ValidationError("no overlap between units and reference")
    best_label: dict = {}
    best_unit: dict = {}
    for (u, lab), n in counts.items():
        best_label[u] = max(best_label.get(u, 0), n)
        best_unit[lab] = max(best_unit.get(lab, 0), n)
    return sum(best_label.values()) / total, sum(best_unit.values()) / total


def purity(units: UnitSequence, ref: ReferenceAlignment, weighting: str = "segment") -> tuple[float, float]:
    """Cluster purity and syllable purity of ``units`` against ``ref``."""
    return purity_from_counts(purity_counts(units, ref, weighting))
