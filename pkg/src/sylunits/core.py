"""Value types and shared numeric kernels.

Frame indices in the data model are 1-based: a :class:`Segmentation` over
``T`` frames always has ``boundaries[0] == 1`` and ``boundaries[-1] == T + 1``
and group ``i`` holds frames ``boundaries[i] <= t < boundaries[i + 1]``.
File readers and writers convert to 0-based offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A ``T x D`` matrix of per-frame features at a fixed frame rate."""

    frames: np.ndarray
    frame_rate_hz: float = 50.0
    source_layer: Optional[int] = None

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64, copy=True)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2:
            raise ValidationError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValidationError(f"frames must be non-empty, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("frames contain non-finite values")
        rate = float(self.frame_rate_hz)
        if not (np.isfinite(rate) and rate > 0):
            raise ValidationError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        object.__setattr__(self, "frames", _readonly(frames))
        object.__setattr__(self, "frame_rate_hz", rate)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_sec(self) -> float:
        return self.T / self.frame_rate_hz

    def __len__(self) -> int:
        return self.T


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Ordered 1-based boundaries partitioning ``T`` frames into ``k`` groups.

    ``objective`` holds the optimized value when the segmentation came out of
    a solver (total within-group squared deviation for feature extraction,
    normalized-cut score for the loss matrix). ``per_frame_loss`` is the
    squared distance of each frame to its group mean, when available.
    """

    boundaries: np.ndarray
    T: int
    objective: Optional[float] = None
    per_frame_loss: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        b = np.asarray(self.boundaries)
        if b.ndim != 1 or b.size < 2:
            raise ValidationError("boundaries need at least two entries")
        if not np.issubdtype(b.dtype, np.integer):
            if not np.all(b == np.round(b)):
                raise ValidationError("boundaries must be integers")
        b = b.astype(np.int64)
        T = int(self.T)
        if b[0] != 1 or b[-1] != T + 1:
            raise ValidationError(f"boundaries must start at 1 and end at T+1={T + 1}, got {b[0]}..{b[-1]}")
        if np.any(np.diff(b) <= 0):
            raise ValidationError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", _readonly(b))
        object.__setattr__(self, "T", T)
        if self.per_frame_loss is not None:
            loss = np.asarray(self.per_frame_loss, dtype=np.float64)
            if loss.shape != (T,):
                raise ValidationError(f"per_frame_loss must have shape ({T},)")
            object.__setattr__(self, "per_frame_loss", _readonly(loss.copy()))

    @classmethod
    def from_lengths(cls, lengths: Sequence[int], **kwargs) -> "Segmentation":
        lengths = np.asarray(lengths, dtype=np.int64)
        b = np.concatenate([[1], 1 + np.cumsum(lengths)])
        return cls(b, int(lengths.sum()), **kwargs)

    @property
    def k(self) -> int:
        return len(self.boundaries) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def groups(self) -> list[range]:
        """Frame ranges (1-based) of every group."""
        b = self.boundaries
        return [range(int(b[i]), int(b[i + 1])) for i in range(self.k)]

    def group_index(self) -> np.ndarray:
        """0-based group id of every frame ``t = 1..T``."""
        return np.repeat(np.arange(self.k), self.lengths)

    def times(self, frame_rate_hz: float) -> np.ndarray:
        """Boundary positions in seconds, including both utterance edges."""
        return (self.boundaries - 1) / float(frame_rate_hz)

    def __eq__(self, other):
        if not isinstance(other, Segmentation):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.boundaries, other.boundaries)

    def __hash__(self):
        return hash((self.T, self.boundaries.tobytes()))


@dataclass(frozen=True, eq=False)
class UnitSequence:
    """Unit ids over contiguous frame intervals ``[start, end)`` (1-based)."""

    unit_ids: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    frame_rate_hz: float = 50.0

    def __post_init__(self):
        ids = np.asarray(self.unit_ids, dtype=np.int64).reshape(-1)
        starts = np.asarray(self.starts, dtype=np.int64).reshape(-1)
        ends = np.asarray(self.ends, dtype=np.int64).reshape(-1)
        if not (ids.size == starts.size == ends.size):
            raise ValidationError("unit_ids, starts and ends must have equal length")
        if np.any(ends <= starts):
            raise ValidationError("every unit interval needs start < end")
        if ids.size and np.any(starts[1:] != ends[:-1]):
            raise ValidationError("unit intervals must be contiguous and ordered")
        if float(self.frame_rate_hz) <= 0:
            raise ValidationError("frame_rate_hz must be > 0")
        object.__setattr__(self, "unit_ids", _readonly(ids))
        object.__setattr__(self, "starts", _readonly(starts))
        object.__setattr__(self, "ends", _readonly(ends))
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))

    def __len__(self) -> int:
        return int(self.unit_ids.size)

    def __iter__(self):
        return iter(zip(self.unit_ids.tolist(), self.starts.tolist(), self.ends.tolist()))

    @property
    def num_frames(self) -> int:
        if not len(self):
            return 0
        return int(self.ends[-1] - self.starts[0])

    @property
    def duration_sec(self) -> float:
        return self.num_frames / self.frame_rate_hz

    def rate_hz(self) -> float:
        """Units per second of covered audio."""
        return len(self) / self.duration_sec

    def __eq__(self, other):
        if not isinstance(other, UnitSequence):
            return NotImplemented
        return (
            np.array_equal(self.unit_ids, other.unit_ids)
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.ends, other.ends)
            and self.frame_rate_hz == other.frame_rate_hz
        )


def as_frames(feats) -> np.ndarray:
    if isinstance(feats, FeatureSequence):
        return feats.frames
    return FeatureSequence(feats).frames


def pairwise_distance_matrix(feats) -> np.ndarray:
    """Euclidean distances between every pair of frames, ``T x T``.

    The diagonal is exactly zero and the result exactly symmetric.
    """
    x = as_frames(feats)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    A = np.sqrt(d2)
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 0.0)
    return A


class PrefixSums:
    """Prefix sums of frames and squared frame norms for O(D) range costs.

    Frames are centred on their global mean first, which leaves every range
    cost unchanged but keeps the ``sum(|x|^2) - |sum(x)|^2 / n`` identity away
    from catastrophic cancellation.
    """

    def __init__(self, feats):
        x = as_frames(feats).astype(np.float64)
        x = x - x.mean(axis=0)
        T, D = x.shape
        self.T = T
        self.D = D
        self.sum = np.zeros((T + 1, D))
        np.cumsum(x, axis=0, out=self.sum[1:])
        self.sumsq = np.zeros(T + 1)
        np.cumsum(np.einsum("ij,ij->i", x, x), out=self.sumsq[1:])

    def cost(self, lo: int, hi: int) -> float:
        """Within-range squared deviation for 1-based half-open ``[lo, hi)``."""
        if not (1 <= lo < hi <= self.T + 1):
            raise ValidationError(f"invalid range [{lo}, {hi}) for T={self.T}")
        s = self.sum[hi - 1] - self.sum[lo - 1]
        q = self.sumsq[hi - 1] - self.sumsq[lo - 1]
        return max(float(q - s @ s / (hi - lo)), 0.0)

    def costs_by_length(self, g: int) -> np.ndarray:
        """Costs of every length-``g`` range, indexed by 0-based start row."""
        s = self.sum[g:] - self.sum[:-g]
        q = self.sumsq[g:] - self.sumsq[:-g]
        c = q - np.einsum("ij,ij->i", s, s) / g
        return np.maximum(c, 0.0)


def segment_cost(feats, lo: int, hi: int, prefix: Optional[PrefixSums] = None) -> float:
    """Sum of squared deviations of frames ``lo..hi-1`` from their mean.

    Pass a precomputed ``prefix`` to answer many queries on the same sequence.
    """
    if prefix is None:
        prefix = PrefixSums(feats)
    return prefix.cost(int(lo), int(hi))


def group_means(feats, seg: Segmentation) -> np.ndarray:
    """Mean frame of every group, ``k x D``."""
    x = as_frames(feats)
    if seg.T != x.shape[0]:
        raise ValidationError(f"segmentation covers {seg.T} frames, features have {x.shape[0]}")
    sums = np.add.reduceat(x, seg.boundaries[:-1] - 1, axis=0)
    return sums / seg.lengths[:, None]


def per_frame_loss(feats, seg: Segmentation) -> np.ndarray:
    """Squared distance of every frame to the mean of its group."""
    x = as_frames(feats)
    means = group_means(x, seg)
    resid = x - means[seg.group_index()]
    return np.einsum("ij,ij->i", resid, resid)
