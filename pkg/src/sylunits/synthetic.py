"""Planted piecewise-constant feature corpora with known boundaries and labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureSequence, Segmentation
from .evaluation import ReferenceAlignment


@dataclass
class PlantedUtterance:
    utt_id: str
    feats: FeatureSequence
    seg: Segmentation
    labels: list

    def alignment(self) -> ReferenceAlignment:
        """Reference intervals in seconds, one per planted segment."""
        t = self.seg.times(self.feats.frame_rate_hz)
        return ReferenceAlignment(tuple((float(a), float(b), str(lab)) for a, b, lab in zip(t[:-1], t[1:], self.labels)))


def planted_sequence(rng, lengths, means, noise=0.0, frame_rate_hz=50.0):
    """Frames equal to ``means[i]`` over segment ``i`` plus Gaussian noise."""
    lengths = np.asarray(lengths, dtype=np.int64)
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] == 1 and lengths.size > 1:
        means = means.T
    x = np.repeat(means, lengths, axis=0)
    if noise:
        x = x + rng.normal(scale=noise, size=x.shape)
    return FeatureSequence(x, frame_rate_hz), Segmentation.from_lengths(lengths)


def planted_corpus(
    n_utts: int,
    seed: int = 0,
    n_labels: int = 3,
    dim: int = 8,
    min_len: int = 5,
    max_len: int = 15,
    segs_range=(8, 20),
    noise: float = 0.05,
    frame_rate_hz: float = 50.0,
    label_scale: float = 1.0,
) -> list[PlantedUtterance]:
    """Utterances whose segments draw from ``n_labels`` fixed mean vectors.

    Adjacent segments never share a label, so every planted boundary is a
    real change point.
    """
    rng = np.random.default_rng(seed)
    label_means = rng.normal(scale=label_scale, size=(n_labels, dim))
    out = []
    for u in range(n_utts):
        k = int(rng.integers(segs_range[0], segs_range[1] + 1))
        labels = [int(rng.integers(n_labels))]
        for _ in range(k - 1):
            nxt = int(rng.integers(n_labels - 1))
            labels.append(nxt if nxt < labels[-1] else nxt + 1)
        lengths = rng.integers(min_len, max_len + 1, size=k)
        feats, seg = planted_sequence(rng, lengths, label_means[labels], noise, frame_rate_hz)
        out.append(PlantedUtterance(f"utt{u:04d}", feats, seg, labels))
    return out
