"""
Segmenting a planted feature sequence
=====================================

A noisy piecewise-constant signal is split back into its pieces, first with
a known number of groups and then with the number chosen by a loss threshold.
"""

import numpy as np

from sylunits import boundary_score, extract_boundaries, select_k
from sylunits.synthetic import planted_sequence

rng = np.random.default_rng(0)

# eight segments of random length, four feature dimensions
lengths = rng.integers(20, 60, size=8)
means = rng.normal(size=(8, 4))
feats, truth = planted_sequence(rng, lengths, means, noise=0.1, frame_rate_hz=50.0)
print(f"T = {feats.T} frames, {feats.duration_sec:.2f} s")
print("planted boundaries:", truth.boundaries.tolist())

###############################################################################
# With the oracle number of groups the DP recovers every boundary.
seg = extract_boundaries(feats, k=truth.k, G=80)
print("recovered boundaries:", seg.boundaries.tolist())
print(f"within-group squared error: {seg.objective:.3f}")

###############################################################################
# Without knowing k, pick the smallest k for which 75% of frames sit within
# ``delta`` of their group mean.
auto = select_k(feats, delta=0.1, quantile=0.75, G=80)
print(f"select_k chose k = {auto.k}")

# a quarter of the frames may exceed delta, so a short segment can be absorbed
# by a neighbour and cost a little recall

score = boundary_score(truth.times(50.0)[1:-1], auto.times(50.0)[1:-1], 0.02)
print(f"precision {score.precision:.2f}  recall {score.recall:.2f}  F1 {score.f1:.2f}")
