"""
From segments to discrete units
===============================

Segment features are mean-pooled, clustered with k-means and merged by
agglomeration into a small unit inventory. Each utterance then becomes a
deduplicated unit string, and the stream rate gives a bitrate.
"""

import numpy as np

from sylunits import assign_units, bitrate, dedup, fit_codebook, pool_segments, purity
from sylunits.synthetic import planted_corpus

utts = planted_corpus(40, seed=3, n_labels=4)
pooled = np.concatenate([pool_segments(u.feats, u.seg) for u in utts])
print(f"{pooled.shape[0]} pooled segment vectors of dimension {pooled.shape[1]}")

###############################################################################
# Eight k-means centroids, merged down to four units.
codebook = fit_codebook(pooled, U=4, K=8, seed=0)
print("centroid -> unit map:", codebook.agglomeration_map.tolist())

u = utts[0]
units = dedup(assign_units(u.feats, u.seg, codebook))
print("planted labels:", u.labels)
print("unit ids:      ", units.unit_ids.tolist())
print("purity (cluster, syllable): (%.2f, %.2f)" % purity(units, u.alignment()))

###############################################################################
# Bitrate of the unit stream.
total_units = sum(len(dedup(assign_units(v.feats, v.seg, codebook))) for v in utts)
total_sec = sum(v.feats.duration_sec for v in utts)
rate = total_units / total_sec
print(f"{rate:.2f} units/s -> {bitrate(rate, codebook.U):.1f} bits/s")
print(f"at 5 units/s a 4096-unit inventory needs {bitrate(5.0, 4096):.0f} bits/s")
