"""
Normalized min-cut on a loss-prediction matrix
==============================================

Masked-prediction probabilities arrive as per-mask records. They are laid
out in a banded matrix, which a min-cut over contiguous segments then splits.
"""

import numpy as np

from sylunits import assemble_loss_matrix, normalized_mincut
from sylunits.losspred import sliding_window_records

T, span = 40, 8
# three "syllables": a frame is well predicted when it shares one with the
# frame next to the mask
labels = np.repeat([0, 1, 2], [12, 15, 13])


def prob(mask_start, mask_end, t):
    anchor = mask_start - 2 if mask_start > 1 else mask_end
    return 0.9 if labels[t - 1] == labels[anchor] else 0.1


records = sliding_window_records(T, span, prob)
m = assemble_loss_matrix(records, T, span)
print(f"{len(records)} records, {int(m.written.sum())} cells written")
print("band only:", bool(np.all(m.C[~m.band_mask()] == 0)))

###############################################################################
# Cut into three segments.
seg = normalized_mincut(m.C, k=3)
print("boundaries:", seg.boundaries.tolist())
print("planted:   ", [1, 13, 28, 41])
print(f"objective: {seg.objective:.3f}")
