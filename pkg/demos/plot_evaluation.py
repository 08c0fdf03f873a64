"""
Scoring boundaries and units
============================

Boundary precision, recall, F1 and R-value at two tolerances, and the purity
of a unit inventory against reference labels.
"""

from sylunits import ReferenceAlignment, UnitSequence, boundary_score, purity

ref = [0.10, 0.50, 0.90]
hyp = [0.12, 0.52, 0.70, 0.93]

for tol in (0.02, 0.05):
    s = boundary_score(ref, hyp, tol)
    print(f"tol {tol * 1000:.0f} ms: P {s.precision:.3f}  R {s.recall:.3f}  F1 {s.f1:.3f}  R-value {s.r_value:.3f}")

###############################################################################
# Six reference syllables and a two-unit labelling of them.
labels = ["x", "x", "x", "y", "x", "x"]
alignment = ReferenceAlignment(tuple((i * 0.1, (i + 1) * 0.1, lab) for i, lab in enumerate(labels)))
units = UnitSequence([0, 0, 0, 0, 1, 1], [1, 6, 11, 16, 21, 26], [6, 11, 16, 21, 26, 31], 50.0)
cp, sp = purity(units, alignment)
print(f"cluster purity {cp:.3f}, syllable purity {sp:.3f}")
