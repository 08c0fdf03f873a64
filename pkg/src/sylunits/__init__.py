"""Syllable-like unit discovery from speech features.

Loss-matrix assembly and normalized min-cut, optimal bounded-length
segmentation with rate control, K-Means/agglomerative unit codebooks, and
boundary/purity evaluation.
"""

from .core import (
    FeatureSequence,
    PrefixSums,
    Segmentation,
    UnitSequence,
    ValidationError,
    pairwise_distance_matrix,
    per_frame_loss,
    segment_cost,
)
from .evaluation import (
    BoundaryScore,
    ReferenceAlignment,
    boundary_score,
    match_boundaries,
    pool_scores,
    purity,
    purity_from_counts,
    r_value,
)
from .extraction import (
    CalibrationError,
    CalibrationResult,
    InfeasibleError,
    SegmentCostTable,
    build_cost_table,
    calibrate_delta,
    corpus_rate,
    extract_boundaries,
    select_k,
    sylboost_loss,
)
from .losspred import (
    ConflictError,
    LossPredMatrix,
    MaskProbabilityRecord,
    assemble_loss_matrix,
    cut_objective,
    normalized_mincut,
)
from .quantize import (
    Codebook,
    agglomerate,
    assign_units,
    bitrate,
    dedup,
    fit_codebook,
    kmeans_fit,
    pool_segments,
)

__version__ = "0.1.0"
