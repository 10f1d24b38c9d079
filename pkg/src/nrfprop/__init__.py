"""Temporal refinement of per-frame foreground/background maps via neighborhood reversible flow."""

from .features import cosine_similarity, describe, l1_distance
from .flow import FlowMatrix, build_flow, keyframe_set, knn_ranks, reversible_rank
from .metrics import dataset_eval, f_beta, frame_eval, temporal_stability_variant
from .objective import ComplementaryWeights, total_objective
from .propagation import (
    PropagationConfig,
    baseline_masks,
    process_video,
    refine,
    run_video,
)
from .superpixel import SuperpixelGrid, enforce_connectivity, slic

__version__ = "0.1.0"
