"""Error-state EKF for monocular VIO with landmark states, depth
subfilters, chi-square outlier gating, and feature lifecycle management."""
from .filter import (
    FilterNumericsError,
    FrameDiagnostics,
    VioFilter,
    mahalanobis_gate,
    process_frame,
)
from .state import (
    MOTION_DIM,
    ErrorStateSample,
    FilterConfig,
    FilterState,
    apply_retraction,
    error_state,
    init_filter,
    motion_difference,
    propagate,
    propagation_jacobians,
    symmetrize,
)
from .tracks import (
    Track,
    TrackStatus,
    TrackTable,
    select_in_state_features,
    subfilter_depth_update,
)
from .triangulation import InsufficientParallax, triangulate_angular

__all__ = [
    "ErrorStateSample",
    "FilterConfig",
    "FilterNumericsError",
    "FilterState",
    "FrameDiagnostics",
    "InsufficientParallax",
    "MOTION_DIM",
    "Track",
    "TrackStatus",
    "TrackTable",
    "VioFilter",
    "apply_retraction",
    "error_state",
    "init_filter",
    "mahalanobis_gate",
    "motion_difference",
    "process_frame",
    "propagate",
    "propagation_jacobians",
    "select_in_state_features",
    "subfilter_depth_update",
    "symmetrize",
    "triangulate_angular",
]
