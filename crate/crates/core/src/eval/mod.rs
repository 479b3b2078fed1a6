//! Panoptic quality and the uncertainty-removal sweep.

mod pq;
mod sweep;

pub use pq::{
    match_segments, match_segments_with, pq, Aggregate, ClassQuality, ClassStats, EvalError, MatchRule, PQResult,
    PQStats, PQ_IOU,
};
pub use sweep::{
    sweep_set, threshold_for_removal, threshold_grid, uncertainty_sweep, SweepCurve, SweepImage, SweepPoint,
    DEFAULT_GRID_POINTS, DEFAULT_MAX_REMOVAL, SWEEP_IOU,
};
