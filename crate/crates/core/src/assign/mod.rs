//! Assignment-based fusion baseline: proposals of each sample are matched to
//! a reference sample with a rectangular linear assignment over `1 - IoU`.

pub(crate) mod fuse;
mod lap;

pub use fuse::{hungarian_fuse, FusedProposal, HungarianOutput, ReferenceChoice};
pub use lap::{solve_lap, Assignment, CostMatrix, LapError};

#[cfg(test)]
pub(crate) use lap::tests::brute_force as lap_brute_force;
