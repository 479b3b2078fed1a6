//! Synthetic scenes and ensembles with known ground truth, plus the combined
//! Gaussian and shot noise image corruption.
//!
//! A scene is a stack of horizontal stuff bands with non-overlapping thing
//! instances painted on top. An ensemble over a scene holds, per sample, one
//! proposal per surviving instance and one per stuff class, each instance
//! mask independently translated and dilated, padded with background
//! proposals and shuffled. The correspondence table records which planted
//! object each proposal came from.

mod corrupt;
mod ensemble;
mod scene;

use thiserror::Error;

use crate::catalog::CatalogError;
use crate::per_sample::BatchError;

pub use corrupt::{corrupt_image, CorruptionParams};
pub use ensemble::{gen_ensemble, EnsembleLayout, JitterSpec, ProposalOrigin, SynthEnsemble};
pub use scene::{gen_scene, PlantedInstance, Scene, SceneSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("placed only {placed} of {requested} instances after {attempts} attempts")]
    InfeasiblePacking {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error("{needed} proposals needed but only {available} slots")]
    ProposalBudget { needed: usize, available: usize },
    #[error("severity must be 1, 2 or 3, got {0}")]
    BadSeverity(u8),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Batch(#[from] BatchError),
}
