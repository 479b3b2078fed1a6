//! Fusion of Monte Carlo ensemble samples from universal panoptic networks.
//!
//! A universal panoptic network emits a fixed set of `N` proposals per forward
//! pass, each a class-logit vector plus a low resolution mask-logit grid. Running
//! the network `Q` times under different parameter draws (e.g. dropout masks)
//! yields an ensemble whose proposals have no correspondence across samples.
//! This crate turns such an ensemble into a single panoptic map plus a
//! per-pixel uncertainty map:
//!
//! 1. [`per_sample`] reduces each sample to its non-background proposals and a
//!    pixel-to-proposal map.
//! 2. [`stuff`] averages the per-pixel class distributions across samples and
//!    labels amorphous ("stuff") regions.
//! 3. [`things`] clusters instance proposals across samples with a sequential
//!    IoU-threshold scheme and paints them in order of support.
//! 4. [`uncertainty`] derives entropy-based maps and optional pruning.
//!
//! [`assign`] holds the linear-assignment baseline, [`baseline`] the
//! single-sample reference post-processing, [`eval`] the panoptic quality
//! metric and uncertainty-removal sweep, and [`synth`] a synthetic ensemble
//! generator with known ground truth.

pub mod assign;
pub mod baseline;
pub mod bench;
pub mod catalog;
pub mod eval;
pub mod mask;
pub mod panoptic;
pub mod per_sample;
pub mod pipeline;
pub mod store;
pub mod stuff;
pub mod synth;
pub mod things;
pub mod uncertainty;

pub use catalog::{ClassCatalog, ClassEntry, ClassKind};
pub use mask::BitMask;
pub use panoptic::{Label, PanopticMap};
pub use per_sample::{EnsembleBatch, PerSampleSegmentation};
