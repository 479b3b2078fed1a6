//! Resolved run configuration. Values come from defaults, then an optional
//! JSON file, then command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use panfuse::assign::ReferenceChoice;
use panfuse::baseline::BaselinePruning;
use panfuse::eval::{DEFAULT_GRID_POINTS, DEFAULT_MAX_REMOVAL};
use panfuse::per_sample::UpscaleMode;
use panfuse::pipeline::{Method, PipelineOptions};
use panfuse::synth::{EnsembleLayout, JitterSpec, SceneSpec};
use panfuse::things::FusionParams;
use panfuse::uncertainty::{Measure, PruneParams};

use crate::errors::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub method: Method,
    pub measure: Measure,
    pub upscale: UpscaleMode,
    pub iou_threshold: f64,
    pub min_member_fraction: f64,
    pub prune: bool,
    pub min_prob: f64,
    pub min_pixels: usize,
    pub baseline_prune: bool,
    pub baseline_min_score: f64,
    pub baseline_min_pixels: usize,
    /// Fuse only the first this many samples of each ensemble.
    pub max_samples: Option<usize>,
    /// Random reference sample for the assignment method; first sample when unset.
    pub reference_seed: Option<u64>,
    /// Worker threads; all available cores when unset.
    pub workers: Option<usize>,

    /// Explicit sweep thresholds; a quantile grid when unset.
    pub thresholds: Option<Vec<f64>>,
    pub sweep_points: usize,
    pub sweep_max_removal: f64,
    pub hist_bins: usize,

    pub images: usize,
    pub scene: SceneSpec,
    pub layout: EnsembleLayout,
    pub jitter: JitterSpec,

    pub severity: u8,
    pub seed: u64,

    pub bench_methods: Vec<Method>,
    pub bench_samples: Vec<usize>,
    pub bench_repeats: usize,
}

impl Default for Config {
    fn default() -> Self {
        let fusion = FusionParams::default();
        let prune = PruneParams::default();
        let base = BaselinePruning::default();
        Self {
            method: Method::Ours,
            measure: Measure::PredictiveEntropy,
            upscale: UpscaleMode::Bilinear,
            iou_threshold: fusion.iou_threshold,
            min_member_fraction: fusion.min_member_fraction,
            prune: true,
            min_prob: prune.min_prob,
            min_pixels: prune.min_pixels,
            baseline_prune: true,
            baseline_min_score: base.min_score,
            baseline_min_pixels: base.min_pixels,
            max_samples: None,
            reference_seed: None,
            workers: None,
            thresholds: None,
            sweep_points: DEFAULT_GRID_POINTS,
            sweep_max_removal: DEFAULT_MAX_REMOVAL,
            hist_bins: 30,
            images: 4,
            scene: SceneSpec::default(),
            layout: EnsembleLayout::default(),
            jitter: JitterSpec::default(),
            severity: 1,
            seed: 0,
            bench_methods: Method::ALL.to_vec(),
            bench_samples: vec![1, 5, 15],
            bench_repeats: 3,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let fail = |m: String| Err(ConfigError(m).into());
        self.fusion().validate().map_err(|e| ConfigError(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.min_prob) {
            return fail(format!("min_prob must lie in [0, 1], got {}", self.min_prob));
        }
        if !(0.0..=1.0).contains(&self.baseline_min_score) {
            return fail(format!(
                "baseline_min_score must lie in [0, 1], got {}",
                self.baseline_min_score
            ));
        }
        if self.max_samples == Some(0) {
            return fail("max_samples must be at least 1".into());
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        if self.hist_bins == 0 {
            return fail("hist_bins must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.sweep_max_removal) {
            return fail(format!(
                "sweep_max_removal must lie in [0, 1], got {}",
                self.sweep_max_removal
            ));
        }
        if !(1..=3).contains(&self.severity) {
            return fail(format!("severity must be 1, 2 or 3, got {}", self.severity));
        }
        if self
            .thresholds
            .as_ref()
            .is_some_and(|t| t.iter().any(|v| !v.is_finite()))
        {
            return fail("thresholds must be finite".into());
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionParams {
        FusionParams {
            iou_threshold: self.iou_threshold,
            min_member_fraction: self.min_member_fraction,
        }
    }

    pub fn pipeline(&self) -> PipelineOptions {
        PipelineOptions {
            method: self.method,
            upscale: self.upscale,
            measure: self.measure,
            fusion: self.fusion(),
            prune: self.prune.then_some(PruneParams {
                min_prob: self.min_prob,
                min_pixels: self.min_pixels,
            }),
            baseline_pruning: self.baseline_prune.then_some(BaselinePruning {
                min_score: self.baseline_min_score,
                min_pixels: self.baseline_min_pixels,
            }),
            reference: self
                .reference_seed
                .map_or(ReferenceChoice::First, ReferenceChoice::Seeded),
            max_samples: self.max_samples,
        }
    }
}
