//! End-to-end fusion of one ensemble: per-sample reduction, fusion by the
//! chosen method, optional pruning, and an uncertainty map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{hungarian_fuse, ReferenceChoice};
use crate::baseline::{baseline_segmentation, BaselinePruning};
use crate::catalog::ClassCatalog;
use crate::panoptic::PanopticMap;
use crate::per_sample::{per_sample_seg, BatchError, EnsembleBatch, UpscaleMode};
use crate::stuff::{build_confidence_stack, stuff_seg};
use crate::things::{thing_seg, FusionError, FusionParams};
use crate::uncertainty::{
    mutual_information, predictive_entropy, prune, softmax_entropy_baseline, Measure, PruneParams, UncertaintyError,
    UncertaintyMap,
};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Stuff by mean confidence, things by sequential IoU clustering.
    #[default]
    Ours,
    /// Assignment against a reference sample.
    Hungarian,
    /// First sample only.
    Baseline,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Ours, Method::Hungarian];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Hungarian => "hungarian",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub method: Method,
    pub upscale: UpscaleMode,
    /// Ignored by the baseline, which always reports softmax entropy.
    pub measure: Measure,
    pub fusion: FusionParams,
    /// Pruning of the fused map; `None` disables it.
    pub prune: Option<PruneParams>,
    /// Pruning of the baseline map; `None` disables it.
    pub baseline_pruning: Option<BaselinePruning>,
    pub reference: ReferenceChoice,
    /// Use only the first this many samples.
    pub max_samples: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            method: Method::Ours,
            upscale: UpscaleMode::Bilinear,
            measure: Measure::PredictiveEntropy,
            fusion: FusionParams::default(),
            prune: Some(PruneParams::default()),
            baseline_pruning: Some(BaselinePruning::default()),
            reference: ReferenceChoice::First,
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fused {
    pub map: PanopticMap,
    pub uncertainty: UncertaintyMap,
    pub samples_used: usize,
    /// Samples in which every proposal was background.
    pub empty_samples: Vec<usize>,
}

impl Fused {
    pub fn instance_count(&self, catalog: &ClassCatalog) -> usize {
        self.map.instance_count(catalog)
    }
}

pub fn fuse(batch: &EnsembleBatch, opts: &PipelineOptions) -> Result<Fused, PipelineError> {
    let limited;
    let mut batch = batch;
    let q_limit = match opts.method {
        Method::Baseline => Some(1),
        _ => opts.max_samples,
    };
    if let Some(q) = q_limit {
        if q != batch.dims().samples {
            limited = batch.first_samples(q)?;
            batch = &limited;
        }
    }
    let catalog = batch.catalog();
    let pss = per_sample_seg(batch, opts.upscale);
    let empty_samples = pss.empty_samples();

    let (map, uncertainty) = match opts.method {
        Method::Baseline => {
            let map = baseline_segmentation(&pss, 0, catalog, opts.baseline_pruning);
            let u = softmax_entropy_baseline(&build_confidence_stack(&pss), 0)?;
            (map, u)
        }
        Method::Ours => {
            opts.fusion.validate()?;
            let st = stuff_seg(&pss, catalog);
            let things = thing_seg(&pss, &st.initial, &st.mean, catalog, &opts.fusion)?;
            let map = match opts.prune {
                Some(p) => prune(&things.map, &st.mean, p),
                None => things.map,
            };
            let u = match opts.measure {
                Measure::PredictiveEntropy => predictive_entropy(&st.mean),
                Measure::MutualInformation => mutual_information(&st.stack),
                Measure::SoftmaxEntropy => softmax_entropy_baseline(&st.stack, 0)?,
            };
            (map, u)
        }
        Method::Hungarian => {
            let out = hungarian_fuse(&pss, catalog, opts.reference);
            let stack = build_confidence_stack(&pss);
            let u = match opts.measure {
                Measure::PredictiveEntropy => predictive_entropy(&crate::stuff::mean_confidence(&stack)),
                Measure::MutualInformation => mutual_information(&stack),
                Measure::SoftmaxEntropy => softmax_entropy_baseline(&stack, out.reference)?,
            };
            (out.map, u)
        }
    };
    Ok(Fused {
        map,
        uncertainty,
        samples_used: pss.num_samples(),
        empty_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_ensemble, gen_scene, EnsembleLayout, JitterSpec, SceneSpec};

    fn ensemble(samples: usize, seed: u64) -> (crate::synth::Scene, EnsembleBatch) {
        let scene = gen_scene(&SceneSpec {
            width: 48,
            height: 40,
            num_classes: 8,
            num_stuff: 3,
            instances: 3,
            min_size: 6,
            max_size: 10,
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let e = gen_ensemble(
            &scene,
            EnsembleLayout {
                samples,
                proposals: 12,
                mask_stride: 1,
            },
            JitterSpec::default(),
        )
        .unwrap();
        (scene, e.batch)
    }

    #[test]
    fn noiseless_methods_reproduce_ground_truth() {
        let (scene, batch) = ensemble(5, 2);
        for method in Method::ALL {
            let opts = PipelineOptions {
                method,
                ..PipelineOptions::default()
            };
            let f = fuse(&batch, &opts).unwrap();
            assert_eq!(f.map.canonical(), scene.gt.canonical(), "{method:?}");
            assert_eq!(f.instance_count(&scene.catalog), 3);
            assert_eq!(
                f.uncertainty.measure(),
                if method == Method::Baseline {
                    Measure::SoftmaxEntropy
                } else {
                    Measure::PredictiveEntropy
                }
            );
        }
    }

    #[test]
    fn sample_limit_and_errors() {
        let (_, batch) = ensemble(5, 3);
        let f = fuse(
            &batch,
            &PipelineOptions {
                max_samples: Some(2),
                ..PipelineOptions::default()
            },
        )
        .unwrap();
        assert_eq!(f.samples_used, 2);
        assert!(fuse(
            &batch,
            &PipelineOptions {
                max_samples: Some(9),
                ..PipelineOptions::default()
            }
        )
        .is_err());
        let bad = PipelineOptions {
            fusion: FusionParams {
                iou_threshold: 2.0,
                min_member_fraction: 0.8,
            },
            ..PipelineOptions::default()
        };
        assert!(matches!(fuse(&batch, &bad), Err(PipelineError::Fusion(_))));
    }

    #[test]
    fn default_options_match_documented_thresholds() {
        let o = PipelineOptions::default();
        assert_eq!((o.fusion.iou_threshold, o.fusion.min_member_fraction), (0.6, 0.8));
        assert_eq!(
            o.prune,
            Some(PruneParams {
                min_prob: 0.4,
                min_pixels: 4
            })
        );
        assert_eq!(
            o.baseline_pruning,
            Some(BaselinePruning {
                min_score: 0.85,
                min_pixels: 4
            })
        );
    }
}
