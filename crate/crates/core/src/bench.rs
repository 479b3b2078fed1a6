//! Wall-clock timing of the fusion methods across sample counts. Batches are
//! loaded (and cut to each sample count) before the clock starts; only the
//! fusion itself is timed.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::per_sample::EnsembleBatch;
use crate::pipeline::{fuse, Method, PipelineError, PipelineOptions};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("no input ensembles to time")]
    NoInput,
    #[error("no methods or sample counts selected")]
    EmptyGrid,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub sample_counts: Vec<usize>,
    /// Timed passes over the whole input set.
    pub repeats: usize,
    pub options: PipelineOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            sample_counts: vec![1, 5, 15],
            repeats: 3,
            options: PipelineOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub samples: usize,
    pub images: usize,
    pub repeats: usize,
    pub mean_seconds_per_image: f64,
    pub median_seconds_per_image: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchReport {
    /// Ordered by method as configured, then by sample count.
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,samples,images,repeats,mean_seconds_per_image,median_seconds_per_image\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                r.method.name(),
                r.samples,
                r.images,
                r.repeats,
                r.mean_seconds_per_image,
                r.median_seconds_per_image
            )
            .unwrap();
        }
        s
    }

    pub fn row(&self, method: Method, samples: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.samples == samples)
    }
}

pub fn run_bench(batches: &[EnsembleBatch], cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if batches.is_empty() {
        return Err(BenchError::NoInput);
    }
    if cfg.methods.is_empty() || cfg.sample_counts.is_empty() {
        return Err(BenchError::EmptyGrid);
    }
    let repeats = cfg.repeats.max(1);
    let mut rows = Vec::new();
    for &q in &cfg.sample_counts {
        let cut: Vec<EnsembleBatch> = batches
            .iter()
            .map(|b| b.first_samples(q))
            .collect::<Result<_, _>>()
            .map_err(PipelineError::from)?;
        for &method in &cfg.methods {
            let opts = PipelineOptions {
                method,
                max_samples: None,
                ..cfg.options
            };
            let mut per_image = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let start = Instant::now();
                for b in &cut {
                    std::hint::black_box(fuse(b, &opts)?);
                }
                per_image.push(start.elapsed().as_secs_f64() / cut.len() as f64);
            }
            let mean = per_image.iter().sum::<f64>() / repeats as f64;
            per_image.sort_by(f64::total_cmp);
            let median = if repeats % 2 == 1 {
                per_image[repeats / 2]
            } else {
                (per_image[repeats / 2 - 1] + per_image[repeats / 2]) / 2.0
            };
            rows.push(BenchRow {
                method,
                samples: q,
                images: cut.len(),
                repeats,
                mean_seconds_per_image: mean,
                median_seconds_per_image: median,
            });
        }
    }
    let order = |m: Method| cfg.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (order(r.method), r.samples));
    Ok(BenchReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_ensemble, gen_scene, EnsembleLayout, JitterSpec, SceneSpec};

    fn batch(samples: usize) -> EnsembleBatch {
        let scene = gen_scene(&SceneSpec {
            width: 32,
            height: 32,
            num_classes: 6,
            num_stuff: 2,
            instances: 2,
            min_size: 5,
            max_size: 8,
            ..SceneSpec::default()
        })
        .unwrap();
        let layout = EnsembleLayout {
            samples,
            proposals: 8,
            mask_stride: 1,
        };
        gen_ensemble(&scene, layout, JitterSpec::default()).unwrap().batch
    }

    #[test]
    fn grid_shape() {
        let b = vec![batch(15)];
        let r = run_bench(
            &b,
            &BenchConfig {
                repeats: 1,
                ..BenchConfig::default()
            },
        )
        .unwrap();
        assert_eq!(r.rows.len(), 9);
        assert!(r.row(Method::Hungarian, 5).is_some());
        assert_eq!(r.to_csv().lines().count(), 10);

        let two = BenchConfig {
            methods: vec![Method::Ours, Method::Baseline],
            sample_counts: vec![1],
            repeats: 2,
            ..BenchConfig::default()
        };
        assert_eq!(run_bench(&[batch(1)], &two).unwrap().rows.len(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(run_bench(&[], &BenchConfig::default()), Err(BenchError::NoInput));
        assert!(matches!(
            run_bench(&[batch(2)], &BenchConfig::default()),
            Err(BenchError::Pipeline(_))
        ));
    }
}
