//! Removing the most uncertain pixels from the ground truth and tracking how
//! detection rates respond.

use std::fmt::Write as _;

use serde::Serialize;

use super::pq::{match_segments_with, EvalError, MatchRule, PQStats};
use crate::panoptic::PanopticMap;
use crate::uncertainty::UncertaintyMap;

/// Matching IoU used while sweeping.
pub const SWEEP_IOU: f64 = 0.2;
pub const DEFAULT_GRID_POINTS: usize = 50;
/// Largest fraction of pixels the default grid removes.
pub const DEFAULT_MAX_REMOVAL: f64 = 0.95;

#[derive(Debug, Clone, Copy)]
pub struct SweepImage<'a> {
    pub pred: &'a PanopticMap,
    pub gt: &'a PanopticMap,
    pub uncertainty: &'a UncertaintyMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Pixels with effective uncertainty `>= threshold` are removed.
    pub threshold: f64,
    pub removed_fraction: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tpr: f64,
    pub fdr: f64,
}

/// Points ordered by ascending threshold, so the removed fraction does not
/// increase along the curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,removed_fraction,tp,fp,fn,tpr,fdr\n");
        for p in &self.points {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.threshold, p.removed_fraction, p.tp, p.fp, p.fn_, p.tpr, p.fdr
            )
            .unwrap();
        }
        s
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Sweep of a single image.
pub fn uncertainty_sweep(
    pred: &PanopticMap,
    u: &UncertaintyMap,
    gt: &PanopticMap,
    thresholds: &[f64],
) -> Result<SweepCurve, EvalError> {
    sweep_set(
        &[SweepImage {
            pred,
            gt,
            uncertainty: u,
        }],
        thresholds,
    )
}

/// For each threshold, voids ground truth where the effective uncertainty
/// reaches it, matches at IoU > 0.2 and sums counts over images and classes.
pub fn sweep_set(images: &[SweepImage<'_>], thresholds: &[f64]) -> Result<SweepCurve, EvalError> {
    for im in images {
        let u = im.uncertainty;
        if (u.width(), u.height()) != (im.gt.width(), im.gt.height()) {
            return Err(EvalError::UncertaintyDims {
                uw: u.width(),
                uh: u.height(),
                gw: im.gt.width(),
                gh: im.gt.height(),
            });
        }
    }
    let effective: Vec<Vec<f64>> = images.iter().map(|im| im.uncertainty.effective_values()).collect();
    let total_pixels: usize = images.iter().map(|im| im.gt.len()).sum();

    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(sorted.len());
    for t in sorted {
        let mut stats = PQStats::default();
        let mut removed = 0usize;
        for (im, eff) in images.iter().zip(&effective) {
            let mut gt = im.gt.clone();
            for (cell, &v) in gt.cells_mut().iter_mut().zip(eff) {
                if v >= t {
                    *cell = None;
                    removed += 1;
                }
            }
            stats.merge(&match_segments_with(im.pred, &gt, MatchRule::Greedy(SWEEP_IOU))?);
        }
        let s = stats.total();
        points.push(SweepPoint {
            threshold: t,
            removed_fraction: ratio(removed as u64, total_pixels as u64),
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            tpr: ratio(s.tp, s.tp + s.fn_),
            fdr: ratio(s.fp, s.fp + s.tp),
        });
    }
    Ok(SweepCurve { points })
}

fn sorted_effective(maps: &[&UncertaintyMap]) -> Vec<f64> {
    let mut v: Vec<f64> = maps.iter().flat_map(|m| m.effective_values()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn quantile_threshold(sorted: &[f64], removal: f64) -> f64 {
    let n = sorted.len();
    let above_max = sorted.last().map_or(1.0, |m| m + 1.0);
    if removal <= 0.0 || n == 0 {
        return above_max;
    }
    // The epsilon keeps e.g. 0.2 * 10 from flooring to 1.
    let keep = ((1.0 - removal.min(1.0)) * n as f64 + 1e-9).floor() as usize;
    sorted[keep.min(n - 1)]
}

/// Threshold removing at least `removal` of the pixels (ties may remove
/// more); for `removal <= 0`, a value above every observed uncertainty.
pub fn threshold_for_removal(maps: &[&UncertaintyMap], removal: f64) -> f64 {
    quantile_threshold(&sorted_effective(maps), removal)
}

/// `points` thresholds at removal fractions spaced evenly from
/// `max_removal` down to zero, ascending and deduplicated. The last
/// threshold removes nothing.
pub fn threshold_grid(maps: &[&UncertaintyMap], points: usize, max_removal: f64) -> Vec<f64> {
    let sorted = sorted_effective(maps);
    let mut grid: Vec<f64> = if points <= 1 {
        vec![quantile_threshold(&sorted, 0.0)]
    } else {
        (0..points)
            .map(|k| {
                let r = max_removal * (points - 1 - k) as f64 / (points - 1) as f64;
                quantile_threshold(&sorted, r)
            })
            .collect()
    };
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
