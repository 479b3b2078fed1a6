//! Cross-sample instance matching.
//!
//! Every thing proposal of every sample is visited in order (sample-major,
//! then kept-proposal index). Each proposal is merged into the existing record
//! with the highest mask IoU, provided that IoU reaches the threshold;
//! otherwise it founds a new record. Merging grows the record mask to the
//! union and folds the proposal's class distribution into a running mean.
//! Records are then painted onto the still-void pixels of the stuff map in
//! order of decreasing support, skipping records supported by fewer than
//! `ceil(min_member_fraction * Q)` proposals.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::mask::BitMask;
use crate::panoptic::{Label, PanopticMap};
use crate::per_sample::{argmax, PerSampleSegmentation};
use crate::stuff::MeanConfidence;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("iou_threshold must lie in [0, 1], got {0}")]
    IouThreshold(f64),
    #[error("min_member_fraction must lie in (0, 1], got {0}")]
    MemberFraction(f64),
    #[error("thing assignment overlaps an already labelled pixel at ({x}, {y})")]
    Overlap { x: usize, y: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub iou_threshold: f64,
    pub min_member_fraction: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.6,
            min_member_fraction: 0.8,
        }
    }
}

impl FusionParams {
    /// Keeps every record regardless of support.
    pub fn no_member_threshold(iou_threshold: f64) -> Self {
        Self {
            iou_threshold,
            min_member_fraction: f64::MIN_POSITIVE,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(FusionError::IouThreshold(self.iou_threshold));
        }
        if !(self.min_member_fraction > 0.0 && self.min_member_fraction <= 1.0) {
            return Err(FusionError::MemberFraction(self.min_member_fraction));
        }
        Ok(())
    }

    /// Members a record needs to be painted, `ceil(fraction * Q)` and at least 1.
    pub fn min_members(&self, samples: usize) -> usize {
        // The epsilon keeps products like 0.8 * 15 from rounding up past 12.
        ((self.min_member_fraction * samples as f64 - 1e-9).ceil() as usize).max(1)
    }
}

/// One thing proposal entering the matching loop.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub sample: usize,
    pub proposal: usize,
    pub mask: BitMask,
    pub softmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    /// Union of member masks.
    pub mask: BitMask,
    /// Merged proposals, the founding one included.
    pub member_count: usize,
    pub mean_softmax: Vec<f64>,
    pub founding_order: usize,
    /// `(sample, kept proposal)` of every member.
    pub members: Vec<(usize, usize)>,
}

impl InstanceRecord {
    fn found(c: &Candidate, founding_order: usize) -> Self {
        Self {
            mask: c.mask.clone(),
            member_count: 1,
            mean_softmax: c.softmax.clone(),
            founding_order,
            members: vec![(c.sample, c.proposal)],
        }
    }

    fn merge(&mut self, c: &Candidate) {
        self.mask.union_with(&c.mask).expect("same image");
        self.member_count += 1;
        let n = self.member_count as f64;
        for (m, s) in self.mean_softmax.iter_mut().zip(&c.softmax) {
            *m += (s - *m) / n;
        }
        self.members.push((c.sample, c.proposal));
    }

    pub fn max_confidence(&self) -> f64 {
        self.mean_softmax.iter().cloned().fold(0.0, f64::max)
    }

    pub fn class_id(&self) -> u32 {
        argmax(&self.mean_softmax).expect("non-empty softmax") as u32
    }
}

/// Thing proposals restricted to pixels whose mean-confidence label is a
/// thing class. Proposals whose own class is not a thing, or whose restricted
/// mask is empty, are not instances and are skipped.
pub fn thing_candidates(pss: &PerSampleSegmentation, labels: &[Option<u32>], catalog: &ClassCatalog) -> Vec<Candidate> {
    let thing_px = BitMask::from_fn(pss.width, pss.height, |i| {
        labels[i].is_some_and(|c| catalog.is_thing(c))
    });
    let mut out = Vec::new();
    for (q, s) in pss.samples.iter().enumerate() {
        let masks = s.proposal_masks(pss.width, pss.height);
        for (k, (kp, mut mask)) in s.kept.iter().zip(masks).enumerate() {
            if !catalog.is_thing(kp.class_id) {
                continue;
            }
            mask.intersect_with(&thing_px).expect("same image");
            if mask.is_empty() {
                continue;
            }
            out.push(Candidate {
                sample: q,
                proposal: k,
                mask,
                softmax: kp.softmax.clone(),
            });
        }
    }
    out
}

/// Sequential clustering: each candidate joins the single best record with
/// IoU at or above the threshold (ties to the earliest record) or founds a
/// new one.
pub fn cluster_instances(candidates: &[Candidate], iou_threshold: f64) -> Vec<InstanceRecord> {
    let mut records: Vec<InstanceRecord> = Vec::new();
    for c in candidates {
        let mut best: Option<(usize, f64)> = None;
        for (r, rec) in records.iter().enumerate() {
            let iou = rec.mask.iou(&c.mask).expect("same image");
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((r, iou));
            }
        }
        match best {
            Some((r, _)) => records[r].merge(c),
            None => {
                let order = records.len();
                records.push(InstanceRecord::found(c, order));
            }
        }
    }
    records
}

/// Most-supported first; ties by higher peak mean confidence, then earlier
/// founding.
pub fn sort_by_mergers(mut records: Vec<InstanceRecord>) -> Vec<InstanceRecord> {
    records.sort_by(|a, b| {
        b.member_count
            .cmp(&a.member_count)
            .then_with(|| {
                b.max_confidence()
                    .partial_cmp(&a.max_confidence())
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.founding_order.cmp(&b.founding_order))
    });
    records
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThingAssignment {
    pub label: Label,
    pub pixels: BitMask,
}

/// Overlays thing assignments onto the stuff map. Assignments must only
/// touch void pixels and must not overlap each other.
pub fn combine(initial: &PanopticMap, assignments: &[ThingAssignment]) -> Result<PanopticMap, FusionError> {
    let mut out = initial.clone();
    let w = out.width();
    for a in assignments {
        for i in a.pixels.ones() {
            let cell = &mut out.cells_mut()[i];
            if cell.is_some() {
                return Err(FusionError::Overlap { x: i % w, y: i / w });
            }
            *cell = Some(a.label);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ThingOutput {
    pub map: PanopticMap,
    /// Records in paint order.
    pub records: Vec<InstanceRecord>,
    /// Parallel to `records`: whether the record received an instance id.
    pub claimed: Vec<bool>,
}

pub fn thing_seg(
    pss: &PerSampleSegmentation,
    initial: &PanopticMap,
    mean: &MeanConfidence,
    catalog: &ClassCatalog,
    params: &FusionParams,
) -> Result<ThingOutput, FusionError> {
    params.validate()?;
    let labels = mean.labels();
    let candidates = thing_candidates(pss, &labels, catalog);
    let records = sort_by_mergers(cluster_instances(&candidates, params.iou_threshold));
    let min_members = params.min_members(pss.num_samples());

    let mut free = BitMask::from_fn(initial.width(), initial.height(), |i| initial.cells()[i].is_none());
    let mut assignments = Vec::new();
    let mut claimed = vec![false; records.len()];
    let mut next_id = 1u32;
    for (r, rec) in records.iter().enumerate() {
        let class = rec.class_id();
        if rec.member_count < min_members || !catalog.is_thing(class) {
            continue;
        }
        let mut px = rec.mask.clone();
        px.intersect_with(&free).expect("same image");
        if px.is_empty() {
            continue;
        }
        free.subtract(&px).expect("same image");
        assignments.push(ThingAssignment {
            label: Label::thing(class, next_id),
            pixels: px,
        });
        claimed[r] = true;
        next_id += 1;
    }
    Ok(ThingOutput {
        map: combine(initial, &assignments)?,
        records,
        claimed,
    })
}
