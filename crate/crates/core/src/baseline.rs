//! Single-sample reference post-processing: one forward pass turned into a
//! panoptic map, optionally with score and area pruning. Pruned proposals
//! hand their pixels to the next best surviving proposal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::assign::fuse::label_proposal_map;
use crate::catalog::ClassCatalog;
use crate::panoptic::{Label, PanopticMap};
use crate::per_sample::{assign_pixels, PerSampleSegmentation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePruning {
    /// Minimum softmax score of a proposal's predicted class.
    pub min_score: f64,
    /// Minimum pixel count of a segment.
    pub min_pixels: usize,
}

impl Default for BaselinePruning {
    fn default() -> Self {
        Self {
            min_score: 0.85,
            min_pixels: 4,
        }
    }
}

/// Panoptic map of sample `q`. Without pruning this is the sample's proposal
/// map labelled directly.
pub fn baseline_segmentation(
    pss: &PerSampleSegmentation,
    q: usize,
    catalog: &ClassCatalog,
    pruning: Option<BaselinePruning>,
) -> PanopticMap {
    let s = &pss.samples[q];
    let classes: Vec<u32> = s.kept.iter().map(|k| k.class_id).collect();
    let Some(p) = pruning else {
        return label_proposal_map(&s.proposal_map, &classes, catalog, pss.width, pss.height);
    };

    let upscaler = pss.upscaler();
    let mut alive: Vec<usize> = (0..s.kept.len())
        .filter(|&k| s.kept[k].softmax[s.kept[k].class_id as usize] >= p.min_score)
        .collect();
    loop {
        let grids: Vec<&[f32]> = alive.iter().map(|&k| s.kept[k].mask_logits.as_slice()).collect();
        let local = assign_pixels(&grids, &upscaler);
        let sub_classes: Vec<u32> = alive.iter().map(|&k| classes[k]).collect();
        let map = label_proposal_map(&local, &sub_classes, catalog, pss.width, pss.height);

        // Areas are taken per output segment so stuff proposals of one class
        // count together.
        let areas = map.segment_areas();
        let mut proposal_segment: HashMap<usize, Label> = HashMap::new();
        for (i, p_local) in local.iter().enumerate() {
            if let (Some(pl), Some(l)) = (p_local, map.cells()[i]) {
                proposal_segment.entry(*pl as usize).or_insert(l);
            }
        }
        let before = alive.len();
        alive = alive
            .iter()
            .enumerate()
            .filter(|(local_idx, _)| {
                proposal_segment
                    .get(local_idx)
                    .is_some_and(|l| areas[l] >= p.min_pixels)
            })
            .map(|(_, &k)| k)
            .collect();
        if alive.len() == before {
            return map;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::per_sample::{KeptProposal, SampleSegmentation, UpscaleMode, Upscaler};

    fn build(w: usize, h: usize, props: Vec<(Vec<f32>, u32, f64)>) -> PerSampleSegmentation {
        let c = 4;
        let kept: Vec<KeptProposal> = props
            .into_iter()
            .enumerate()
            .map(|(k, (logits, class, score))| {
                let mut sm = vec![(1.0 - score) / 3.0; c];
                sm[class as usize] = score;
                KeptProposal {
                    source: k,
                    softmax: sm,
                    class_id: class,
                    mask_logits: logits,
                }
            })
            .collect();
        let up = Upscaler::new(h, w, h, w, UpscaleMode::Bilinear);
        let masks: Vec<&[f32]> = kept.iter().map(|k| k.mask_logits.as_slice()).collect();
        let map = assign_pixels(&masks, &up);
        PerSampleSegmentation {
            width: w,
            height: h,
            mask_width: w,
            mask_height: h,
            num_classes: c,
            upscale: UpscaleMode::Bilinear,
            samples: vec![SampleSegmentation {
                proposal_map: map,
                kept,
            }],
        }
    }

    // Catalog: 0 stuff, 1..=2 things, 3 background.
    fn cat() -> ClassCatalog {
        ClassCatalog::synthetic(4, 1).unwrap()
    }

    #[test]
    fn unpruned_labels_proposals() {
        let stuff = vec![1.0; 8];
        let car: Vec<f32> = (0..8).map(|i| if i < 3 { 5.0 } else { -5.0 }).collect();
        let pss = build(8, 1, vec![(stuff, 0, 0.9), (car, 1, 0.5)]);
        let m = baseline_segmentation(&pss, 0, &cat(), None);
        assert_eq!(m.get(0, 0), Some(Label::thing(1, 1)));
        assert_eq!(m.get(5, 0), Some(Label::stuff(0)));
    }

    #[test]
    fn low_score_pixels_go_to_next_best() {
        let stuff = vec![1.0; 8];
        let car: Vec<f32> = (0..8).map(|i| if i < 3 { 5.0 } else { -5.0 }).collect();
        let pss = build(8, 1, vec![(stuff, 0, 0.9), (car, 1, 0.75)]);
        let m = baseline_segmentation(&pss, 0, &cat(), Some(BaselinePruning::default()));
        assert!(m.cells().iter().all(|c| *c == Some(Label::stuff(0))));
    }

    #[test]
    fn small_segments_are_absorbed() {
        let stuff = vec![1.0; 12];
        let tiny: Vec<f32> = (0..12).map(|i| if i < 3 { 5.0 } else { -5.0 }).collect();
        let big: Vec<f32> = (0..12).map(|i| if i >= 8 { 5.0 } else { -5.0 }).collect();
        let pss = build(12, 1, vec![(stuff, 0, 0.9), (tiny, 1, 0.95), (big, 2, 0.95)]);
        let m = baseline_segmentation(&pss, 0, &cat(), Some(BaselinePruning::default()));
        assert_eq!(&m.cells()[..8], &[Some(Label::stuff(0)); 8]);
        assert_eq!(m.get(9, 0), Some(Label::thing(2, 1)));
    }

    #[test]
    fn everything_pruned_is_void() {
        let pss = build(4, 1, vec![(vec![1.0; 4], 0, 0.5)]);
        let m = baseline_segmentation(&pss, 0, &cat(), Some(BaselinePruning::default()));
        assert_eq!(m.void_count(), 4);
    }
}
