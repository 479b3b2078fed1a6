use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lap::{solve_lap, CostMatrix};
use crate::catalog::{ClassCatalog, ClassKind};
use crate::mask::BitMask;
use crate::panoptic::{Label, PanopticMap};
use crate::per_sample::{argmax, assign_pixels, PerSampleSegmentation};

/// Which sample seeds the reference proposal set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    #[default]
    First,
    Seeded(u64),
}

impl ReferenceChoice {
    fn pick(self, samples: usize) -> usize {
        match self {
            ReferenceChoice::First => 0,
            ReferenceChoice::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..samples),
        }
    }
}

/// A reference proposal after absorbing its matches.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedProposal {
    /// Union of member pixel masks.
    pub mask: BitMask,
    pub members: usize,
    /// Mean low resolution mask logits of the members.
    pub mean_mask_logits: Vec<f32>,
    pub mean_softmax: Vec<f64>,
}

impl FusedProposal {
    pub fn class_id(&self) -> u32 {
        argmax(&self.mean_softmax).expect("non-empty softmax") as u32
    }
}

#[derive(Debug, Clone)]
pub struct HungarianOutput {
    pub map: PanopticMap,
    pub reference: usize,
    pub proposals: Vec<FusedProposal>,
    /// Fused proposal owning each pixel.
    pub proposal_map: Vec<Option<u32>>,
}

/// Matches every sample against the reference sample's (growing) proposals
/// and rebuilds a single segmentation from the averaged proposals. Proposals
/// left unmatched by the assignment are dropped; no thresholds are applied.
pub fn hungarian_fuse(
    pss: &PerSampleSegmentation,
    catalog: &ClassCatalog,
    reference: ReferenceChoice,
) -> HungarianOutput {
    let (w, h) = (pss.width, pss.height);
    let r = reference.pick(pss.num_samples());
    let ref_sample = &pss.samples[r];

    let mut masks = ref_sample.proposal_masks(w, h);
    let mut members = vec![1usize; ref_sample.kept.len()];
    let mut logit_sums: Vec<Vec<f32>> = ref_sample.kept.iter().map(|k| k.mask_logits.clone()).collect();
    let mut softmax_sums: Vec<Vec<f64>> = ref_sample.kept.iter().map(|k| k.softmax.clone()).collect();

    for (q, s) in pss.samples.iter().enumerate() {
        if q == r || s.kept.is_empty() || masks.is_empty() {
            continue;
        }
        let incoming = s.proposal_masks(w, h);
        let costs = CostMatrix::from_fn(masks.len(), incoming.len(), |i, j| {
            1.0 - masks[i].iou(&incoming[j]).expect("same image")
        })
        .expect("IoU costs are finite");
        for (i, j) in solve_lap(&costs).pairs {
            masks[i].union_with(&incoming[j]).expect("same image");
            members[i] += 1;
            for (a, b) in logit_sums[i].iter_mut().zip(&s.kept[j].mask_logits) {
                *a += b;
            }
            for (a, b) in softmax_sums[i].iter_mut().zip(&s.kept[j].softmax) {
                *a += b;
            }
        }
    }

    let proposals: Vec<FusedProposal> = masks
        .into_iter()
        .zip(members)
        .zip(logit_sums.into_iter().zip(softmax_sums))
        .map(|((mask, n), (ls, ss))| FusedProposal {
            mask,
            members: n,
            mean_mask_logits: ls.into_iter().map(|x| x / n as f32).collect(),
            mean_softmax: ss.into_iter().map(|x| x / n as f64).collect(),
        })
        .collect();

    let grids: Vec<&[f32]> = proposals.iter().map(|p| p.mean_mask_logits.as_slice()).collect();
    let proposal_map = assign_pixels(&grids, &pss.upscaler());
    let classes: Vec<u32> = proposals.iter().map(FusedProposal::class_id).collect();
    let map = label_proposal_map(&proposal_map, &classes, catalog, w, h);
    HungarianOutput {
        map,
        reference: r,
        proposals,
        proposal_map,
    }
}

/// Turns a pixel-to-proposal map into panoptic labels: thing proposals get
/// instance ids 1.. in proposal order, stuff proposals of one class share a
/// segment, background-class proposals leave their pixels void.
pub(crate) fn label_proposal_map(
    proposal_map: &[Option<u32>],
    classes: &[u32],
    catalog: &ClassCatalog,
    width: usize,
    height: usize,
) -> PanopticMap {
    let mut used = vec![false; classes.len()];
    for p in proposal_map.iter().flatten() {
        used[*p as usize] = true;
    }
    let mut next = 1u32;
    let labels: Vec<Option<Label>> = classes
        .iter()
        .zip(&used)
        .map(|(&c, &u)| match catalog.kind(c) {
            Some(ClassKind::Thing) if u => {
                let l = Label::thing(c, next);
                next += 1;
                Some(l)
            }
            Some(ClassKind::Stuff) => Some(Label::stuff(c)),
            _ => None,
        })
        .collect();
    let cells = proposal_map
        .iter()
        .map(|p| p.and_then(|k| labels[k as usize]))
        .collect();
    PanopticMap::from_cells(width, height, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::lap_brute_force;
    use crate::baseline::baseline_segmentation;
    use crate::per_sample::{KeptProposal, SampleSegmentation, UpscaleMode};

    /// Builds a per-sample segmentation whose proposals are axis-aligned
    /// boxes on a `w×h` grid (mask grid == image grid).
    fn sample_from_boxes(
        w: usize,
        h: usize,
        boxes: &[((usize, usize, usize, usize), u32)],
        c: usize,
    ) -> SampleSegmentation {
        let mut kept = Vec::new();
        for (k, &((x0, y0, x1, y1), class)) in boxes.iter().enumerate() {
            // Stuff boxes sit under thing boxes.
            let hot = if class < 2 { 3.0 } else { 6.0 };
            let logits: Vec<f32> = (0..w * h)
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                        hot
                    } else {
                        -6.0
                    }
                })
                .collect();
            let mut sm = vec![0.02 / (c - 1) as f64; c];
            sm[class as usize] = 0.98;
            kept.push(KeptProposal {
                source: k,
                softmax: sm,
                class_id: class,
                mask_logits: logits,
            });
        }
        let masks: Vec<&[f32]> = kept.iter().map(|k| k.mask_logits.as_slice()).collect();
        let up = crate::per_sample::Upscaler::new(h, w, h, w, UpscaleMode::Bilinear);
        SampleSegmentation {
            proposal_map: assign_pixels(&masks, &up),
            kept,
        }
    }

    fn pss(w: usize, h: usize, c: usize, samples: Vec<SampleSegmentation>) -> PerSampleSegmentation {
        PerSampleSegmentation {
            width: w,
            height: h,
            mask_width: w,
            mask_height: h,
            num_classes: c,
            upscale: UpscaleMode::Bilinear,
            samples,
        }
    }

    fn scene() -> Vec<((usize, usize, usize, usize), u32)> {
        vec![((0, 0, 12, 12), 0), ((2, 2, 5, 5), 2), ((7, 6, 11, 10), 3)]
    }

    #[test]
    fn identical_samples_equal_single_sample_baseline() {
        let cat = ClassCatalog::synthetic(5, 2).unwrap();
        let s = sample_from_boxes(12, 12, &scene(), 5);
        let one = pss(12, 12, 5, vec![s.clone()]);
        let base = baseline_segmentation(&one, 0, &cat, None);
        let many = pss(12, 12, 5, vec![s.clone(), s.clone(), s]);
        let out = hungarian_fuse(&many, &cat, ReferenceChoice::First);
        assert_eq!(out.map, base);
        assert!(out.proposals.iter().all(|p| p.members == 3));
        let single = hungarian_fuse(&one, &cat, ReferenceChoice::First);
        assert_eq!(single.map, base);
    }

    #[test]
    fn spurious_proposal_is_dropped() {
        let cat = ClassCatalog::synthetic(5, 2).unwrap();
        let s0 = sample_from_boxes(12, 12, &scene(), 5);
        let mut boxes = scene();
        boxes.push(((9, 0, 12, 2), 2));
        let s1 = sample_from_boxes(12, 12, &boxes, 5);
        let p = pss(12, 12, 5, vec![s0.clone(), s1.clone()]);

        // The cost matrix the fusion builds; confirm by brute force that the
        // optimum leaves the spurious column unmatched.
        let ref_masks = s0.proposal_masks(12, 12);
        let inc = s1.proposal_masks(12, 12);
        let costs = CostMatrix::from_fn(3, 4, |i, j| 1.0 - ref_masks[i].iou(&inc[j]).unwrap()).unwrap();
        let a = solve_lap(&costs);
        assert!((a.total_cost - lap_brute_force(&costs)).abs() < 1e-12);
        assert!(a.pairs.iter().all(|&(_, j)| j != 3));

        let out = hungarian_fuse(&p, &cat, ReferenceChoice::First);
        assert_eq!(out.proposals.len(), 3);
        assert!(out.map.get(10, 0).is_some_and(|l| l.class_id == 0));
        let base = baseline_segmentation(&pss(12, 12, 5, vec![s0]), 0, &cat, None);
        assert_eq!(out.map, base);
    }

    #[test]
    fn seeded_reference_is_deterministic() {
        let a = ReferenceChoice::Seeded(7).pick(15);
        assert_eq!(a, ReferenceChoice::Seeded(7).pick(15));
        assert!(a < 15);
        assert_eq!(ReferenceChoice::First.pick(15), 0);
    }
}
