//! Per-pixel class distributions per sample, their ensemble mean, and the
//! stuff labelling derived from it.

use crate::catalog::ClassCatalog;
use crate::panoptic::{Label, PanopticMap};
use crate::per_sample::{argmax, PerSampleSegmentation};

#[derive(Debug, Clone, PartialEq)]
struct StackSlice {
    owner: Vec<Option<u32>>,
    table: Vec<Vec<f64>>,
}

/// The `Q×H×W×C` confidence stack, stored as a per-sample index into a
/// table of distributions rather than densely. A pixel whose owner is `None`
/// holds the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceStack {
    width: usize,
    height: usize,
    num_classes: usize,
    slices: Vec<StackSlice>,
}

impl ConfidenceStack {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_samples(&self) -> usize {
        self.slices.len()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Distribution of sample `q` at raster index `i`; `None` for the zero vector.
    pub fn pixel(&self, q: usize, i: usize) -> Option<&[f64]> {
        let s = &self.slices[q];
        s.owner[i].map(|k| s.table[k as usize].as_slice())
    }

    /// Distinct distributions referenced by sample `q`.
    pub fn sample_table(&self, q: usize) -> &[Vec<f64>] {
        &self.slices[q].table
    }

    pub fn sample_owner(&self, q: usize) -> &[Option<u32>] {
        &self.slices[q].owner
    }

    /// Builds a stack from a dense `Q×H×W×C` buffer; all-zero pixel vectors
    /// become uncovered.
    pub fn from_dense(q: usize, height: usize, width: usize, c: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), q * height * width * c);
        let hw = height * width;
        let slices = (0..q)
            .map(|s| {
                let mut table = Vec::new();
                let owner = (0..hw)
                    .map(|i| {
                        let v = &data[(s * hw + i) * c..(s * hw + i + 1) * c];
                        if v.iter().all(|&x| x == 0.0) {
                            None
                        } else {
                            table.push(v.to_vec());
                            Some(table.len() as u32 - 1)
                        }
                    })
                    .collect();
                StackSlice { owner, table }
            })
            .collect();
        Self {
            width,
            height,
            num_classes: c,
            slices,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let c = self.num_classes;
        let mut out = vec![0.0; self.num_samples() * self.pixels() * c];
        for q in 0..self.num_samples() {
            for i in 0..self.pixels() {
                if let Some(v) = self.pixel(q, i) {
                    let o = (q * self.pixels() + i) * c;
                    out[o..o + c].copy_from_slice(v);
                }
            }
        }
        out
    }

    /// Samples `start..end` as their own stack.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            width: self.width,
            height: self.height,
            num_classes: self.num_classes,
            slices: self.slices[start..end].to_vec(),
        }
    }
}

/// Stack where each pixel of sample `q` holds the softmax of the kept
/// proposal owning it, or the zero vector when no proposal was kept.
pub fn build_confidence_stack(pss: &PerSampleSegmentation) -> ConfidenceStack {
    ConfidenceStack {
        width: pss.width,
        height: pss.height,
        num_classes: pss.num_classes,
        slices: pss
            .samples
            .iter()
            .map(|s| StackSlice {
                owner: s.proposal_map.clone(),
                table: s.kept.iter().map(|k| k.softmax.clone()).collect(),
            })
            .collect(),
    }
}

/// `H×W×C` mean of the stack over its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanConfidence {
    width: usize,
    height: usize,
    num_classes: usize,
    values: Vec<f64>,
}

impl MeanConfidence {
    pub fn new(width: usize, height: usize, num_classes: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height * num_classes);
        Self {
            width,
            height,
            num_classes,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// False where no sample covered the pixel.
    pub fn covered(&self, i: usize) -> bool {
        self.pixel(i).iter().any(|&x| x > 0.0)
    }

    /// Per-pixel argmax class, `None` at uncovered pixels.
    pub fn labels(&self) -> Vec<Option<u32>> {
        (0..self.pixels())
            .map(|i| {
                if self.covered(i) {
                    argmax(self.pixel(i)).map(|c| c as u32)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Arithmetic mean over samples; uncovered pixels contribute zero vectors and
/// still count in the denominator.
pub fn mean_confidence(sc: &ConfidenceStack) -> MeanConfidence {
    let c = sc.num_classes;
    let mut values = vec![0.0; sc.pixels() * c];
    for s in &sc.slices {
        for (i, owner) in s.owner.iter().enumerate() {
            if let Some(k) = owner {
                let v = &s.table[*k as usize];
                for (acc, x) in values[i * c..(i + 1) * c].iter_mut().zip(v) {
                    *acc += x;
                }
            }
        }
    }
    let q = sc.num_samples().max(1) as f64;
    values.iter_mut().for_each(|x| *x /= q);
    MeanConfidence::new(sc.width, sc.height, c, values)
}

#[derive(Debug, Clone)]
pub struct StuffOutput {
    /// Stuff pixels labelled, everything else void.
    pub initial: PanopticMap,
    pub stack: ConfidenceStack,
    pub mean: MeanConfidence,
}

/// Labels each pixel whose mean-confidence argmax is a stuff class. Thing and
/// background winners, and uncovered pixels, stay void.
pub fn stuff_seg(pss: &PerSampleSegmentation, catalog: &ClassCatalog) -> StuffOutput {
    let stack = build_confidence_stack(pss);
    let mean = mean_confidence(&stack);
    let cells = mean
        .labels()
        .into_iter()
        .map(|l| l.filter(|&c| catalog.is_stuff(c)).map(Label::stuff))
        .collect();
    StuffOutput {
        initial: PanopticMap::from_cells(pss.width, pss.height, cells),
        stack,
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::per_sample::{KeptProposal, SampleSegmentation, UpscaleMode};
    use proptest::prelude::*;

    fn pss_from(
        width: usize,
        height: usize,
        c: usize,
        samples: Vec<(Vec<Option<u32>>, Vec<Vec<f64>>)>,
    ) -> PerSampleSegmentation {
        PerSampleSegmentation {
            width,
            height,
            mask_width: width,
            mask_height: height,
            num_classes: c,
            upscale: UpscaleMode::Bilinear,
            samples: samples
                .into_iter()
                .map(|(map, sms)| SampleSegmentation {
                    proposal_map: map,
                    kept: sms
                        .into_iter()
                        .enumerate()
                        .map(|(k, s)| KeptProposal {
                            source: k,
                            class_id: argmax(&s).unwrap() as u32,
                            softmax: s,
                            mask_logits: vec![0.0; width * height],
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn broadcast_and_split() {
        let s = vec![0.7, 0.2, 0.1];
        let pss = pss_from(2, 2, 3, vec![(vec![Some(0); 4], vec![s.clone()])]);
        let sc = build_confidence_stack(&pss);
        for i in 0..4 {
            assert_eq!(sc.pixel(0, i), Some(s.as_slice()));
        }
        let t = vec![0.1, 0.1, 0.8];
        let pss = pss_from(
            2,
            2,
            3,
            vec![(vec![Some(0), Some(1), Some(1), None], vec![s.clone(), t.clone()])],
        );
        let sc = build_confidence_stack(&pss);
        assert_eq!(sc.pixel(0, 0), Some(s.as_slice()));
        assert_eq!(sc.pixel(0, 2), Some(t.as_slice()));
        assert_eq!(sc.pixel(0, 3), None);
        assert_eq!(&sc.to_dense()[9..12], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_examples() {
        let sc = ConfidenceStack::from_dense(2, 1, 1, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mean_confidence(&sc).pixel(0), &[0.5, 0.5]);
        let sc = ConfidenceStack::from_dense(2, 1, 1, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(mean_confidence(&sc).pixel(0), &[0.5, 0.0]);
        let v = [0.2, 0.3, 0.5];
        let sc = ConfidenceStack::from_dense(3, 1, 1, 3, &[v, v, v].concat());
        let m = mean_confidence(&sc);
        for (a, b) in m.pixel(0).iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn three_class_catalog() -> ClassCatalog {
        // 0 sky, 1 road (stuff), 2 car (thing), 3 background
        ClassCatalog::new(
            vec![
                crate::catalog::ClassEntry {
                    class_id: 0,
                    name: "sky".into(),
                    is_thing: false,
                },
                crate::catalog::ClassEntry {
                    class_id: 1,
                    name: "road".into(),
                    is_thing: false,
                },
                crate::catalog::ClassEntry {
                    class_id: 2,
                    name: "car".into(),
                    is_thing: true,
                },
                crate::catalog::ClassEntry {
                    class_id: 3,
                    name: "background".into(),
                    is_thing: false,
                },
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn stuff_labels_from_mean() {
        let cat = three_class_catalog();
        // Pixel 0: unanimous sky. Pixel 1: car. Pixel 2: sky 0.6 vs road 0.9 twice.
        let sky = vec![0.9, 0.05, 0.03, 0.02];
        let car = vec![0.05, 0.05, 0.85, 0.05];
        let sky6 = vec![0.6, 0.3, 0.05, 0.05];
        let road9 = vec![0.05, 0.9, 0.03, 0.02];
        let sample = |third: Vec<f64>| (vec![Some(0), Some(1), Some(2)], vec![sky.clone(), car.clone(), third]);
        let pss = pss_from(
            3,
            1,
            4,
            vec![sample(sky6.clone()), sample(road9.clone()), sample(road9.clone())],
        );
        let out = stuff_seg(&pss, &cat);
        assert_eq!(out.initial.get(0, 0), Some(Label::stuff(0)));
        assert_eq!(out.initial.get(1, 0), None);
        // Hand average: sky (0.6+0.05+0.05)/3 = 0.2333, road (0.3+0.9+0.9)/3 = 0.7.
        let p = out.mean.pixel(2);
        assert!((p[0] - 0.7 / 3.0).abs() < 1e-12);
        assert!((p[1] - 0.7).abs() < 1e-12);
        assert_eq!(out.initial.get(2, 0), Some(Label::stuff(1)));
    }

    #[test]
    fn background_and_uncovered_stay_void() {
        let cat = three_class_catalog();
        let bgish = vec![0.1, 0.1, 0.1, 0.7];
        let pss = pss_from(2, 1, 4, vec![(vec![Some(0), None], vec![bgish])]);
        let out = stuff_seg(&pss, &cat);
        assert_eq!(out.initial.void_count(), 2);
        assert!(!out.mean.covered(1));
    }

    fn arb_stack() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
        (1usize..5, 1usize..5, 2usize..5).prop_flat_map(|(q, hw, c)| {
            proptest::collection::vec(
                prop_oneof![
                    1 => Just(None),
                    4 => proptest::collection::vec(0.01f64..1.0, c).prop_map(Some),
                ],
                q * hw,
            )
            .prop_map(move |px| {
                let data = px
                    .into_iter()
                    .flat_map(|v| match v {
                        None => vec![0.0; c],
                        Some(v) => {
                            let s: f64 = v.iter().sum();
                            v.into_iter().map(|x| x / s).collect()
                        }
                    })
                    .collect();
                (q, hw, c, data)
            })
        })
    }

    proptest! {
        #[test]
        fn mean_laws((q, hw, c, data) in arb_stack(), split in 0usize..5) {
            let sc = ConfidenceStack::from_dense(q, 1, hw, c, &data);
            let m = mean_confidence(&sc);
            for i in 0..hw {
                let s: f64 = m.pixel(i).iter().sum();
                prop_assert!(s <= 1.0 + 1e-9);
                prop_assert!(m.pixel(i).iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            }
            // Reversed sample order gives the same mean.
            let hwc = hw * c;
            let rev: Vec<f64> = (0..q).rev().flat_map(|s| data[s * hwc..(s + 1) * hwc].to_vec()).collect();
            let mr = mean_confidence(&ConfidenceStack::from_dense(q, 1, hw, c, &rev));
            for (a, b) in m.values().iter().zip(mr.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // Weighted mean of sub-stack means.
            let k = split.min(q - 1).max(1).min(q);
            if k < q {
                let ma = mean_confidence(&sc.slice(0, k));
                let mb = mean_confidence(&sc.slice(k, q));
                for j in 0..hwc {
                    let w = (k as f64 * ma.values()[j] + (q - k) as f64 * mb.values()[j]) / q as f64;
                    prop_assert!((w - m.values()[j]).abs() < 1e-12);
                }
            }
            if q == 1 {
                prop_assert_eq!(m.values(), &data[..]);
            }
        }

        #[test]
        fn initial_map_is_stuff_only(labels in proptest::collection::vec(0usize..4, 1..20)) {
            let cat = three_class_catalog();
            let n = labels.len();
            let table: Vec<Vec<f64>> = labels.iter().map(|&l| (0..4).map(|c| if c == l { 0.7 } else { 0.1 }).collect()).collect();
            let map = (0..n as u32).map(Some).collect();
            let pss = pss_from(n, 1, 4, vec![(map, table)]);
            let out = stuff_seg(&pss, &cat);
            for (i, &l) in labels.iter().enumerate() {
                let expect = cat.is_stuff(l as u32).then(|| Label::stuff(l as u32));
                prop_assert_eq!(out.initial.cells()[i], expect);
            }
        }
    }
}
