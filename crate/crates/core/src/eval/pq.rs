use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::panoptic::{Label, PanopticMap};

/// IoU a prediction must strictly exceed to match a ground-truth segment.
pub const PQ_IOU: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction is {pw}x{ph} but ground truth is {gw}x{gh}")]
    DimMismatch { pw: usize, ph: usize, gw: usize, gh: usize },
    #[error("uncertainty map is {uw}x{uh} but ground truth is {gw}x{gh}")]
    UncertaintyDims { uw: usize, uh: usize, gw: usize, gh: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Sum of IoU over true-positive pairs.
    pub iou_sum: f64,
}

impl ClassStats {
    pub fn add(&mut self, o: &ClassStats) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.iou_sum += o.iou_sum;
    }

    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    pub fn quality(&self) -> ClassQuality {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        let denom = tp + 0.5 * fp + 0.5 * fn_;
        let (sq, rq, pq) = if denom > 0.0 {
            let sq = if self.tp > 0 { self.iou_sum / tp } else { 0.0 };
            (sq, tp / denom, self.iou_sum / denom)
        } else {
            (0.0, 0.0, 0.0)
        };
        ClassQuality {
            pq,
            sq,
            rq,
            sq_defined: self.tp > 0,
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

/// Per-class counts; summing stats of several images evaluates them jointly.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PQStats {
    pub classes: BTreeMap<u32, ClassStats>,
}

impl PQStats {
    pub fn class_mut(&mut self, class_id: u32) -> &mut ClassStats {
        self.classes.entry(class_id).or_default()
    }

    pub fn merge(&mut self, other: &PQStats) {
        for (c, s) in &other.classes {
            self.class_mut(*c).add(s);
        }
    }

    /// Counts summed over all classes.
    pub fn total(&self) -> ClassStats {
        let mut t = ClassStats::default();
        for s in self.classes.values() {
            t.add(s);
        }
        t
    }
}

/// How candidate pairs above the IoU threshold become matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchRule {
    /// Pairs with IoU strictly above the threshold; only unique for
    /// thresholds of at least 0.5.
    Threshold(f64),
    /// One-to-one matching taking pairs by descending IoU among those
    /// strictly above the threshold.
    Greedy(f64),
}

/// Matches segments at IoU > 0.5.
pub fn match_segments(pred: &PanopticMap, gt: &PanopticMap) -> Result<PQStats, EvalError> {
    match_segments_with(pred, gt, MatchRule::Threshold(PQ_IOU))
}

/// Segment matching with void ground-truth pixels excluded from the union,
/// and predictions lying mostly on void ground truth not counted as false
/// positives.
pub fn match_segments_with(pred: &PanopticMap, gt: &PanopticMap, rule: MatchRule) -> Result<PQStats, EvalError> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(EvalError::DimMismatch {
            pw: pred.width(),
            ph: pred.height(),
            gw: gt.width(),
            gh: gt.height(),
        });
    }
    let mut pred_area: BTreeMap<Label, u64> = BTreeMap::new();
    let mut pred_on_void: HashMap<Label, u64> = HashMap::new();
    let mut gt_area: BTreeMap<Label, u64> = BTreeMap::new();
    let mut inter: HashMap<(Label, Label), u64> = HashMap::new();
    for (p, g) in pred.cells().iter().zip(gt.cells()) {
        if let Some(p) = p {
            *pred_area.entry(*p).or_default() += 1;
        }
        match (p, g) {
            (Some(p), Some(g)) => *inter.entry((*p, *g)).or_default() += 1,
            (Some(p), None) => *pred_on_void.entry(*p).or_default() += 1,
            _ => {}
        }
        if let Some(g) = g {
            *gt_area.entry(*g).or_default() += 1;
        }
    }

    let mut candidates: Vec<(f64, Label, Label)> = inter
        .iter()
        .filter(|((p, g), _)| p.class_id == g.class_id)
        .map(|(&(p, g), &i)| {
            let union = pred_area[&p] + gt_area[&g] - i - pred_on_void.get(&p).copied().unwrap_or(0);
            (i as f64 / union as f64, p, g)
        })
        .collect();
    let threshold = match rule {
        MatchRule::Threshold(t) | MatchRule::Greedy(t) => t,
    };
    candidates.retain(|c| c.0 > threshold);
    // Deterministic order: IoU descending, then labels.
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut stats = PQStats::default();
    let mut pred_matched: HashMap<Label, bool> = HashMap::new();
    let mut gt_matched: HashMap<Label, bool> = HashMap::new();
    for (iou, p, g) in candidates {
        let greedy = matches!(rule, MatchRule::Greedy(_));
        if greedy && (pred_matched.contains_key(&p) || gt_matched.contains_key(&g)) {
            continue;
        }
        pred_matched.insert(p, true);
        gt_matched.insert(g, true);
        let s = stats.class_mut(g.class_id);
        s.tp += 1;
        s.iou_sum += iou;
    }
    for g in gt_area.keys() {
        if !gt_matched.contains_key(g) {
            stats.class_mut(g.class_id).fn_ += 1;
        }
    }
    for (p, area) in &pred_area {
        if pred_matched.contains_key(p) {
            continue;
        }
        let on_void = pred_on_void.get(p).copied().unwrap_or(0);
        if on_void * 2 > *area {
            continue;
        }
        stats.class_mut(p.class_id).fp += 1;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassQuality {
    pub pq: f64,
    /// Reported as 0 when undefined (no true positives).
    pub sq: f64,
    pub rq: f64,
    pub sq_defined: bool,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Unweighted mean over classes with at least one TP, FP or FN.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PQResult {
    /// Defined classes only.
    pub per_class: BTreeMap<u32, ClassQuality>,
    pub all: Aggregate,
    pub things: Aggregate,
    pub stuff: Aggregate,
}

fn aggregate<'a>(it: impl Iterator<Item = &'a ClassQuality>) -> Aggregate {
    let mut a = Aggregate::default();
    for q in it {
        a.pq += q.pq;
        a.sq += q.sq;
        a.rq += q.rq;
        a.classes += 1;
    }
    if a.classes > 0 {
        let n = a.classes as f64;
        a.pq /= n;
        a.sq /= n;
        a.rq /= n;
    }
    a
}

pub fn pq(stats: &PQStats, catalog: &ClassCatalog) -> PQResult {
    let per_class: BTreeMap<u32, ClassQuality> = stats
        .classes
        .iter()
        .filter(|(_, s)| s.is_defined())
        .map(|(c, s)| (*c, s.quality()))
        .collect();
    PQResult {
        all: aggregate(per_class.values()),
        things: aggregate(per_class.iter().filter(|(c, _)| catalog.is_thing(**c)).map(|(_, q)| q)),
        stuff: aggregate(per_class.iter().filter(|(c, _)| catalog.is_stuff(**c)).map(|(_, q)| q)),
        per_class,
    }
}

impl PQResult {
    /// Per-class rows followed by `all`, `things` and `stuff` rows.
    pub fn to_csv(&self, catalog: &ClassCatalog) -> String {
        let mut s = String::from("row,class_id,name,pq,sq,rq,tp,fp,fn\n");
        for (c, q) in &self.per_class {
            let name = catalog.get(*c).map_or("", |e| e.name.as_str());
            writeln!(
                s,
                "class,{c},{name},{},{},{},{},{},{}",
                q.pq, q.sq, q.rq, q.tp, q.fp, q.fn_
            )
            .unwrap();
        }
        for (tag, a) in [("all", &self.all), ("things", &self.things), ("stuff", &self.stuff)] {
            writeln!(s, "{tag},,,{},{},{},,,", a.pq, a.sq, a.rq).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(labels: &[Option<Label>]) -> PanopticMap {
        PanopticMap::from_cells(labels.len(), 1, labels.to_vec())
    }

    #[test]
    fn identity_match() {
        let m = row(&[Some(Label::thing(1, 1)); 5]);
        let s = match_segments(&m, &m).unwrap();
        assert_eq!(
            s.classes[&1],
            ClassStats {
                tp: 1,
                fp: 0,
                fn_: 0,
                iou_sum: 1.0
            }
        );
    }

    #[test]
    fn empty_prediction_is_a_miss() {
        let gt = row(&[Some(Label::stuff(0)); 3]);
        let s = match_segments(&row(&[None; 3]), &gt).unwrap();
        assert_eq!(
            s.classes[&0],
            ClassStats {
                tp: 0,
                fp: 0,
                fn_: 1,
                iou_sum: 0.0
            }
        );
    }

    #[test]
    fn eight_of_ten() {
        // gt covers 0..9, pred covers 1..10: intersection 8, union 10
        let car = Some(Label::thing(2, 1));
        let gt: Vec<_> = (0..12)
            .map(|i| if i < 9 { car } else { Some(Label::stuff(0)) })
            .collect();
        let pred: Vec<_> = (0..12)
            .map(|i| {
                if (1..10).contains(&i) {
                    car
                } else {
                    Some(Label::stuff(0))
                }
            })
            .collect();
        let s = match_segments(&row(&pred), &row(&gt)).unwrap();
        assert_eq!(s.classes[&2].tp, 1);
        assert!((s.classes[&2].iou_sum - 0.8).abs() < 1e-12);
    }

    #[test]
    fn void_ground_truth_rules() {
        let a = Some(Label::stuff(0));
        // 4 gt pixels, 2 void; pred covers all 6: IoU = 4 / (6 + 4 - 4 - 2)
        let gt = row(&[a, a, a, a, None, None]);
        let pred = row(&[a; 6]);
        let s = match_segments(&pred, &gt).unwrap();
        assert_eq!(s.classes[&0].iou_sum, 1.0);
        // A prediction mostly on void is forgiven.
        let gt2 = row(&[None, None, None, Some(Label::stuff(1))]);
        let pred2 = row(&[a, a, a, a]);
        let s2 = match_segments(&pred2, &gt2).unwrap();
        assert!(s2.classes.get(&0).is_none_or(|c| c.fp == 0));
        assert_eq!(s2.classes[&1].fn_, 1);
    }

    #[test]
    fn quality_examples() {
        let q = ClassStats {
            tp: 1,
            fp: 1,
            fn_: 0,
            iou_sum: 0.8,
        }
        .quality();
        assert!((q.sq - 0.8).abs() < 1e-12);
        assert!((q.rq - 2.0 / 3.0).abs() < 1e-12);
        assert!((q.pq - 0.8 / 1.5).abs() < 1e-12);
        let z = ClassStats {
            tp: 0,
            fp: 2,
            fn_: 0,
            iou_sum: 0.0,
        }
        .quality();
        assert_eq!((z.pq, z.sq, z.rq, z.sq_defined), (0.0, 0.0, 0.0, false));
    }

    #[test]
    fn aggregates_split_by_kind() {
        let cat = ClassCatalog::synthetic(4, 1).unwrap();
        let mut s = PQStats::default();
        *s.class_mut(0) = ClassStats {
            tp: 1,
            fp: 0,
            fn_: 0,
            iou_sum: 1.0,
        };
        *s.class_mut(1) = ClassStats {
            tp: 0,
            fp: 1,
            fn_: 1,
            iou_sum: 0.0,
        };
        *s.class_mut(2) = ClassStats::default();
        let r = pq(&s, &cat);
        assert_eq!(r.per_class.len(), 2);
        assert_eq!(r.all.classes, 2);
        assert!((r.all.pq - 0.5).abs() < 1e-12);
        assert_eq!(r.stuff.pq, 1.0);
        assert_eq!(r.things.pq, 0.0);
        let csv = r.to_csv(&cat);
        assert_eq!(csv.lines().count(), 1 + 2 + 3);
    }

    #[test]
    fn greedy_is_one_to_one() {
        let a = Some(Label::thing(1, 1));
        let b = Some(Label::thing(1, 2));
        // gt one segment of 6; two preds of 3 each, IoU 0.5 each
        let gt = row(&[a; 6]);
        let pred = row(&[a, a, a, b, b, b]);
        let s = match_segments_with(&pred, &gt, MatchRule::Greedy(0.2)).unwrap();
        assert_eq!((s.classes[&1].tp, s.classes[&1].fp), (1, 1));
    }

    fn partition(w: usize, h: usize, cuts: &[u8]) -> PanopticMap {
        let cells = (0..w * h)
            .map(|i| match cuts[i] % 5 {
                0 => None,
                1 => Some(Label::stuff(0)),
                k => Some(Label::thing(1, k as u32)),
            })
            .collect();
        PanopticMap::from_cells(w, h, cells)
    }

    proptest! {
        #[test]
        fn unique_matches_above_half(a in proptest::collection::vec(any::<u8>(), 30), b in proptest::collection::vec(any::<u8>(), 30)) {
            let (p, g) = (partition(6, 5, &a), partition(6, 5, &b));
            let strict = match_segments(&p, &g).unwrap();
            let greedy = match_segments_with(&p, &g, MatchRule::Greedy(PQ_IOU)).unwrap();
            prop_assert_eq!(strict, greedy);
        }

        #[test]
        fn swap_symmetry(a in proptest::collection::vec(1u8..5, 30), b in proptest::collection::vec(1u8..5, 30)) {
            // no void, so FP forgiveness does not apply
            let (p, g) = (partition(6, 5, &a), partition(6, 5, &b));
            let s = match_segments(&p, &g).unwrap().total();
            let t = match_segments(&g, &p).unwrap().total();
            prop_assert_eq!((s.tp, s.fp, s.fn_), (t.tp, t.fn_, t.fp));
            prop_assert!((s.iou_sum - t.iou_sum).abs() < 1e-12);
        }

        #[test]
        fn pq_factorises(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, frac in 0.0f64..1.0) {
            let s = ClassStats { tp, fp, fn_, iou_sum: tp as f64 * frac };
            let q = s.quality();
            prop_assert!((q.pq - q.sq * q.rq).abs() < 1e-9);
        }
    }
}
