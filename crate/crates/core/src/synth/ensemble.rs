use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::SynthError;
use crate::mask::BitMask;
use crate::per_sample::{EnsembleBatch, EnsembleDims};

/// Mask logit inside a proposal's mask; the outside gets its negation.
pub const MASK_LOGIT: f32 = 6.0;
/// Class logit of the true class; all others are zero before noise.
pub const CLASS_LOGIT: f32 = 8.0;

/// Per-sample variation applied to the planted objects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterSpec {
    /// Instance masks move by an offset drawn uniformly from the integer
    /// points with `|dx| + |dy| <= translate`.
    pub translate: usize,
    /// Instance masks grow by a square dilation of radius drawn from
    /// `0..=dilate`.
    pub dilate: usize,
    /// Probability that an instance is missing from a sample.
    pub dropout: f64,
    /// Standard deviation of Gaussian noise on class logits.
    pub class_noise: f64,
    /// Standard deviation of Gaussian noise on mask logits.
    pub mask_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleLayout {
    pub samples: usize,
    pub proposals: usize,
    /// Image pixels per mask cell along each axis.
    pub mask_stride: usize,
}

impl Default for EnsembleLayout {
    fn default() -> Self {
        Self {
            samples: 15,
            proposals: 100,
            mask_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalOrigin {
    /// Planted instance id.
    Instance(u32),
    /// Stuff class.
    Stuff(u32),
    /// Background-class filler.
    Padding,
}

#[derive(Debug, Clone)]
pub struct SynthEnsemble {
    pub batch: EnsembleBatch,
    /// `origins[q][n]` is where proposal `n` of sample `q` came from.
    pub origins: Vec<Vec<ProposalOrigin>>,
}

fn noise(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive finite sigma"))
}

fn translate(m: &BitMask, dx: isize, dy: isize) -> BitMask {
    let (w, h) = (m.width(), m.height());
    let mut out = BitMask::empty(w, h);
    for i in m.ones() {
        let (x, y) = ((i % w) as isize + dx, (i / w) as isize + dy);
        if (0..w as isize).contains(&x) && (0..h as isize).contains(&y) {
            out.set(y as usize * w + x as usize, true);
        }
    }
    out
}

fn dilate(m: &BitMask, r: usize) -> BitMask {
    if r == 0 {
        return m.clone();
    }
    let (w, h) = (m.width(), m.height());
    let mut out = BitMask::empty(w, h);
    for i in m.ones() {
        let (x, y) = (i % w, i / w);
        for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                out.set(yy * w + xx, true);
            }
        }
    }
    out
}

fn l1_offsets(t: usize) -> Vec<(isize, isize)> {
    let t = t as isize;
    (-t..=t)
        .flat_map(|dy| (-t..=t).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx.abs() + dy.abs() <= t)
        .collect()
}

struct Proposal {
    origin: ProposalOrigin,
    class_id: u32,
    mask: Option<BitMask>,
}

/// Builds a `Q`-sample ensemble over `scene`. Each sample uses its own
/// random stream derived from `(jitter.seed, q)`, so samples do not depend
/// on one another.
pub fn gen_ensemble(scene: &Scene, layout: EnsembleLayout, jitter: JitterSpec) -> Result<SynthEnsemble, SynthError> {
    if layout.samples == 0 || layout.proposals == 0 || layout.mask_stride == 0 {
        return Err(SynthError::BadSpec(
            "samples, proposals and mask stride must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&jitter.dropout)
        || jitter.class_noise.is_nan()
        || jitter.class_noise < 0.0
        || jitter.mask_noise.is_nan()
        || jitter.mask_noise < 0.0
    {
        return Err(SynthError::BadSpec(
            "dropout must be in [0, 1] and noise scales non-negative".into(),
        ));
    }
    let (w, h) = (scene.gt.width(), scene.gt.height());
    let s = layout.mask_stride;
    let (mw, mh) = (w.div_ceil(s), h.div_ceil(s));
    let c = scene.catalog.len();
    let n = layout.proposals;

    let mut stuff_classes: Vec<u32> = scene.bands.iter().map(|b| b.0).collect();
    stuff_classes.sort_unstable();
    stuff_classes.dedup();
    let needed = scene.instances.len() + stuff_classes.len();
    if needed > n {
        return Err(SynthError::ProposalBudget { needed, available: n });
    }

    let offsets = l1_offsets(jitter.translate);
    let class_noise = noise(jitter.class_noise);
    let mask_noise = noise(jitter.mask_noise);
    let cell_pixel: Vec<usize> = (0..mh * mw)
        .map(|cell| {
            let (r, col) = (cell / mw, cell % mw);
            (r * s + s / 2).min(h - 1) * w + (col * s + s / 2).min(w - 1)
        })
        .collect();

    let mut logits = Vec::with_capacity(layout.samples * n * c);
    let mut masks = Vec::with_capacity(layout.samples * n * mh * mw);
    let mut origins = Vec::with_capacity(layout.samples);
    for q in 0..layout.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(jitter.seed);
        rng.set_stream(q as u64);

        let mut props: Vec<Proposal> = Vec::with_capacity(n);
        let mut covered = BitMask::empty(w, h);
        for inst in &scene.instances {
            let dropped = rng.random_bool(jitter.dropout);
            let (dx, dy) = offsets[rng.random_range(0..offsets.len())];
            let r = rng.random_range(0..=jitter.dilate);
            if dropped {
                continue;
            }
            let m = dilate(&translate(&inst.mask, dx, dy), r);
            covered.union_with(&m).expect("same image");
            props.push(Proposal {
                origin: ProposalOrigin::Instance(inst.instance_id),
                class_id: inst.class_id,
                mask: Some(m),
            });
        }
        for &class in &stuff_classes {
            let mut m = BitMask::empty(w, h);
            for (_, band) in scene.bands.iter().filter(|b| b.0 == class) {
                m.union_with(band).expect("same image");
            }
            m.subtract(&covered).expect("same image");
            if !m.is_empty() {
                props.push(Proposal {
                    origin: ProposalOrigin::Stuff(class),
                    class_id: class,
                    mask: Some(m),
                });
            }
        }
        while props.len() < n {
            props.push(Proposal {
                origin: ProposalOrigin::Padding,
                class_id: scene.catalog.background_id(),
                mask: None,
            });
        }
        props.shuffle(&mut rng);

        for p in &props {
            for k in 0..c {
                let base = if k as u32 == p.class_id { CLASS_LOGIT } else { 0.0 };
                let e = class_noise.map_or(0.0, |d| d.sample(&mut rng));
                logits.push(base + e as f32);
            }
            for &px in &cell_pixel {
                let inside = p.mask.as_ref().is_some_and(|m| m.get(px));
                let base = if inside { MASK_LOGIT } else { -MASK_LOGIT };
                let e = mask_noise.map_or(0.0, |d| d.sample(&mut rng));
                masks.push(base + e as f32);
            }
        }
        origins.push(props.iter().map(|p| p.origin).collect());
    }

    let dims = EnsembleDims {
        samples: layout.samples,
        proposals: n,
        classes: c,
        mask_height: mh,
        mask_width: mw,
        height: h,
        width: w,
    };
    let batch = EnsembleBatch::new(dims, logits, masks, scene.catalog.clone())?;
    Ok(SynthEnsemble { batch, origins })
}
