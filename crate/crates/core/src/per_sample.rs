//! Raw ensemble container and the per-sample reduction from `N` proposals to
//! the `K` non-background ones, each owning a set of pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::mask::BitMask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BatchError {
    #[error("invalid ensemble dims: {0}")]
    InvalidDims(String),
    #[error("{what} holds {found} values, dims imply {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} contains non-finite values")]
    NonFinite { what: &'static str },
    #[error("catalog has {found} classes, ensemble has C = {expected}")]
    CatalogMismatch { expected: usize, found: usize },
    #[error("requested {requested} samples but the ensemble holds {available}")]
    NotEnoughSamples { requested: usize, available: usize },
}

/// Sizes of an ensemble: `Q` samples of `N` proposals over `C` classes, mask
/// grids of `mask_height × mask_width`, output images of `height × width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleDims {
    pub samples: usize,
    pub proposals: usize,
    pub classes: usize,
    pub mask_height: usize,
    pub mask_width: usize,
    pub height: usize,
    pub width: usize,
}

impl EnsembleDims {
    pub fn validate(&self) -> Result<(), BatchError> {
        if self.samples == 0 || self.proposals == 0 {
            return Err(BatchError::InvalidDims(format!(
                "need Q >= 1 and N >= 1, got Q = {}, N = {}",
                self.samples, self.proposals
            )));
        }
        if self.classes < 2 {
            return Err(BatchError::InvalidDims(format!(
                "need C >= 2 (a real class plus background), got {}",
                self.classes
            )));
        }
        if self.mask_height == 0 || self.mask_width == 0 || self.height == 0 || self.width == 0 {
            return Err(BatchError::InvalidDims("zero-sized mask grid or image".into()));
        }
        Ok(())
    }

    pub fn logits_len(&self) -> usize {
        self.samples * self.proposals * self.classes
    }

    pub fn masks_len(&self) -> usize {
        self.samples * self.proposals * self.mask_height * self.mask_width
    }
}

/// Class logits (`Q×N×C`) and mask logits (`Q×N×h×w`) of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBatch {
    dims: EnsembleDims,
    logits: Vec<f32>,
    mask_logits: Vec<f32>,
    catalog: ClassCatalog,
}

impl EnsembleBatch {
    pub fn new(
        dims: EnsembleDims,
        logits: Vec<f32>,
        mask_logits: Vec<f32>,
        catalog: ClassCatalog,
    ) -> Result<Self, BatchError> {
        dims.validate()?;
        if logits.len() != dims.logits_len() {
            return Err(BatchError::LengthMismatch {
                what: "logits",
                expected: dims.logits_len(),
                found: logits.len(),
            });
        }
        if mask_logits.len() != dims.masks_len() {
            return Err(BatchError::LengthMismatch {
                what: "mask logits",
                expected: dims.masks_len(),
                found: mask_logits.len(),
            });
        }
        if catalog.len() != dims.classes {
            return Err(BatchError::CatalogMismatch {
                expected: dims.classes,
                found: catalog.len(),
            });
        }
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(BatchError::NonFinite { what: "logits" });
        }
        if !mask_logits.iter().all(|v| v.is_finite()) {
            return Err(BatchError::NonFinite { what: "mask logits" });
        }
        Ok(Self {
            dims,
            logits,
            mask_logits,
            catalog,
        })
    }

    pub fn dims(&self) -> &EnsembleDims {
        &self.dims
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    pub fn mask_logits(&self) -> &[f32] {
        &self.mask_logits
    }

    pub fn proposal_logits(&self, q: usize, n: usize) -> &[f32] {
        let c = self.dims.classes;
        let start = (q * self.dims.proposals + n) * c;
        &self.logits[start..start + c]
    }

    pub fn proposal_mask(&self, q: usize, n: usize) -> &[f32] {
        let hw = self.dims.mask_height * self.dims.mask_width;
        let start = (q * self.dims.proposals + n) * hw;
        &self.mask_logits[start..start + hw]
    }

    /// The first `q` samples of this ensemble.
    pub fn first_samples(&self, q: usize) -> Result<Self, BatchError> {
        if q == 0 || q > self.dims.samples {
            return Err(BatchError::NotEnoughSamples {
                requested: q,
                available: self.dims.samples,
            });
        }
        let dims = EnsembleDims {
            samples: q,
            ..self.dims
        };
        Ok(Self {
            logits: self.logits[..dims.logits_len()].to_vec(),
            mask_logits: self.mask_logits[..dims.masks_len()].to_vec(),
            dims,
            catalog: self.catalog.clone(),
        })
    }
}

/// Numerically stable softmax (max-subtracted), computed in f64.
pub fn softmax<T: Copy + Into<f64>>(v: &[T]) -> Vec<f64> {
    let max = v.iter().map(|&x| x.into()).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x.into() - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax<T: Copy + PartialOrd>(v: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x.partial_cmp(&b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpscaleMode {
    /// Bilinear with pixel-centre sampling (`align_corners = false`).
    #[default]
    Bilinear,
    Nearest,
}

/// Precomputed sampling tables for resizing `src_h×src_w` grids to
/// `dst_h×dst_w`.
#[derive(Debug, Clone)]
pub struct Upscaler {
    src: (usize, usize),
    dst: (usize, usize),
    mode: UpscaleMode,
    rows: Vec<(usize, usize, f32)>,
    cols: Vec<(usize, usize, f32)>,
}

fn axis_taps(src: usize, dst: usize, mode: UpscaleMode) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| match mode {
            UpscaleMode::Bilinear => {
                let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(src - 1);
                let i1 = (i0 + 1).min(src - 1);
                let w = (s - i0 as f64).clamp(0.0, 1.0);
                (i0, i1, w as f32)
            }
            UpscaleMode::Nearest => {
                let i = ((d as f64 * scale).floor() as usize).min(src - 1);
                (i, i, 0.0)
            }
        })
        .collect()
}

impl Upscaler {
    pub fn new(src_h: usize, src_w: usize, dst_h: usize, dst_w: usize, mode: UpscaleMode) -> Self {
        assert!(src_h > 0 && src_w > 0 && dst_h > 0 && dst_w > 0);
        Self {
            src: (src_h, src_w),
            dst: (dst_h, dst_w),
            mode,
            rows: axis_taps(src_h, dst_h, mode),
            cols: axis_taps(src_w, dst_w, mode),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    pub fn mode(&self) -> UpscaleMode {
        self.mode
    }

    pub fn apply(&self, mask: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.dst.0 * self.dst.1];
        self.apply_into(mask, &mut out);
        out
    }

    pub fn apply_into(&self, mask: &[f32], out: &mut [f32]) {
        let (sh, sw) = self.src;
        let (dh, dw) = self.dst;
        assert_eq!(mask.len(), sh * sw);
        assert_eq!(out.len(), dh * dw);
        if self.is_identity() {
            out.copy_from_slice(mask);
            return;
        }
        // Horizontal pass into sh×dw, then vertical.
        let mut tmp = vec![0.0f32; sh * dw];
        for r in 0..sh {
            let src_row = &mask[r * sw..(r + 1) * sw];
            let dst_row = &mut tmp[r * dw..(r + 1) * dw];
            for (o, &(c0, c1, w)) in dst_row.iter_mut().zip(&self.cols) {
                *o = src_row[c0] * (1.0 - w) + src_row[c1] * w;
            }
        }
        for (y, &(r0, r1, w)) in self.rows.iter().enumerate() {
            let a = &tmp[r0 * dw..(r0 + 1) * dw];
            let b = &tmp[r1 * dw..(r1 + 1) * dw];
            let dst_row = &mut out[y * dw..(y + 1) * dw];
            for x in 0..dw {
                dst_row[x] = a[x] * (1.0 - w) + b[x] * w;
            }
        }
    }
}

/// Resizes one mask-logit grid.
pub fn upscale_mask(mask: &[f32], src: (usize, usize), dst: (usize, usize), mode: UpscaleMode) -> Vec<f32> {
    Upscaler::new(src.0, src.1, dst.0, dst.1, mode).apply(mask)
}

/// Per-pixel winner among a set of low resolution mask-logit grids. Softmax
/// over proposals is monotone, so the argmax is taken on the upscaled logits
/// directly; ties go to the lowest index. Returns `None` everywhere when
/// `masks` is empty.
pub fn assign_pixels(masks: &[&[f32]], upscaler: &Upscaler) -> Vec<Option<u32>> {
    let (dh, dw) = upscaler.dst;
    let mut best_idx: Vec<Option<u32>> = vec![None; dh * dw];
    let mut best_val = vec![f32::NEG_INFINITY; dh * dw];
    let mut buf = vec![0.0f32; dh * dw];
    for (k, m) in masks.iter().enumerate() {
        upscaler.apply_into(m, &mut buf);
        for ((bi, bv), &v) in best_idx.iter_mut().zip(best_val.iter_mut()).zip(&buf) {
            if bi.is_none() || v > *bv {
                *bi = Some(k as u32);
                *bv = v;
            }
        }
    }
    best_idx
}

/// A non-background proposal that survived the per-sample reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct KeptProposal {
    /// Index among the sample's `N` raw proposals.
    pub source: usize,
    /// Full length-`C` class distribution, background included.
    pub softmax: Vec<f64>,
    pub class_id: u32,
    /// Low resolution mask logits (`h×w`).
    pub mask_logits: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSegmentation {
    /// Kept-proposal index owning each pixel; `None` when nothing was kept.
    pub proposal_map: Vec<Option<u32>>,
    pub kept: Vec<KeptProposal>,
}

impl SampleSegmentation {
    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    pub fn proposal_mask(&self, k: usize, width: usize, height: usize) -> BitMask {
        BitMask::from_fn(width, height, |i| self.proposal_map[i] == Some(k as u32))
    }

    /// Masks of every kept proposal in one pass over the map.
    pub fn proposal_masks(&self, width: usize, height: usize) -> Vec<BitMask> {
        let mut masks = vec![BitMask::empty(width, height); self.kept.len()];
        for (i, p) in self.proposal_map.iter().enumerate() {
            if let Some(k) = p {
                masks[*k as usize].set(i, true);
            }
        }
        masks
    }
}

/// Output of the per-sample stage: a proposal map and kept softmax vectors per
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleSegmentation {
    pub width: usize,
    pub height: usize,
    pub mask_width: usize,
    pub mask_height: usize,
    pub num_classes: usize,
    pub upscale: UpscaleMode,
    pub samples: Vec<SampleSegmentation>,
}

impl PerSampleSegmentation {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Samples in which every proposal was background.
    pub fn empty_samples(&self) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kept.is_empty())
            .map(|(q, _)| q)
            .collect()
    }

    pub fn upscaler(&self) -> Upscaler {
        Upscaler::new(self.mask_height, self.mask_width, self.height, self.width, self.upscale)
    }
}

/// Reduces one sample: drop background-argmax proposals, then give each pixel
/// to the kept proposal with the highest upscaled mask logit.
pub fn segment_sample(batch: &EnsembleBatch, q: usize, upscaler: &Upscaler) -> SampleSegmentation {
    let d = batch.dims();
    let bg = batch.catalog().background_id() as usize;
    let kept: Vec<KeptProposal> = (0..d.proposals)
        .filter_map(|n| {
            let sm = softmax(batch.proposal_logits(q, n));
            let label = argmax(&sm).expect("C >= 2");
            (label != bg).then(|| KeptProposal {
                source: n,
                class_id: label as u32,
                softmax: sm,
                mask_logits: batch.proposal_mask(q, n).to_vec(),
            })
        })
        .collect();
    let masks: Vec<&[f32]> = kept.iter().map(|k| k.mask_logits.as_slice()).collect();
    SampleSegmentation {
        proposal_map: assign_pixels(&masks, upscaler),
        kept,
    }
}

pub fn per_sample_seg(batch: &EnsembleBatch, mode: UpscaleMode) -> PerSampleSegmentation {
    let d = batch.dims();
    let upscaler = Upscaler::new(d.mask_height, d.mask_width, d.height, d.width, mode);
    PerSampleSegmentation {
        width: d.width,
        height: d.height,
        mask_width: d.mask_width,
        mask_height: d.mask_height,
        num_classes: d.classes,
        upscale: mode,
        samples: (0..d.samples).map(|q| segment_sample(batch, q, &upscaler)).collect(),
    }
}
