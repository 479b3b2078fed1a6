//! Entropy-based uncertainty maps over confidence stacks, confidence pruning,
//! histogram binning and heatmap export.
//!
//! All entropies are in nats. Pixels that no sample covered carry the zero
//! vector; they get value 0 and a separate no-prediction flag so that
//! consumers can treat them as maximally uncertain.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panoptic::PanopticMap;
use crate::store::{StoreError, Tensor};
use crate::stuff::{ConfidenceStack, MeanConfidence};

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("no uncertainty maps given")]
    NoMaps,
    #[error("maps disagree on class count ({a} vs {b})")]
    ClassCountMismatch { a: usize, b: usize },
    #[error("uncertainty tensor must be f32 with dims [2, H, W], got {0:?}")]
    BadTensor(Vec<usize>),
    #[error("sample {q} out of range for a stack of {samples}")]
    NoSuchSample { q: usize, samples: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    SoftmaxEntropy,
    #[default]
    PredictiveEntropy,
    MutualInformation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    width: usize,
    height: usize,
    num_classes: usize,
    measure: Measure,
    values: Vec<f64>,
    no_prediction: Vec<bool>,
}

impl UncertaintyMap {
    pub fn new(
        width: usize,
        height: usize,
        num_classes: usize,
        measure: Measure,
        values: Vec<f64>,
        no_prediction: Vec<bool>,
    ) -> Self {
        assert_eq!(values.len(), width * height);
        assert_eq!(no_prediction.len(), width * height);
        Self {
            width,
            height,
            num_classes,
            measure,
            values,
            no_prediction,
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

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn no_prediction(&self) -> &[bool] {
        &self.no_prediction
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `ln C`, the entropy of the uniform distribution.
    pub fn max_entropy(&self) -> f64 {
        (self.num_classes as f64).ln()
    }

    /// Value with no-prediction pixels raised to `ln C`.
    pub fn effective(&self, i: usize) -> f64 {
        if self.no_prediction[i] {
            self.max_entropy()
        } else {
            self.values[i]
        }
    }

    pub fn effective_values(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.effective(i)).collect()
    }

    /// `f32` tensor of dims `[2, H, W]`: values, then the no-prediction flag
    /// as 0/1.
    pub fn to_tensor(&self) -> Tensor {
        let mut data: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        data.extend(self.no_prediction.iter().map(|&f| if f { 1.0 } else { 0.0 }));
        Tensor::from_f32(vec![2, self.height, self.width], data).expect("dims match data")
    }

    pub fn from_tensor(t: &Tensor, measure: Measure, num_classes: usize) -> Result<Self, UncertaintyError> {
        let dims = t.dims().to_vec();
        let bad = || UncertaintyError::BadTensor(dims.clone());
        if dims.len() != 3 || dims[0] != 2 {
            return Err(bad());
        }
        let data = t.clone().into_f32().ok_or_else(bad)?;
        let (h, w) = (dims[1], dims[2]);
        let (vals, flags) = data.split_at(h * w);
        Ok(Self::new(
            w,
            h,
            num_classes,
            measure,
            vals.iter().map(|&v| v as f64).collect(),
            flags.iter().map(|&f| f != 0.0).collect(),
        ))
    }
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Entropy of the ensemble mean distribution.
pub fn predictive_entropy(mc: &MeanConfidence) -> UncertaintyMap {
    let n = mc.pixels();
    let values = (0..n).map(|i| entropy(mc.pixel(i))).collect();
    let no_prediction = (0..n).map(|i| !mc.covered(i)).collect();
    UncertaintyMap::new(
        mc.width(),
        mc.height(),
        mc.num_classes(),
        Measure::PredictiveEntropy,
        values,
        no_prediction,
    )
}

/// `H[mean_q p_q] - mean_q H[p_q]`; uncovered samples enter both terms as
/// zero vectors.
pub fn mutual_information(sc: &ConfidenceStack) -> UncertaintyMap {
    let (n, c, q) = (sc.pixels(), sc.num_classes(), sc.num_samples());
    let mut mean = vec![0.0; n * c];
    let mut mean_h = vec![0.0; n];
    let mut covered = vec![false; n];
    for s in 0..q {
        let table_h: Vec<f64> = sc.sample_table(s).iter().map(|p| entropy(p)).collect();
        let table = sc.sample_table(s);
        for (i, owner) in sc.sample_owner(s).iter().enumerate() {
            if let Some(k) = owner {
                covered[i] = true;
                mean_h[i] += table_h[*k as usize];
                for (a, b) in mean[i * c..(i + 1) * c].iter_mut().zip(&table[*k as usize]) {
                    *a += b;
                }
            }
        }
    }
    let qf = q.max(1) as f64;
    let values = (0..n)
        .map(|i| {
            let m: Vec<f64> = mean[i * c..(i + 1) * c].iter().map(|x| x / qf).collect();
            entropy(&m) - mean_h[i] / qf
        })
        .collect();
    UncertaintyMap::new(
        sc.width(),
        sc.height(),
        c,
        Measure::MutualInformation,
        values,
        covered.into_iter().map(|c| !c).collect(),
    )
}

/// Pixelwise entropy of a single sample's distributions.
pub fn softmax_entropy_baseline(sc: &ConfidenceStack, q: usize) -> Result<UncertaintyMap, UncertaintyError> {
    if q >= sc.num_samples() {
        return Err(UncertaintyError::NoSuchSample {
            q,
            samples: sc.num_samples(),
        });
    }
    let table_h: Vec<f64> = sc.sample_table(q).iter().map(|p| entropy(p)).collect();
    let owner = sc.sample_owner(q);
    Ok(UncertaintyMap::new(
        sc.width(),
        sc.height(),
        sc.num_classes(),
        Measure::SoftmaxEntropy,
        owner.iter().map(|o| o.map_or(0.0, |k| table_h[k as usize])).collect(),
        owner.iter().map(Option::is_none).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneParams {
    /// Minimum mean confidence of a pixel's assigned class.
    pub min_prob: f64,
    /// Segments smaller than this are removed.
    pub min_pixels: usize,
}

impl Default for PruneParams {
    fn default() -> Self {
        Self {
            min_prob: 0.4,
            min_pixels: 4,
        }
    }
}

/// Voids pixels whose assigned class has mean confidence below `min_prob`,
/// then voids every segment left with fewer than `min_pixels` pixels.
pub fn prune(map: &PanopticMap, mc: &MeanConfidence, params: PruneParams) -> PanopticMap {
    let mut out = map.clone();
    for (i, cell) in out.cells_mut().iter_mut().enumerate() {
        if let Some(l) = cell {
            if mc.pixel(i)[l.class_id as usize] < params.min_prob {
                *cell = None;
            }
        }
    }
    let areas = out.segment_areas();
    for cell in out.cells_mut() {
        if cell.is_some_and(|l| areas[&l] < params.min_pixels) {
            *cell = None;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyHistogram {
    /// `n_bins + 1` uniform edges over `[0, ln C]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Pixels binned, i.e. the sum of `counts`.
    pub total: u64,
    /// Pixels without any prediction, not binned.
    pub no_prediction: u64,
}

impl EntropyHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(s, "{},{},{}", self.edges[k], self.edges[k + 1], c).unwrap();
        }
        s
    }
}

/// Bins the raw values of covered pixels into `n_bins` uniform bins over
/// `[0, ln C]`, the last bin closed. Values above `ln C` land in the last bin.
pub fn bin_entropy(maps: &[UncertaintyMap], n_bins: usize) -> Result<EntropyHistogram, UncertaintyError> {
    if n_bins == 0 {
        return Err(UncertaintyError::NoBins);
    }
    let first = maps.first().ok_or(UncertaintyError::NoMaps)?;
    let c = first.num_classes;
    if let Some(m) = maps.iter().find(|m| m.num_classes != c) {
        return Err(UncertaintyError::ClassCountMismatch { a: c, b: m.num_classes });
    }
    let top = first.max_entropy();
    let edges = (0..=n_bins).map(|k| top * k as f64 / n_bins as f64).collect();
    let mut counts = vec![0u64; n_bins];
    let mut no_prediction = 0;
    for m in maps {
        for (&v, &np) in m.values.iter().zip(&m.no_prediction) {
            if np {
                no_prediction += 1;
                continue;
            }
            let k = if top > 0.0 {
                ((v / top * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1)
            } else {
                0
            };
            counts[k] += 1;
        }
    }
    Ok(EntropyHistogram {
        total: counts.iter().sum(),
        edges,
        counts,
        no_prediction,
    })
}

/// Grey levels `round(255 u / ln C)` (half up, clamped); no-prediction
/// pixels are white.
pub fn heatmap_pixels(u: &UncertaintyMap) -> Vec<u8> {
    let top = u.max_entropy();
    (0..u.values.len())
        .map(|i| {
            if u.no_prediction[i] {
                return 255;
            }
            let g = if top > 0.0 {
                (255.0 * u.values[i] / top + 0.5).floor()
            } else {
                0.0
            };
            g.clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Writes the heatmap as an 8-bit greyscale PNG; lighter is more uncertain.
pub fn export_heatmap(u: &UncertaintyMap, path: &Path) -> Result<(), StoreError> {
    let img =
        image::GrayImage::from_raw(u.width as u32, u.height as u32, heatmap_pixels(u)).expect("buffer matches dims");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
