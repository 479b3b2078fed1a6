use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::catalog::ClassCatalog;
use crate::mask::BitMask;
use crate::panoptic::{Label, PanopticMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Total classes including the background (last id).
    pub num_classes: usize,
    /// Stuff classes take ids `0..num_stuff`; things follow.
    pub num_stuff: usize,
    pub instances: usize,
    /// Inclusive range of instance extents in pixels, per axis.
    pub min_size: usize,
    pub max_size: usize,
    /// Probability of an ellipse rather than a rectangle.
    pub ellipse_fraction: f64,
    /// Minimum gap between instances, and between instances and the border.
    pub margin: usize,
    pub allow_overlap: bool,
    pub stuff_bands: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            num_classes: 12,
            num_stuff: 4,
            instances: 6,
            min_size: 10,
            max_size: 28,
            ellipse_fraction: 0.5,
            margin: 4,
            allow_overlap: false,
            stuff_bands: 3,
            max_attempts: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub instance_id: u32,
    pub class_id: u32,
    /// Visible pixels.
    pub mask: BitMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: PanopticMap,
    pub catalog: ClassCatalog,
    pub instances: Vec<PlantedInstance>,
    /// Per stuff band: its class and full-band mask, instances included.
    pub bands: Vec<(u32, BitMask)>,
}

impl SceneSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadSpec(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image must be nonempty");
        }
        if self.num_stuff == 0 || self.num_stuff + 1 > self.num_classes {
            return bad("stuff classes must number between 1 and num_classes - 1");
        }
        if self.instances > 0 && self.num_stuff + 2 > self.num_classes {
            return bad("placing instances needs at least one thing class");
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad("instance sizes must satisfy 1 <= min_size <= max_size");
        }
        if self.stuff_bands == 0 || self.stuff_bands > self.height {
            return bad("stuff band count must be in 1..=height");
        }
        if !(0.0..=1.0).contains(&self.ellipse_fraction) {
            return bad("ellipse fraction must be in [0, 1]");
        }
        Ok(())
    }
}

fn shape_mask(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize, ellipse: bool) -> BitMask {
    let (cx, cy) = (x0 as f64 + w as f64 / 2.0, y0 as f64 + h as f64 / 2.0);
    let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
    BitMask::from_fn(width, height, |i| {
        let (x, y) = (i % width, i / width);
        if x < x0 || x >= x0 + w || y < y0 || y >= y0 + h {
            return false;
        }
        if !ellipse {
            return true;
        }
        let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
        dx * dx + dy * dy <= 1.0
    })
}

/// Deterministic for a given spec.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let catalog = ClassCatalog::synthetic(spec.num_classes, spec.num_stuff)?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut bands = Vec::with_capacity(spec.stuff_bands);
    let mut prev = None;
    for b in 0..spec.stuff_bands {
        let (top, bottom) = (b * h / spec.stuff_bands, (b + 1) * h / spec.stuff_bands);
        let mut class = rng.random_range(0..spec.num_stuff as u32);
        if spec.num_stuff > 1 && Some(class) == prev {
            class = (class + 1) % spec.num_stuff as u32;
        }
        prev = Some(class);
        bands.push((class, BitMask::from_fn(w, h, |i| (top..bottom).contains(&(i / w)))));
    }

    let thing_ids: Vec<u32> = catalog.thing_ids().collect();
    let m = spec.margin;
    let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut instances: Vec<PlantedInstance> = Vec::new();
    let mut attempts = 0;
    while instances.len() < spec.instances {
        if attempts >= spec.max_attempts {
            return Err(SynthError::InfeasiblePacking {
                placed: instances.len(),
                requested: spec.instances,
                attempts,
            });
        }
        attempts += 1;
        let bw = rng.random_range(spec.min_size..=spec.max_size);
        let bh = rng.random_range(spec.min_size..=spec.max_size);
        let ellipse = rng.random_bool(spec.ellipse_fraction);
        if bw + 2 * m > w || bh + 2 * m > h {
            continue;
        }
        let x0 = rng.random_range(m..=w - m - bw);
        let y0 = rng.random_range(m..=h - m - bh);
        let clear = spec.allow_overlap
            || boxes.iter().all(|&(ax, ay, aw, ah)| {
                x0 >= ax + aw + m || ax >= x0 + bw + m || y0 >= ay + ah + m || ay >= y0 + bh + m
            });
        if !clear {
            continue;
        }
        let class_id = thing_ids[rng.random_range(0..thing_ids.len())];
        let mask = shape_mask(w, h, x0, y0, bw, bh, ellipse);
        // Later instances occlude earlier ones; an instance hidden entirely
        // is not placed.
        let mut visible: Vec<BitMask> = instances.iter().map(|p| p.mask.clone()).collect();
        for v in &mut visible {
            v.subtract(&mask).expect("same image");
        }
        if visible.iter().any(BitMask::is_empty) {
            continue;
        }
        for (p, v) in instances.iter_mut().zip(visible) {
            p.mask = v;
        }
        boxes.push((x0, y0, bw, bh));
        instances.push(PlantedInstance {
            instance_id: instances.len() as u32 + 1,
            class_id,
            mask,
        });
    }

    let mut gt = PanopticMap::void(w, h);
    for (class, band) in &bands {
        for i in band.ones() {
            gt.cells_mut()[i] = Some(Label::stuff(*class));
        }
    }
    for p in &instances {
        for i in p.mask.ones() {
            gt.cells_mut()[i] = Some(Label::thing(p.class_id, p.instance_id));
        }
    }
    Ok(Scene {
        gt,
        catalog,
        instances,
        bands,
    })
}
