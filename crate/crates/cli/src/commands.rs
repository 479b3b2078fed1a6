//! Subcommand implementations. Each one writes through an [`Outputs`] guard
//! so a failure leaves no partial results behind.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use panfuse::bench::{run_bench, BenchConfig};
use panfuse::eval::{match_segments, pq, sweep_set, threshold_grid, PQStats, SweepImage};
use panfuse::pipeline::{fuse, Method, PipelineOptions};
use panfuse::store::{
    load_ensemble, read_panoptic_png, read_tensor, write_ensemble, write_panoptic_png, write_tensor, SegmentTable,
};
use panfuse::synth::{corrupt_image, gen_ensemble, gen_scene, CorruptionParams};
use panfuse::uncertainty::{bin_entropy, export_heatmap, Measure, UncertaintyMap};
use panfuse::{ClassCatalog, EnsembleBatch, PanopticMap};

use crate::config::Config;
use crate::errors::InputError;
use crate::files::{discover_manifests, list_pngs, require_file, Outputs};

pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub manifest: PathBuf,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub samples_used: usize,
    pub empty_samples: Vec<usize>,
    pub instance_count: usize,
    pub segment_count: usize,
    pub void_pixels: usize,
    /// Paths relative to the output directory.
    pub panoptic: PathBuf,
    pub uncertainty: PathBuf,
    pub heatmap: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuseReport {
    pub method: Method,
    pub measure: Measure,
    pub options: PipelineOptions,
    pub images: Vec<ImageReport>,
}

fn pool(cfg: &Config) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    b.build().context("cannot start worker pool")
}

fn to_json(v: &impl Serialize) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| InputError(format!("invalid json in {}: {e}", path.display())).into())
}

fn load_all(cfg: &Config, inputs: &[PathBuf]) -> anyhow::Result<Vec<(PathBuf, String, EnsembleBatch)>> {
    let manifests = discover_manifests(inputs)?;
    let loaded: Vec<_> = pool(cfg)?.install(|| {
        manifests
            .par_iter()
            .map(|p| load_ensemble(p).with_context(|| format!("loading {}", p.display())))
            .collect::<Vec<_>>()
    });
    let mut out = Vec::with_capacity(loaded.len());
    let mut seen = BTreeSet::new();
    for (p, r) in manifests.into_iter().zip(loaded) {
        let (m, batch) = r?;
        if !seen.insert(m.image_id.clone()) {
            return Err(InputError(format!("duplicate image id {:?} in {}", m.image_id, p.display())).into());
        }
        out.push((p, m.image_id, batch));
    }
    Ok(out)
}

/// Fuses every ensemble under `inputs` into `out`.
pub fn cmd_fuse(cfg: &Config, inputs: &[PathBuf], out: &Path) -> anyhow::Result<FuseReport> {
    let opts = cfg.pipeline();
    let ensembles = load_all(cfg, inputs)?;
    let fused: Vec<_> = pool(cfg)?.install(|| {
        ensembles
            .par_iter()
            .map(|(p, _, b)| fuse(b, &opts).with_context(|| format!("fusing {}", p.display())))
            .collect::<Vec<_>>()
    });

    let mut guard = Outputs::new();
    guard.dir(out)?;
    let pan_dir = guard.dir(&out.join("panoptic"))?;
    let unc_dir = guard.dir(&out.join("uncertainty"))?;
    let heat_dir = guard.dir(&out.join("heatmap"))?;
    let mut images = Vec::with_capacity(fused.len());
    for ((manifest, id, batch), f) in ensembles.iter().zip(fused) {
        let f = f?;
        let pan = pan_dir.join(format!("{id}.png"));
        let unc = unc_dir.join(format!("{id}.pftn"));
        let heat = heat_dir.join(format!("{id}.png"));
        guard.extend([
            pan.clone(),
            panfuse::store::sidecar_path(&pan),
            unc.clone(),
            heat.clone(),
        ]);
        let table = SegmentTable::from_map(&f.map);
        write_panoptic_png(&f.map, &table, &pan)?;
        write_tensor(&f.uncertainty.to_tensor(), &unc)?;
        export_heatmap(&f.uncertainty, &heat)?;
        images.push(ImageReport {
            image_id: id.clone(),
            manifest: manifest.clone(),
            width: f.map.width(),
            height: f.map.height(),
            num_classes: batch.dims().classes,
            samples_used: f.samples_used,
            empty_samples: f.empty_samples.clone(),
            instance_count: f.instance_count(batch.catalog()),
            segment_count: table.segments().len(),
            void_pixels: f.map.void_count(),
            panoptic: Path::new("panoptic").join(format!("{id}.png")),
            uncertainty: Path::new("uncertainty").join(format!("{id}.pftn")),
            heatmap: Path::new("heatmap").join(format!("{id}.png")),
        });
    }
    let report = FuseReport {
        method: opts.method,
        measure: if opts.method == Method::Baseline {
            Measure::SoftmaxEntropy
        } else {
            opts.measure
        },
        options: opts,
        images,
    };
    guard.write(&out.join(REPORT), to_json(&report)?)?;
    guard.commit();
    Ok(report)
}

/// Prediction directory: `dir/panoptic` when `dir` is a fuse output.
fn prediction_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("panoptic");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn load_catalog(path: &Path) -> anyhow::Result<ClassCatalog> {
    read_json(path)
}

fn paired_png(dir: &Path, id: &str) -> anyhow::Result<PanopticMap> {
    let p = dir.join(format!("{id}.png"));
    require_file(&p)?;
    Ok(read_panoptic_png(&p)?)
}

/// Panoptic quality of every ground-truth PNG against the prediction PNG of
/// the same name.
pub fn cmd_eval(
    cfg: &Config,
    pred: &Path,
    gt: &Path,
    catalog: &Path,
    out: &Path,
) -> anyhow::Result<panfuse::eval::PQResult> {
    let catalog = load_catalog(catalog)?;
    let gts = list_pngs(gt)?;
    if gts.is_empty() {
        return Err(InputError(format!("no ground-truth PNGs under {}", gt.display())).into());
    }
    let pred_dir = prediction_dir(pred);
    let stats: Vec<anyhow::Result<PQStats>> = pool(cfg)?.install(|| {
        gts.par_iter()
            .map(|g| {
                let id = g.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let p = paired_png(&pred_dir, id)?;
                let g = read_panoptic_png(g)?;
                match_segments(&p, &g).with_context(|| format!("evaluating {id}"))
            })
            .collect()
    });
    let mut total = PQStats::default();
    for s in stats {
        total.merge(&s?);
    }
    let result = pq(&total, &catalog);

    let mut guard = Outputs::new();
    guard.dir(out)?;
    guard.write(&out.join("pq.csv"), result.to_csv(&catalog))?;
    guard.write(&out.join("pq.json"), to_json(&result)?)?;
    guard.commit();
    Ok(result)
}

struct FusedImage {
    pred: PanopticMap,
    uncertainty: UncertaintyMap,
}

/// Image id, panoptic map (when requested) and uncertainty of one fused image.
type LoadedImage = (String, Option<PanopticMap>, UncertaintyMap);

fn load_fused(dir: &Path, with_maps: bool) -> anyhow::Result<(FuseReport, Vec<LoadedImage>)> {
    let report: FuseReport = read_json(&dir.join(REPORT))?;
    if report.images.is_empty() {
        return Err(InputError(format!("{} lists no images", dir.join(REPORT).display())).into());
    }
    let mut out = Vec::with_capacity(report.images.len());
    for im in &report.images {
        let up = dir.join(&im.uncertainty);
        require_file(&up)?;
        let u = UncertaintyMap::from_tensor(&read_tensor(&up)?, report.measure, im.num_classes)
            .with_context(|| format!("reading {}", up.display()))?;
        let pred = if with_maps {
            let pp = dir.join(&im.panoptic);
            require_file(&pp)?;
            Some(read_panoptic_png(&pp)?)
        } else {
            None
        };
        out.push((im.image_id.clone(), pred, u));
    }
    Ok((report, out))
}

/// Detection rates as the most uncertain ground-truth pixels are removed.
pub fn cmd_sweep(cfg: &Config, fused: &Path, gt: &Path, out: &Path) -> anyhow::Result<panfuse::eval::SweepCurve> {
    let (_, loaded) = load_fused(fused, true)?;
    let mut images = Vec::with_capacity(loaded.len());
    let mut gts = Vec::with_capacity(loaded.len());
    for (id, pred, u) in loaded {
        gts.push(paired_png(gt, &id)?);
        images.push(FusedImage {
            pred: pred.expect("maps requested"),
            uncertainty: u,
        });
    }
    let thresholds = match &cfg.thresholds {
        Some(t) => t.clone(),
        None => {
            let maps: Vec<&UncertaintyMap> = images.iter().map(|i| &i.uncertainty).collect();
            threshold_grid(&maps, cfg.sweep_points, cfg.sweep_max_removal)
        }
    };
    let set: Vec<SweepImage> = images
        .iter()
        .zip(&gts)
        .map(|(i, g)| SweepImage {
            pred: &i.pred,
            gt: g,
            uncertainty: &i.uncertainty,
        })
        .collect();
    let curve = sweep_set(&set, &thresholds)?;

    let mut guard = Outputs::new();
    guard.dir(out)?;
    guard.write(&out.join("sweep.csv"), curve.to_csv())?;
    guard.write(&out.join("sweep.json"), to_json(&curve)?)?;
    guard.commit();
    Ok(curve)
}

/// Histogram of the uncertainty values in a fuse output.
pub fn cmd_hist(cfg: &Config, fused: &Path, out: &Path) -> anyhow::Result<panfuse::uncertainty::EntropyHistogram> {
    let (_, loaded) = load_fused(fused, false)?;
    let maps: Vec<UncertaintyMap> = loaded.into_iter().map(|(_, _, u)| u).collect();
    let hist = bin_entropy(&maps, cfg.hist_bins)?;
    let mut guard = Outputs::new();
    guard.dir(out)?;
    guard.write(&out.join("hist.csv"), hist.to_csv())?;
    guard.commit();
    Ok(hist)
}

/// Writes `cfg.images` synthetic scenes: ground truth, ensembles and the
/// origin of every proposal.
pub fn cmd_synth(cfg: &Config, out: &Path) -> anyhow::Result<Vec<String>> {
    let ids: Vec<String> = (0..cfg.images).map(|i| format!("scene_{i:04}")).collect();
    let generated: Vec<_> = pool(cfg)?.install(|| {
        (0..cfg.images)
            .into_par_iter()
            .map(|i| {
                let offset = cfg.seed.wrapping_add(i as u64);
                let mut spec = cfg.scene.clone();
                spec.seed = spec.seed.wrapping_add(offset);
                let mut jitter = cfg.jitter;
                jitter.seed = jitter.seed.wrapping_add(offset);
                let scene = gen_scene(&spec)?;
                let ens = gen_ensemble(&scene, cfg.layout, jitter)?;
                Ok::<_, anyhow::Error>((scene, ens))
            })
            .collect::<Vec<_>>()
    });

    let mut guard = Outputs::new();
    guard.dir(out)?;
    let gt_dir = guard.dir(&out.join("gt"))?;
    let ens_root = guard.dir(&out.join("ensemble"))?;
    let mut catalog_written = false;
    for (id, r) in ids.iter().zip(generated) {
        let (scene, ens) = r?;
        if !catalog_written {
            guard.write(&out.join("catalog.json"), to_json(&scene.catalog)?)?;
            catalog_written = true;
        }
        let png = gt_dir.join(format!("{id}.png"));
        guard.extend([png.clone(), panfuse::store::sidecar_path(&png)]);
        write_panoptic_png(&scene.gt, &SegmentTable::from_map(&scene.gt), &png)?;

        let dir = guard.dir(&ens_root.join(id))?;
        guard.extend(["logits.pftn", "masks.pftn", "catalog.json", "manifest.json"].map(|f| dir.join(f)));
        write_ensemble(&ens.batch, id, &dir)?;
        guard.write(&dir.join("origins.json"), to_json(&ens.origins)?)?;
    }
    guard.commit();
    Ok(ids)
}

/// Gaussian then shot noise on an 8-bit image, per channel.
pub fn cmd_corrupt(cfg: &Config, input: &Path, output: &Path) -> anyhow::Result<()> {
    require_file(input)?;
    let params = CorruptionParams::for_severity(cfg.severity)?;
    let img = image::open(input)
        .map_err(|e| InputError(format!("cannot decode {}: {e}", input.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let pixels: Vec<f32> = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    let noisy = corrupt_image(&pixels, params, cfg.seed);
    let bytes: Vec<u8> = noisy
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let out = image::RgbImage::from_raw(w, h, bytes).context("corrupted buffer has the wrong size")?;

    let mut guard = Outputs::new();
    if let Some(parent) = output.parent() {
        guard.dir(parent)?;
    }
    guard.track(output);
    out.save_with_format(output, image::ImageFormat::Png)
        .with_context(|| format!("cannot write {}", output.display()))?;
    guard.commit();
    Ok(())
}

/// Seconds per image for each method and sample count.
pub fn cmd_bench(cfg: &Config, inputs: &[PathBuf], out: Option<&Path>) -> anyhow::Result<panfuse::bench::BenchReport> {
    let batches: Vec<EnsembleBatch> = load_all(cfg, inputs)?.into_iter().map(|(_, _, b)| b).collect();
    let bench = BenchConfig {
        methods: cfg.bench_methods.clone(),
        sample_counts: cfg.bench_samples.clone(),
        repeats: cfg.bench_repeats,
        options: cfg.pipeline(),
    };
    let report = pool(cfg)?.install(|| run_bench(&batches, &bench))?;
    if let Some(out) = out {
        let mut guard = Outputs::new();
        if let Some(parent) = out.parent() {
            guard.dir(parent)?;
        }
        guard.write(out, report.to_csv())?;
        guard.commit();
    }
    Ok(report)
}
