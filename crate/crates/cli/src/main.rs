//! `panfuse` command-line front end.

mod commands;
mod config;
mod errors;
mod files;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use panfuse::per_sample::UpscaleMode;
use panfuse::pipeline::Method;
use panfuse::uncertainty::Measure;

use config::Config;
use errors::{exit_code, ConfigError, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "panfuse",
    version,
    about = "Fuse ensemble samples of panoptic networks into one segmentation with per-pixel uncertainty"
)]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(flatten)]
    params: Params,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Overrides for configuration values.
#[derive(Debug, Default, Args)]
struct Params {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Fusion method: ours, hungarian or baseline.
    #[arg(long, global = true, value_parser = parse_serde::<Method>)]
    method: Option<Method>,
    /// Uncertainty measure: predictive_entropy, mutual_information or softmax_entropy.
    #[arg(long, global = true, value_parser = parse_serde::<Measure>)]
    measure: Option<Measure>,
    /// Mask upscaling: bilinear or nearest.
    #[arg(long, global = true, value_parser = parse_serde::<UpscaleMode>)]
    upscale: Option<UpscaleMode>,
    /// IoU a proposal needs to join an existing cluster.
    #[arg(long, global = true)]
    iou_threshold: Option<f64>,
    /// Fraction of samples a cluster needs to be kept.
    #[arg(long, global = true)]
    min_member_fraction: Option<f64>,
    /// Disable pruning of the fused map.
    #[arg(long, global = true)]
    no_prune: bool,
    /// Pixels whose mean class probability falls below this become void.
    #[arg(long, global = true)]
    min_prob: Option<f64>,
    /// Segments smaller than this are removed.
    #[arg(long, global = true)]
    min_pixels: Option<usize>,
    /// Disable pruning of the baseline map.
    #[arg(long, global = true)]
    no_baseline_prune: bool,
    /// Baseline proposals below this score are dropped.
    #[arg(long, global = true)]
    baseline_min_score: Option<f64>,
    /// Baseline segments smaller than this are removed.
    #[arg(long, global = true)]
    baseline_min_pixels: Option<usize>,
    /// Use only the first this many samples of each ensemble.
    #[arg(long, global = true)]
    max_samples: Option<usize>,
    /// Pick the assignment reference sample at random with this seed.
    #[arg(long, global = true)]
    reference_seed: Option<u64>,
    /// Comma-separated sweep thresholds (default: quantile grid).
    #[arg(long, global = true, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Points in the default sweep grid.
    #[arg(long, global = true)]
    sweep_points: Option<usize>,
    /// Largest pixel fraction the default sweep grid removes.
    #[arg(long, global = true)]
    sweep_max_removal: Option<f64>,
    /// Histogram bins.
    #[arg(long, global = true)]
    hist_bins: Option<usize>,
    /// Number of synthetic images.
    #[arg(long, global = true)]
    images: Option<usize>,
    /// Samples per synthetic ensemble.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Proposals per synthetic sample.
    #[arg(long, global = true)]
    proposals: Option<usize>,
    /// Synthetic instances per scene.
    #[arg(long, global = true)]
    instances: Option<usize>,
    /// Largest per-sample translation of a synthetic instance, in pixels.
    #[arg(long, global = true)]
    translate: Option<usize>,
    /// Probability that a sample drops a synthetic instance.
    #[arg(long, global = true)]
    dropout: Option<f64>,
    /// Corruption severity, 1 to 3.
    #[arg(long, global = true)]
    severity: Option<u8>,
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated methods to benchmark.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_serde::<Method>)]
    bench_methods: Option<Vec<Method>>,
    /// Comma-separated sample counts to benchmark.
    #[arg(long, global = true, value_delimiter = ',')]
    bench_samples: Option<Vec<usize>>,
    /// Timed passes over the input set.
    #[arg(long, global = true)]
    bench_repeats: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse ensembles into panoptic maps, uncertainty tensors and heatmaps.
    Fuse {
        /// Manifest files or directories searched for manifest.json.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Panoptic quality against ground truth.
    Eval {
        /// Prediction PNG directory or fuse output directory.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth PNG directory.
        #[arg(long)]
        gt: PathBuf,
        /// Class catalog JSON.
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection rates while removing the most uncertain pixels.
    Sweep {
        /// Fuse output directory.
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of uncertainty values.
    Hist {
        /// Fuse output directory.
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic scenes and ensembles.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Add Gaussian and shot noise to an image.
    Corrupt { input: PathBuf, output: PathBuf },
    /// Time each method over a set of ensembles.
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV report path (printed to stdout as well).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value {s:?}"))
}

impl Params {
    fn apply(&self, c: &mut Config) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() {
                    $target = v;
                })*
            };
        }
        set! {
            method => c.method,
            measure => c.measure,
            upscale => c.upscale,
            iou_threshold => c.iou_threshold,
            min_member_fraction => c.min_member_fraction,
            min_prob => c.min_prob,
            min_pixels => c.min_pixels,
            baseline_min_score => c.baseline_min_score,
            baseline_min_pixels => c.baseline_min_pixels,
            sweep_points => c.sweep_points,
            sweep_max_removal => c.sweep_max_removal,
            hist_bins => c.hist_bins,
            images => c.images,
            samples => c.layout.samples,
            proposals => c.layout.proposals,
            instances => c.scene.instances,
            translate => c.jitter.translate,
            dropout => c.jitter.dropout,
            severity => c.severity,
            seed => c.seed,
            bench_methods => c.bench_methods,
            bench_samples => c.bench_samples,
            bench_repeats => c.bench_repeats,
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.max_samples.is_some() {
            c.max_samples = self.max_samples;
        }
        if self.reference_seed.is_some() {
            c.reference_seed = self.reference_seed;
        }
        if self.thresholds.is_some() {
            c.thresholds = self.thresholds.clone();
        }
        if self.no_prune {
            c.prune = false;
        }
        if self.no_baseline_prune {
            c.baseline_prune = false;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    cli.params.apply(&mut cfg);
    cfg.validate()?;
    if cli.print_config {
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ConfigError("no subcommand given; see --help".into()).into());
    };
    match command {
        Command::Fuse { inputs, out } => {
            let r = commands::cmd_fuse(&cfg, &inputs, &out)?;
            for im in &r.images {
                println!(
                    "{}\tinstances={}\tsegments={}",
                    im.image_id, im.instance_count, im.segment_count
                );
            }
        }
        Command::Eval { pred, gt, catalog, out } => {
            let r = commands::cmd_eval(&cfg, &pred, &gt, &catalog, &out)?;
            println!("PQ {:.4}  SQ {:.4}  RQ {:.4}", r.all.pq, r.all.sq, r.all.rq);
        }
        Command::Sweep { fused, gt, out } => {
            let c = commands::cmd_sweep(&cfg, &fused, &gt, &out)?;
            println!("{} sweep points written to {}", c.points.len(), out.display());
        }
        Command::Hist { fused, out } => {
            let h = commands::cmd_hist(&cfg, &fused, &out)?;
            println!("{} pixels binned, {} without prediction", h.total, h.no_prediction);
        }
        Command::Synth { out } => {
            let ids = commands::cmd_synth(&cfg, &out)?;
            println!("{} scenes written to {}", ids.len(), out.display());
        }
        Command::Corrupt { input, output } => commands::cmd_corrupt(&cfg, &input, &output)?,
        Command::Bench { inputs, out } => {
            let r = commands::cmd_bench(&cfg, &inputs, out.as_deref())?;
            let _ = write!(std::io::stdout(), "{}", r.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
