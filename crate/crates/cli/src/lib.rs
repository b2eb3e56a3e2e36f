//! The `slotvid` command line: flag parsing, resolution into a [`RunConfig`],
//! and execution of each subcommand.

pub mod config;
pub mod visualize;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use slotvid_core::baselines::{bbox_copy, kmeans_pixels, KMeansConfig, KMeansFeatures};
use slotvid_core::checkpoint::Checkpoint;
use slotvid_core::evaluate::{evaluate_model, predict_with_targets, score};
use slotvid_core::metrics::{mask_threshold_filter, scaled_mask_threshold, EvalProtocol, Matching, MetricReport};
use slotvid_core::model::{InitMode, ModelConfig, Variant};
use slotvid_core::scenegen::{generate_dataset, load_dataset, write_dataset, Dataset, DatasetConfig, Manifest, Regime, SceneConfig, Split, VideoSample};
use slotvid_core::targets::{DepthSource, TargetSelection};
use slotvid_core::train::{Trainer, TrainConfig, LOG_HEADER};

pub use config::{BaselineMethod, BaselineRun, EvalRun, GenerateRun, ModelSource, RunConfig, TrainRun, VisualizeRun, RESOLVED_CONFIG};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Why a command did not complete.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameter values; nothing was executed.
    Usage(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slotvid", version, about = "Synthetic multi-object videos and slot-based video models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a procedural video dataset.
    Generate(GenerateArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Score a trained checkpoint on held-out videos.
    Eval(EvalArgs),
    /// Score a reference method (box copying or pixel k-means).
    Baseline(BaselineArgs),
    /// Render frame grids with depth and segmentations as PNG.
    Visualize(VisualizeArgs),
    /// Execute a resolved_config.json written by an earlier run.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    /// Static camera, all objects moving.
    C,
    /// Static camera, mostly resting objects.
    D,
    /// Moving camera, mostly resting objects.
    E,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::C => Regime::StaticCamera,
            RegimeArg::D => Regime::MixedStatic,
            RegimeArg::E => Regime::MovingCamera,
        }
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad resolution {s:?}, expected HxW or N"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "c")]
    pub regime: RegimeArg,
    #[arg(long, default_value_t = 100)]
    pub videos: usize,
    /// Held-out videos; a tenth of --videos by default.
    #[arg(long)]
    pub val_videos: Option<usize>,
    /// HxW, or N for square frames.
    #[arg(long, default_value = "64x64", value_parser = parse_resolution)]
    pub resolution: (usize, usize),
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 2)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 6)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sparse_density: f64,
    /// Noise on stored sparse depth samples, world units.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Full-width network.
    Desk,
    /// Narrow network without the encoder transformer, for quick checks.
    Smoke,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Full,
    Supervised,
    Propagation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DepthSourceArg {
    Dense,
    Sparse,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    /// Slot count; by default the preset's, raised to one more than the
    /// dataset's object limit.
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Frames per training sub-sequence.
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// depth, flow or depth+flow.
    #[arg(long, default_value = "depth", value_parser = parse_targets)]
    pub targets: TargetSelection,
    #[arg(long, value_enum, default_value = "dense")]
    pub depth_source: DepthSourceArg,
    /// Gaussian noise on sparse depth targets, world units.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Drop the transformer layers after the CNN encoder.
    #[arg(long)]
    pub no_transformer: bool,
    /// Train on full frames instead of random crops.
    #[arg(long)]
    pub no_augment: bool,
    /// Initialize slots from first-frame boxes (default).
    #[arg(long, conflicts_with = "unconditional")]
    pub conditional: bool,
    /// Initialize slots from learned vectors.
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by a run with the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn parse_targets(s: &str) -> Result<TargetSelection, String> {
    s.parse().map_err(|e: slotvid_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatchingArg {
    Ordered,
    Hungarian,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    /// Leading frames of each video to unroll and score; all by default.
    #[arg(long)]
    pub frames: Option<usize>,
    /// First scored frame; frame 0 carries the conditioning signal.
    #[arg(long, default_value_t = 1)]
    pub start_frame: usize,
    #[arg(long, value_enum, default_value = "ordered")]
    pub matching: MatchingArg,
    /// Compute segment centroids only over pixels with sparse depth.
    #[arg(long)]
    pub sparse_centroid: bool,
}

impl ProtocolArgs {
    fn protocol(&self) -> EvalProtocol {
        EvalProtocol {
            start_frame: self.start_frame,
            matching: match self.matching {
                MatchingArg::Ordered => Matching::Ordered,
                MatchingArg::Hungarian => Matching::Hungarian,
            },
            sparse_centroid: self.sparse_centroid,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Training output directory; its resolved_config.json describes the model.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint to load; the run's latest by default.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    BboxCopy,
    Kmeans,
}

fn parse_features(s: &str) -> Result<KMeansFeatures, String> {
    match s {
        "depth" => Ok(KMeansFeatures::Depth),
        "flow" => Ok(KMeansFeatures::Flow),
        "depth+flow" | "flow+depth" => Ok(KMeansFeatures::DepthFlow),
        _ => Err(format!("unknown features {s:?} (depth, flow, depth+flow)")),
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// k-means pixel features: depth, flow or depth+flow.
    #[arg(long, default_value = "depth+flow", value_parser = parse_features)]
    pub features: KMeansFeatures,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Video names to render; the first held-out video by default.
    #[arg(long = "video")]
    pub videos: Vec<String>,
    /// Overlay predictions of a trained model.
    #[command(flatten)]
    pub model: ModelArgs,
    /// Leading frames to render; all by default.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Hide predicted segments averaging more than 1300 pixels per frame at
    /// 128×192 (threshold scaled to the frame size).
    #[arg(long)]
    pub filter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub config: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The narrow network used for smoke runs: 4 slots of width 32, 8-channel
/// encoder and decoder, no encoder transformer.
pub fn smoke_model(height: usize, width: usize) -> ModelConfig {
    let mut c = ModelConfig {
        height,
        width,
        slots: 4,
        slot_dim: 32,
        readout_hidden: 64,
        init_hidden: 64,
        ..ModelConfig::default()
    };
    c.encoder.channels = 8;
    c.encoder.groups = 4;
    c.encoder.transformer_layers = 0;
    c.encoder.mlp_hidden = 64;
    c.corrector.qkv = 32;
    c.corrector.mlp_hidden = 64;
    c.predictor.qkv = 32;
    c.predictor.mlp_hidden = 64;
    c.decoder.channels = 8;
    c.decoder.stages = 2;
    c.decoder.grid_h = height / 4;
    c.decoder.grid_w = width / 4;
    c
}

pub fn desk_model(height: usize, width: usize) -> ModelConfig {
    let mut c = ModelConfig {
        height,
        width,
        ..ModelConfig::default()
    };
    c.decoder.grid_h = height >> c.decoder.stages;
    c.decoder.grid_w = width >> c.decoder.stages;
    c
}

fn read_manifest(dir: &Path) -> anyhow::Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Manifest::from_json(&text)?)
}

fn read_run_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// The last `step_NNNNNN.svck` in `dir/checkpoints`.
pub fn latest_checkpoint(run: &Path) -> anyhow::Result<PathBuf> {
    let dir = run.join("checkpoints");
    let mut found: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svck"))
        .collect();
    found.sort();
    found.pop().ok_or_else(|| anyhow!("no checkpoints in {}", dir.display()))
}

fn model_source(args: &ModelArgs) -> Result<Option<ModelSource>, Failure> {
    let run = match (&args.run, &args.checkpoint) {
        (None, None) => return Ok(None),
        (Some(run), _) => run.clone(),
        // checkpoints live in <run>/checkpoints/
        (None, Some(ck)) => ck
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| Failure::Usage(format!("cannot locate the run of {}", ck.display())))?,
    };
    let RunConfig::Train(train) = read_run_config(&run.join(RESOLVED_CONFIG))? else {
        return Err(Failure::Usage(format!("{} is not a training run", run.display())));
    };
    let checkpoint = match &args.checkpoint {
        Some(ck) => ck.clone(),
        None => latest_checkpoint(&run)?,
    };
    Ok(Some(ModelSource {
        checkpoint,
        model: train.model,
        targets: train.train.targets,
    }))
}

fn eval_frames(requested: Option<usize>, manifest: &Manifest) -> Result<usize, Failure> {
    let t = manifest.config.scene.frames;
    match requested {
        Some(n) if n > t => Err(Failure::Usage(format!("--frames {n} exceeds the {t}-frame videos"))),
        Some(n) => Ok(n),
        None => Ok(t),
    }
}

/// Turns parsed flags into a complete parameter record.
pub fn resolve(command: Command) -> Result<RunConfig, Failure> {
    let config = match command {
        Command::Generate(a) => {
            let scene = SceneConfig {
                regime: a.regime.into(),
                height: a.resolution.0,
                width: a.resolution.1,
                frames: a.frames,
                min_objects: a.min_objects,
                max_objects: a.max_objects,
                sparse_density: a.sparse_density,
                noise_sigma: a.noise_sigma,
            };
            let mut dataset = DatasetConfig::new(scene, a.videos, a.seed);
            if let Some(v) = a.val_videos {
                dataset.val_videos = v;
            }
            RunConfig::Generate(GenerateRun { out: a.out, dataset })
        }
        Command::Train(a) => {
            let manifest = read_manifest(&a.data)?;
            let (h, w) = (manifest.config.scene.height, manifest.config.scene.width);
            let mut model = match a.preset {
                Preset::Desk => desk_model(h, w),
                Preset::Smoke => smoke_model(h, w),
            };
            model.variant = match a.variant {
                VariantArg::Full => Variant::Full,
                VariantArg::Supervised => Variant::Supervised,
                VariantArg::Propagation => Variant::Propagation,
            };
            // one slot per object plus one for the background
            model.slots = a.slots.unwrap_or(model.slots.max(manifest.config.scene.max_objects + 1));
            if a.unconditional {
                model.init = InitMode::Learned;
            }
            if a.no_transformer {
                model.encoder.transformer_layers = 0;
            }
            model.target_channels = a.targets.channels();
            let d = TrainConfig::default();
            let total_steps = a.steps.unwrap_or(d.total_steps);
            let train = TrainConfig {
                total_steps,
                warmup_steps: a.warmup.unwrap_or(d.warmup_steps.min(total_steps / 20)),
                peak_lr: a.lr.unwrap_or(d.peak_lr),
                batch_size: a.batch.unwrap_or(d.batch_size),
                clip_norm: a.clip_norm.unwrap_or(d.clip_norm),
                subseq_len: a.seq_len.unwrap_or(d.subseq_len.min(manifest.config.scene.frames)),
                targets: a.targets,
                depth_source: match a.depth_source {
                    DepthSourceArg::Dense => DepthSource::Dense,
                    DepthSourceArg::Sparse => DepthSource::Sparse,
                },
                seed: a.seed,
                checkpoint_every: a.checkpoint_every.unwrap_or(d.checkpoint_every),
                augment: !a.no_augment,
                noise_sigma: a.noise_sigma,
                ..d
            };
            RunConfig::Train(TrainRun {
                data: a.data,
                out: a.out,
                model,
                train,
                resume: a.resume,
            })
        }
        Command::Eval(a) => {
            let manifest = read_manifest(&a.data)?;
            let source = model_source(&a.model)?.ok_or_else(|| Failure::Usage("eval needs --run or --checkpoint".into()))?;
            RunConfig::Eval(EvalRun {
                eval_frames: eval_frames(a.protocol.frames, &manifest)?,
                data: a.data,
                out: a.out,
                source,
                split: a.protocol.split.into(),
                protocol: a.protocol.protocol(),
            })
        }
        Command::Baseline(a) => {
            let manifest = read_manifest(&a.data)?;
            let method = match a.method {
                MethodArg::BboxCopy => BaselineMethod::BboxCopy,
                MethodArg::Kmeans => BaselineMethod::Kmeans(KMeansConfig {
                    features: a.features,
                    max_iters: a.max_iters,
                }),
            };
            RunConfig::Baseline(BaselineRun {
                eval_frames: eval_frames(a.protocol.frames, &manifest)?,
                data: a.data,
                out: a.out,
                method,
                split: a.protocol.split.into(),
                protocol: a.protocol.protocol(),
            })
        }
        Command::Visualize(a) => {
            let manifest = read_manifest(&a.data)?;
            let mut videos = a.videos;
            if videos.is_empty() {
                let first = manifest
                    .videos
                    .iter()
                    .find(|v| v.split == Split::Val)
                    .or(manifest.videos.first())
                    .ok_or_else(|| anyhow!("dataset has no videos"))?;
                videos.push(first.name.clone());
            }
            RunConfig::Visualize(VisualizeRun {
                frames: eval_frames(a.frames, &manifest)?,
                source: model_source(&a.model)?,
                data: a.data,
                out: a.out,
                videos,
                filter: a.filter,
            })
        }
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.config)
                .with_context(|| format!("reading {}", a.config.display()))
                .map_err(Failure::Runtime)?;
            let mut config = RunConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
            if let Some(out) = a.out {
                config.set_out(out);
            }
            config
        }
    };
    Ok(config)
}

/// Validates `config`, records it in its output directory and executes it.
pub fn run(config: &RunConfig) -> Result<(), Failure> {
    config.validate().map_err(Failure::Usage)?;
    let out = config.out();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(RESOLVED_CONFIG);
    fs::write(&path, config.to_json()).with_context(|| format!("writing {}", path.display()))?;
    execute(config)?;
    Ok(())
}

pub fn execute(config: &RunConfig) -> anyhow::Result<()> {
    match config {
        RunConfig::Generate(r) => generate(r),
        RunConfig::Train(r) => train(r),
        RunConfig::Eval(r) => eval(r),
        RunConfig::Baseline(r) => baseline(r),
        RunConfig::Visualize(r) => render(r),
    }
}

fn generate(r: &GenerateRun) -> anyhow::Result<()> {
    let ds = generate_dataset(&r.dataset)?;
    write_dataset(&ds, &r.out)?;
    println!(
        "wrote {} videos ({} held out) to {}",
        ds.samples.len(),
        r.dataset.val_videos,
        r.out.display()
    );
    Ok(())
}

fn check_resolution(ds: &Dataset, model: &ModelConfig) -> anyhow::Result<()> {
    let s = &ds.manifest.config.scene;
    if model.variant != Variant::Propagation && (s.height, s.width) != (model.height, model.width) {
        bail!(
            "dataset frames are {}×{} but the model expects {}×{}",
            s.height,
            s.width,
            model.height,
            model.width
        );
    }
    Ok(())
}

/// Log lines of the run that wrote `checkpoint`, for steps before `step`.
fn earlier_log(checkpoint: &Path, step: usize) -> anyhow::Result<Vec<String>> {
    let Some(run) = checkpoint.parent().and_then(Path::parent) else {
        return Ok(Vec::new());
    };
    let path = run.join("loss_log.csv");
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let s: usize = line
            .split(',')
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| anyhow!("{}: malformed row {line:?}", path.display()))?;
        if s < step {
            rows.push(line.to_string());
        }
    }
    Ok(rows)
}

fn train(r: &TrainRun) -> anyhow::Result<()> {
    let ds = load_dataset(&r.data)?;
    check_resolution(&ds, &r.model)?;
    let samples: Vec<VideoSample> = ds.split(Split::Train).cloned().collect();
    if samples.is_empty() {
        bail!("{} has no training videos", r.data.display());
    }
    let trainer = Trainer::new(&r.model, &r.train, &samples, ds.manifest.flow_max_magnitude)?;
    let resume = match &r.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            ck.check_config(&r.model)
                .with_context(|| format!("refusing to resume from {}", path.display()))?;
            Some(ck)
        }
        None => None,
    };
    let outcome = trainer.run(Some(&r.out), resume.as_ref())?;
    if let (Some(path), Some(first)) = (&r.resume, outcome.log.first()) {
        let mut lines = vec![LOG_HEADER.to_string()];
        lines.extend(earlier_log(path, first.step)?);
        lines.extend(outcome.log.iter().map(|row| row.csv_line()));
        let log = r.out.join("loss_log.csv");
        fs::write(&log, lines.join("\n") + "\n").with_context(|| format!("writing {}", log.display()))?;
    }
    if let Some(last) = outcome.log.last() {
        println!(
            "step {}: target loss {:.6}, readout loss {:.6}",
            last.step, last.loss_target, last.loss_readout
        );
    }
    if let Some(ck) = outcome.checkpoints.last() {
        println!("checkpoint {}", ck.display());
    }
    Ok(())
}

/// Names and leading `frames` frames of every video in `split`.
fn select(ds: &Dataset, split: Split, frames: usize) -> anyhow::Result<(Vec<String>, Vec<VideoSample>)> {
    let mut names = Vec::new();
    let mut samples = Vec::new();
    for (entry, sample) in ds.manifest.videos.iter().zip(&ds.samples) {
        if entry.split == split {
            names.push(entry.name.clone());
            samples.push(sample.clip(0, frames)?);
        }
    }
    if samples.is_empty() {
        bail!("no {split:?} videos in the dataset");
    }
    Ok((names, samples))
}

fn write_reports(out: &Path, report: &MetricReport) -> anyhow::Result<()> {
    for (name, text) in [("report.csv", report.to_csv()), ("report.json", report.to_json())] {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{}: fg_ari {} miou {} com {} b_recall {} b_miou {} ({} videos)",
        report.method,
        show(report.fg_ari),
        show(report.miou),
        show(report.com),
        show(report.b_recall),
        show(report.b_miou),
        report.videos.len()
    );
    Ok(())
}

fn load_model(source: &ModelSource) -> anyhow::Result<slotvid_core::model::ParamSet<f32>> {
    let ck = Checkpoint::load(&source.checkpoint)?;
    ck.check_config(&source.model)
        .with_context(|| format!("{} does not match its run configuration", source.checkpoint.display()))?;
    Ok(ck.params(&source.model)?)
}

fn method_name(model: &ModelConfig) -> String {
    let variant = match model.variant {
        Variant::Full => "full",
        Variant::Supervised => "supervised",
        Variant::Propagation => "propagation",
    };
    let init = match model.init {
        InitMode::Conditional => "conditional",
        InitMode::Learned => "unconditional",
    };
    format!("{variant}-{init}")
}

fn eval(r: &EvalRun) -> anyhow::Result<()> {
    let ds = load_dataset(&r.data)?;
    check_resolution(&ds, &r.source.model)?;
    let params = load_model(&r.source)?;
    let (names, samples) = select(&ds, r.split, r.eval_frames)?;
    let (_, mut report) = evaluate_model(&r.source.model, &params, &names, &samples, &r.protocol)?;
    report.method = method_name(&r.source.model);
    write_reports(&r.out, &report)
}

fn baseline(r: &BaselineRun) -> anyhow::Result<()> {
    let ds = load_dataset(&r.data)?;
    let (names, samples) = select(&ds, r.split, r.eval_frames)?;
    let predictions = samples
        .par_iter()
        .map(|s| match &r.method {
            BaselineMethod::BboxCopy => Ok(bbox_copy(s.box_frame(0), s.frames, s.height, s.width)),
            BaselineMethod::Kmeans(k) => Ok(kmeans_pixels(s, k)?.0),
        })
        .collect::<slotvid_core::Result<Vec<_>>>()?;
    let report = score(&r.method.label(), &names, &predictions, &samples, &r.protocol)?;
    write_reports(&r.out, &report)
}

fn render(r: &VisualizeRun) -> anyhow::Result<()> {
    use visualize::*;
    let ds = load_dataset(&r.data)?;
    let model = match &r.source {
        Some(source) => {
            check_resolution(&ds, &source.model)?;
            Some((source, load_model(source)?))
        }
        None => None,
    };
    for name in &r.videos {
        let index = ds
            .manifest
            .videos
            .iter()
            .position(|v| &v.name == name)
            .ok_or_else(|| anyhow!("no video named {name:?}"))?;
        let sample = ds.samples[index].clip(0, r.frames)?;
        let t = sample.frames;
        let range = depth_range(&sample, t);
        let mut rows = vec![rgb_row(&sample, t), gt_depth_row(&sample, t, range)];
        let mut masks = vec![label_row(&sample.masks)];
        if let Some((source, params)) = &model {
            let (pred, targets) = predict_with_targets(&source.model, params, &sample)?;
            if let (Some(values), true) = (targets, source.targets.depth) {
                rows.push(predicted_depth_row(&values, source.model.target_channels, range));
            }
            let labels = if r.filter {
                mask_threshold_filter(&pred.masks, t, scaled_mask_threshold(sample.height, sample.width))?
            } else {
                pred.masks
            };
            masks.push(label_row(&labels));
        }
        rows.extend(masks);
        let img = compose(&rows, t, sample.height, sample.width);
        let path = r.out.join(format!("{name}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Applies `SVPP_THREADS` to the global worker pool.
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("SVPP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("SVPP_THREADS must be a positive integer, got {value:?}")))?;
    // a pool built earlier in this process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = configure_threads().and_then(|_| resolve(cli.command)).and_then(|c| run(&c));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
