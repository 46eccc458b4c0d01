//! `mfrnet`: dataset generation, training, filtering, metrics and weight
//! inspection from one binary.

mod config;
mod dataset;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use mfrnet::metrics::format_psnr;
use mfrnet::pipeline::filter_frame_with;
use mfrnet::synthetic::synthetic_frame;
use mfrnet::training::{bank_datasets, train_bank_observed, write_loss_csv};
use mfrnet::video::{read_video, write_video, RawFormat};
use mfrnet::{bd_quality, bd_rate, psnr_luma, select_model, weights, ChromaFormat, Frame, ModelId, RdCurve, RdPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::{Profile, RunConfig, VideoConfig, SEED_DATASET, SEED_SYNTHETIC};

#[derive(Parser)]
#[command(name = "mfrnet", version, about = "Compression-artifact removal with MFRNet")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate degraded/pristine block pairs for the four models.
    MakeDataset(MakeDatasetArgs),
    /// Train the four-model bank on a generated dataset.
    Train(TrainArgs),
    /// Filter a decoded video with the model chosen by QP.
    Filter(FilterArgs),
    /// Luma PSNR between two videos, or BD-rate/BD-quality between RD curves.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Print the configuration, structure and checksum of a weight file.
    InspectWeights(InspectArgs),
}

#[derive(Args, Default)]
struct SeedArgs {
    /// Run seed; every random choice derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Default)]
struct GeometryArgs {
    /// Frame width of raw input.
    #[arg(long)]
    width: Option<usize>,
    /// Frame height of raw input.
    #[arg(long)]
    height: Option<usize>,
    /// Sample bit depth of raw input (8 or 10).
    #[arg(long)]
    bit_depth: Option<u8>,
    /// Chroma format of raw input (420 or 444).
    #[arg(long)]
    chroma: Option<ChromaFormat>,
    /// Expected frame count; the input size must match it exactly.
    #[arg(long)]
    frames: Option<usize>,
}

impl GeometryArgs {
    fn video(&self) -> VideoConfig {
        VideoConfig {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            chroma: self.chroma,
            frames: self.frames,
        }
    }
}

#[derive(Args)]
struct MakeDatasetArgs {
    #[command(flatten)]
    seed: SeedArgs,
    /// Output directory for the block files and manifest.json.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Pairs generated per model.
    #[arg(long)]
    pairs: Option<usize>,
    /// Source clip (repeatable); raw clips take their geometry from the flags below.
    #[arg(long = "source")]
    sources: Vec<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Number of synthetic frames to generate when no source is given.
    #[arg(long)]
    synthetic_frames: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    seed: SeedArgs,
    /// Dataset directory written by make-dataset.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Output directory for model_N.mfrw and loss_model_N.csv.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Network size.
    #[arg(long, value_enum)]
    network: Option<Profile>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Stop each model after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct FilterArgs {
    /// Input video (.y4m, or raw planar YUV).
    #[arg(long)]
    input: PathBuf,
    /// Output video; Y4M when the name ends in .y4m, raw otherwise.
    #[arg(long)]
    output: PathBuf,
    /// Directory holding model_1.mfrw .. model_4.mfrw.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Base QP of the decoded sequence; picks the model.
    #[arg(long)]
    qp: f64,
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Per-frame and mean luma PSNR of a test video against a reference.
    Psnr(PsnrArgs),
    /// BD-rate and BD-quality of test curves against an anchor curve.
    Bd(BdArgs),
}

#[derive(Args)]
struct PsnrArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// CSV report `frame,psnr_y`, ending with a `mean` row.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Args)]
struct BdArgs {
    /// CSV with header `label,rate,quality` and four rows per label.
    #[arg(long)]
    rd: PathBuf,
    /// Label of the anchor curve.
    #[arg(long)]
    anchor: String,
    /// Label of a test curve (repeatable; default: every label).
    #[arg(long = "test")]
    tests: Vec<String>,
    /// CSV report `anchor,test,bd_rate_pct,bd_quality_db`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Weight file to inspect.
    #[arg(long)]
    weights: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting thread pool")?;
    }
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::MakeDataset(args) => make_dataset(&mut cfg, args),
        Command::Train(args) => train(&mut cfg, args),
        Command::Filter(args) => filter(&cfg, args),
        Command::Metrics(MetricsCommand::Psnr(args)) => psnr(&cfg, args),
        Command::Metrics(MetricsCommand::Bd(args)) => bd(args),
        Command::InspectWeights(args) => inspect(args),
    }
}

fn read_clip(path: &Path, video: &VideoConfig) -> Result<Vec<Frame>> {
    let fmt = video.raw_format()?;
    let (frames, _) = read_video(path, fmt.as_ref()).with_context(|| format!("reading {}", path.display()))?;
    if let Some(n) = video.frames {
        ensure!(
            frames.len() == n,
            "{}: expected {n} frames, found {}",
            path.display(),
            frames.len()
        );
    }
    Ok(frames)
}

fn make_dataset(cfg: &mut RunConfig, args: MakeDatasetArgs) -> Result<()> {
    if let Some(s) = args.seed.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dataset_dir {
        cfg.dataset.dir = d;
    }
    if let Some(n) = args.pairs {
        cfg.dataset.pairs_per_model = n;
    }
    if let Some(n) = args.synthetic_frames {
        cfg.dataset.synthetic.frames = n;
    }
    let flag_video = args.geometry.video();
    for path in args.sources {
        cfg.dataset.sources.push(config::SourceConfig {
            path,
            width: flag_video.width,
            height: flag_video.height,
            bit_depth: flag_video.bit_depth,
            chroma: flag_video.chroma,
            frames: flag_video.frames,
        });
    }
    cfg.validate()?;

    let mut frames = Vec::new();
    let mut sources = Vec::new();
    if cfg.dataset.sources.is_empty() {
        let syn = &cfg.dataset.synthetic;
        let base = cfg.stream_seed(SEED_SYNTHETIC);
        for i in 0..syn.frames {
            let seed = mfrnet::training::derive_seed(base, i as u64);
            frames.push(synthetic_frame(syn.width, syn.height, 8, ChromaFormat::Yuv420, seed)?);
            sources.push(dataset::SourceRecord {
                name: format!("synthetic:{i}"),
                frames: 1,
            });
        }
        eprintln!("generated {} synthetic {}x{} frames", syn.frames, syn.width, syn.height);
    } else {
        for src in &cfg.dataset.sources {
            let mut clip = read_clip(&src.path, &cfg.video.merged(&src.video()))?;
            if let Some(n) = src.frames {
                clip.truncate(n);
            }
            eprintln!("read {} frames from {}", clip.len(), src.path.display());
            sources.push(dataset::SourceRecord {
                name: src.path.display().to_string(),
                frames: clip.len(),
            });
            frames.extend(clip);
        }
    }

    let count = cfg.dataset.pairs_per_model;
    let seed = cfg.stream_seed(SEED_DATASET);
    let sets = if count == 0 {
        cfg.strengths.map(|s| mfrnet::PairSet {
            spec: mfrnet::degrade::DegradeSpec { strength: s },
            seed: 0,
            pairs: Vec::new(),
        })
    } else {
        bank_datasets(&frames, &cfg.strengths, count, seed)?
    };
    let dir = &cfg.dataset.dir;
    dataset::write(dir, cfg.seed, sources, &sets)?;

    let (manifest, loaded) = dataset::read(dir).context("validating written dataset")?;
    for (rec, set) in manifest.sets.iter().zip(&loaded) {
        ensure!(set.len() == count, "{} holds {} pairs, {count} requested", rec.model, set.len());
    }
    eprintln!(
        "wrote {} pairs per model to {}",
        count,
        dataset::manifest_path(dir).display()
    );
    Ok(())
}

fn weight_file(dir: &Path, id: ModelId) -> PathBuf {
    dir.join(format!("model_{}.mfrw", id.number()))
}

fn loss_file(dir: &Path, id: ModelId) -> PathBuf {
    dir.join(format!("loss_model_{}.csv", id.number()))
}

fn train(cfg: &mut RunConfig, args: TrainArgs) -> Result<()> {
    if let Some(s) = args.seed.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dataset_dir {
        cfg.dataset.dir = d;
    }
    if let Some(d) = args.weights_dir {
        cfg.weights_dir = d;
    }
    if let Some(p) = args.network {
        cfg.network = config::NetworkChoice::Profile(p);
    }
    if let Some(e) = args.epochs {
        cfg.training.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.training.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if args.max_steps.is_some() {
        cfg.training.max_steps = args.max_steps;
    }
    cfg.validate()?;

    let (_, datasets) = dataset::read(&cfg.dataset.dir)?;
    let net = cfg.network.config();
    eprintln!(
        "training 4 models ({} parameters each) on {} pairs per model",
        net.param_count(),
        datasets[0].len()
    );
    let training = cfg.seeded_training();
    let (bank, reports) = train_bank_observed(net, &datasets, &training, &mut |id, r| {
        eprintln!("{id} epoch {} lr {:e} mean_l1 {:.6}", r.epoch, r.lr, r.mean_l1);
    })?;

    let dir = &cfg.weights_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for ((id, model), report) in ModelId::ALL.into_iter().zip(bank.models()).zip(&reports) {
        let path = weight_file(dir, id);
        weights::save(model, &path)?;
        let back = weights::load(&path).with_context(|| format!("validating {}", path.display()))?;
        ensure!(&back == model, "{} did not round-trip", path.display());
        let csv_path = loss_file(dir, id);
        let file = std::fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        write_loss_csv(std::io::BufWriter::new(file), &report.history)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        eprintln!("{id}: {} steps, wrote {}", report.steps, path.display());
    }
    Ok(())
}

fn filter(cfg: &RunConfig, args: FilterArgs) -> Result<()> {
    let id = select_model(args.qp);
    eprintln!("QP {} -> {id} selected", args.qp);
    let dir = args.weights_dir.as_deref().unwrap_or(&cfg.weights_dir);
    let path = weight_file(dir, id);
    let model = weights::load(&path).with_context(|| format!("loading {}", path.display()))?;

    let video = cfg.video.merged(&args.geometry.video());
    let fmt = video.raw_format()?;
    let (frames, header) =
        read_video(&args.input, fmt.as_ref()).with_context(|| format!("reading {}", args.input.display()))?;
    if let Some(n) = video.frames {
        ensure!(frames.len() == n, "expected {n} frames, found {}", frames.len());
    }
    ensure!(!frames.is_empty(), "{} holds no frames", args.input.display());

    let filtered: Vec<Frame> = frames
        .par_iter()
        .map(|f| filter_frame_with(f, &model))
        .collect::<mfrnet::Result<_>>()?;
    write_video(&args.output, &filtered, header.as_ref())
        .with_context(|| format!("writing {}", args.output.display()))?;

    let expected = filtered.len() * RawFormat::of(&filtered[0]).frame_bytes();
    let written = std::fs::metadata(&args.output)?.len() as usize;
    if !mfrnet::video::is_y4m(&args.output) {
        ensure!(written == expected, "wrote {written} bytes, expected {expected}");
    }
    eprintln!("filtered {} frames into {}", filtered.len(), args.output.display());
    Ok(())
}

fn psnr(cfg: &RunConfig, args: PsnrArgs) -> Result<()> {
    let video = cfg.video.merged(&args.geometry.video());
    let reference = read_clip(&args.reference, &video)?;
    let test = read_clip(&args.test, &video)?;
    ensure!(
        reference.len() == test.len(),
        "frame counts differ: {} vs {}",
        reference.len(),
        test.len()
    );
    ensure!(!reference.is_empty(), "no frames to compare");
    let values: Vec<f64> = reference
        .iter()
        .zip(&test)
        .enumerate()
        .map(|(i, (r, t))| psnr_luma(r, t).with_context(|| format!("frame {i}")))
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;

    let mut out = csv::Writer::from_path(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    out.write_record(["frame", "psnr_y"])?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([i.to_string(), format_psnr(*v)])?;
    }
    out.write_record(["mean".to_string(), format_psnr(mean)])?;
    out.flush()?;
    eprintln!("mean luma PSNR {} dB over {} frames", format_psnr(mean), values.len());
    Ok(())
}

#[derive(Deserialize)]
struct RdRow {
    label: String,
    rate: f64,
    quality: f64,
}

#[derive(Serialize)]
struct BdRow<'a> {
    anchor: &'a str,
    test: &'a str,
    bd_rate_pct: String,
    bd_quality_db: String,
}

fn bd(args: BdArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.rd).with_context(|| format!("opening {}", args.rd.display()))?;
    let mut order = Vec::new();
    let mut points: BTreeMap<String, Vec<RdPoint>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: RdRow = row.with_context(|| format!("parsing {}", args.rd.display()))?;
        if !points.contains_key(&row.label) {
            order.push(row.label.clone());
        }
        points.entry(row.label).or_default().push(RdPoint {
            rate: row.rate,
            quality: row.quality,
        });
    }
    let curve = |label: &str| -> Result<RdCurve> {
        let pts = points
            .get(label)
            .with_context(|| format!("label {label:?} not found in {}", args.rd.display()))?;
        RdCurve::new(pts).with_context(|| format!("curve {label:?}"))
    };
    let anchor = curve(&args.anchor)?;
    let tests = if args.tests.is_empty() { order } else { args.tests };
    if tests.is_empty() {
        bail!("{} holds no curves", args.rd.display());
    }
    let mut out = csv::Writer::from_path(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    for label in &tests {
        let test = curve(label)?;
        let rate = bd_rate(&anchor, &test)?;
        let quality = bd_quality(&anchor, &test)?;
        eprintln!("{label} vs {}: BD-rate {rate:.4}%, BD-quality {quality:.4} dB", args.anchor);
        out.serialize(BdRow {
            anchor: &args.anchor,
            test: label,
            bd_rate_pct: format!("{rate:.4}"),
            bd_quality_db: format!("{quality:.4}"),
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LayerReport {
    name: String,
    shape: [usize; 4],
    mean_abs: f64,
    max_abs: f64,
}

#[derive(Serialize)]
struct InspectReport {
    file: String,
    bytes: usize,
    crc32: String,
    config: mfrnet::NetworkConfig,
    parameters: usize,
    mfrbs: usize,
    frbs: usize,
    cascade_edges: usize,
    side_inputs: usize,
    side_outputs: usize,
    layers: Vec<LayerReport>,
}

fn inspect(args: InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&args.weights).with_context(|| format!("reading {}", args.weights.display()))?;
    let model = weights::from_bytes(&bytes).with_context(|| format!("loading {}", args.weights.display()))?;
    let s = model.structure();
    let layers = model
        .specs()
        .iter()
        .zip(model.layers())
        .map(|(spec, p)| {
            let n = p.param_count().max(1) as f64;
            LayerReport {
                name: spec.name.clone(),
                shape: p.weight.shape(),
                mean_abs: p.values().map(|v| f64::from(v.abs())).sum::<f64>() / n,
                max_abs: p.values().fold(0.0, |m, v| m.max(f64::from(v.abs()))),
            }
        })
        .collect();
    let report = InspectReport {
        file: args.weights.display().to_string(),
        bytes: bytes.len(),
        crc32: format!("{:08x}", weights::stored_checksum(&bytes).unwrap_or(0)),
        config: *model.config(),
        parameters: model.param_count(),
        mfrbs: s.mfrbs,
        frbs: s.frbs,
        cascade_edges: s.cascade_edges,
        side_inputs: s.side_inputs,
        side_outputs: s.side_outputs,
        layers,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match args.output {
        Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}
