//! `evact`: generate, slice, render, inspect, train, evaluate, and retrieve
//! over event streams.
//!
//! Exit codes: 0 success, 2 usage/validation problems (including unreadable
//! inputs), 3 runtime failures (write errors, training divergence). Malformed
//! input never panics.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evact_core::crue::{CrueModel, HAND_PROMPT};
use evact_core::error::{EvactError, Result};
use evact_core::event::{
    generate_scene, read_stream, write_stream, EventStream, MotionSegment, ObjectKind, Polarity,
    StreamFormat, SyntheticScene,
};
use evact_core::nn::ParamStore;
use evact_core::rep::{
    afe_slice, render_frames, write_frames, write_pgm, AfeConfig, AfePreset, FrameStack,
    SliceMethod,
};
use evact_core::train::{
    build_dataset, evaluate, metrics_csv, prepare_frames, retrieve_event_to_text, train, Split,
    ToyDataset,
};

use config::Setup;

#[derive(Parser)]
#[command(name = "evact", version, about = "Adaptive event slicing and text-guided toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event stream (EVT1 or CSV by extension).
    Gen(GenArgs),
    /// Adaptively slice a stream; write a leaf manifest and an FRS1 container.
    Slice(SliceArgs),
    /// Slice a stream and export per-frame PGM images.
    Render(RenderArgs),
    /// Print summary statistics of a stream.
    Stats(StatsArgs),
    /// Train the toy model on a generated dataset; write a CKP1 checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a generated dataset split.
    Eval(EvalArgs),
    /// Rank class captions against one event stream (score<TAB>id lines).
    Retrieve(RetrieveArgs),
}

/// Flags every stream-reading subcommand shares.
#[derive(Args)]
struct InputArgs {
    /// Input stream (.evt1 or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Geometry WxH, required for CSV inputs (CSV carries none).
    #[arg(long, value_name = "WxH")]
    csv_geometry: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<EventStream> {
        let geometry = match &self.csv_geometry {
            None => None,
            Some(s) => {
                let (w, h) = s.split_once('x').ok_or_else(|| {
                    EvactError::Validation(format!("geometry must be WxH, got `{s}`"))
                })?;
                let parse = |v: &str| {
                    v.parse::<u16>().map_err(|_| {
                        EvactError::Validation(format!("geometry must be WxH, got `{s}`"))
                    })
                };
                Some((parse(w)?, parse(h)?))
            }
        };
        let format = StreamFormat::from_path(&self.input, geometry)?;
        read_stream(&self.input, format).map_err(|e| match e {
            EvactError::Io(io) => EvactError::Validation(format!(
                "cannot read {}: {io}",
                self.input.display()
            )),
            other => other,
        })
    }
}

/// Slicer flags; an optional preset provides the base values and explicit
/// flags override it field by field.
#[derive(Args)]
struct SliceOpts {
    /// Named hyperparameter preset: paf, hardvs, or seact.
    #[arg(long)]
    preset: Option<String>,
    /// Difference-rate threshold in (0, 2].
    #[arg(long)]
    delta: Option<f64>,
    /// Minimum event count of a producible slice.
    #[arg(long)]
    n_min: Option<usize>,
    /// Recursion depth cap.
    #[arg(long)]
    max_depth: Option<usize>,
}

impl SliceOpts {
    fn config(&self) -> Result<AfeConfig> {
        let base = match &self.preset {
            Some(name) => AfePreset::parse(name)?.config(),
            None => AfeConfig {
                delta: 0.4,
                n_min: 100,
                max_depth: AfeConfig::DEFAULT_MAX_DEPTH,
            },
        };
        AfeConfig::new(
            self.delta.unwrap_or(base.delta),
            self.n_min.unwrap_or(base.n_min),
            self.max_depth.unwrap_or(base.max_depth),
        )
    }
}

#[derive(Args)]
struct GenArgs {
    /// Output path (.evt1 or .csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    width: u16,
    #[arg(long, default_value_t = 32)]
    height: u16,
    /// Comma-separated segment kinds: bar-right, bar-left, texture, square, dot.
    #[arg(long, default_value = "bar-right,texture")]
    kinds: String,
    #[arg(long, default_value_t = 500_000)]
    segment_duration_us: u64,
    /// Foreground events per microsecond.
    #[arg(long, default_value_t = 0.02)]
    rate_per_us: f64,
    /// Uniform background events per microsecond.
    #[arg(long, default_value_t = 0.0)]
    noise_rate_per_us: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    opts: SliceOpts,
    /// Output directory for manifest.jsonl and frames.frs1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    opts: SliceOpts,
    /// Output directory for frame_NNNN.{on,off}.pgm files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    Cr,
    Ue,
    None,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace a component: cr (mean pooling instead of CR fusion),
    /// ue (skip uncertainty), or none.
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    ablate: Ablation,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Checkpoint output path (CKP1).
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV path; defaults to the checkpoint path with .csv.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CKP1 checkpoint written by `evact train`.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Must match the ablation the checkpoint was trained with.
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    ablate: Ablation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// How many captions to print; defaults to all classes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    ablate: Ablation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for anything wrong with the request or its inputs, 3 for failures of
/// the run itself.
fn exit_code(e: &EvactError) -> u8 {
    match e {
        EvactError::Io(_) | EvactError::State(_) | EvactError::TrainingDiverged { .. } => 3,
        _ => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Slice(args) => cmd_slice(args),
        Command::Render(args) => cmd_render(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Retrieve(args) => cmd_retrieve(args),
    }
}

fn parse_kind(name: &str) -> Result<ObjectKind> {
    match name {
        "bar-right" => Ok(ObjectKind::TranslatingBar { leftward: false }),
        "bar-left" => Ok(ObjectKind::TranslatingBar { leftward: true }),
        "texture" => Ok(ObjectKind::StaticTexture),
        "square" => Ok(ObjectKind::ExpandingSquare),
        "dot" => Ok(ObjectKind::OscillatingDot),
        other => Err(EvactError::Validation(format!(
            "unknown segment kind `{other}` (want bar-right, bar-left, texture, square, dot)"
        ))),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let segments = args
        .kinds
        .split(',')
        .map(|k| {
            Ok(MotionSegment {
                duration_us: args.segment_duration_us,
                kind: parse_kind(k.trim())?,
                rate_per_us: args.rate_per_us,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = SyntheticScene {
        width: args.width,
        height: args.height,
        segments,
        noise_rate_per_us: args.noise_rate_per_us,
        seed: args.seed,
    };
    let stream = generate_scene(&scene)?;
    let format = StreamFormat::from_path(&args.out, Some((args.width, args.height)))?;
    write_stream(&stream, &args.out, format)?;
    println!("events={} out={}", stream.len(), args.out.display());
    Ok(())
}

fn sliced(input: &InputArgs, opts: &SliceOpts) -> Result<(EventStream, AfeConfig, FrameStack)> {
    let stream = input.load()?;
    let cfg = opts.config()?;
    let tree = afe_slice(&stream, &cfg)?;
    let frames = render_frames(&stream, &tree.boundaries(&stream), SliceMethod::Afe)?;
    Ok((stream, cfg, frames))
}

fn cmd_slice(args: SliceArgs) -> Result<()> {
    let stream = args.input.load()?;
    let cfg = args.opts.config()?;
    let tree = afe_slice(&stream, &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("manifest.jsonl"), tree.leaf_manifest(&stream))?;
    let frames = render_frames(&stream, &tree.boundaries(&stream), SliceMethod::Afe)?;
    write_frames(&frames, &args.out.join("frames.frs1"))?;
    let (rate, n_min, depth) = tree.reason_tallies();
    println!(
        "leaves={} rate-below-delta={rate} below-n-min={n_min} depth-cap={depth}",
        tree.leaf_count()
    );
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let (_, _, frames) = sliced(&args.input, &args.opts)?;
    std::fs::create_dir_all(&args.out)?;
    for (i, frame) in frames.frames.iter().enumerate() {
        write_pgm(frame, 0, &args.out.join(format!("frame_{i:04}.on.pgm")))?;
        write_pgm(frame, 1, &args.out.join(format!("frame_{i:04}.off.pgm")))?;
    }
    println!("frames={} out={}", frames.len(), args.out.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let stream = args.input.load()?;
    let (on, off) = stream.events().iter().fold((0u64, 0u64), |(on, off), e| {
        match e.polarity {
            Polarity::On => (on + 1, off),
            Polarity::Off => (on, off + 1),
        }
    });
    let duration = stream.duration_us();
    let per_ms = if duration == 0 {
        0.0
    } else {
        stream.len() as f64 / (duration as f64 / 1000.0)
    };
    println!("events={}", stream.len());
    println!("width={}", stream.width());
    println!("height={}", stream.height());
    println!("duration_us={duration}");
    println!("on={on}");
    println!("off={off}");
    println!("events_per_ms={per_ms:.3}");
    println!("reordered={}", stream.reorder_count());
    Ok(())
}

/// Loads the optional config file and applies the given overrides in order.
fn setup_from(config: Option<&Path>, overrides: &[(&str, Option<String>)]) -> Result<Setup> {
    let mut setup = match config {
        Some(path) => Setup::from_file(path)?,
        None => Setup::default(),
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            setup.apply(key, v)?;
        }
    }
    setup.finish()
}

fn apply_ablation(setup: &mut Setup, ablate: Ablation) {
    match ablate {
        Ablation::Cr => setup.train.model.use_cr = false,
        Ablation::Ue => setup.train.model.use_ue = false,
        Ablation::None => {}
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut setup = setup_from(
        args.config.as_deref(),
        &[
            ("epochs", args.epochs.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("batch_size", args.batch_size.map(|v| v.to_string())),
            ("lr", args.lr.map(|v| v.to_string())),
            ("tau", args.tau.map(|v| v.to_string())),
            ("n_samples", args.n_samples.map(|v| v.to_string())),
        ],
    )?;
    apply_ablation(&mut setup, args.ablate);

    let dataset = build_dataset(&setup.dataset, setup.dataset_seed)?;
    let out = train(&dataset, &setup.train)?;
    out.store.save(&args.out)?;
    let metrics_path = args
        .metrics
        .unwrap_or_else(|| args.out.with_extension("csv"));
    std::fs::write(&metrics_path, metrics_csv(&out.metrics))?;
    print!("{}", out.report.to_kv());
    println!("checkpoint={}", args.out.display());
    println!("metrics={}", metrics_path.display());
    Ok(())
}

/// Rebuilds the dataset and model handles around a loaded checkpoint. The
/// vocabulary is reconstructed exactly as training built it: caption words
/// first, then the hand prompt's words.
fn attach(setup: &Setup, ckpt: &Path) -> Result<(ToyDataset, Vec<FrameStack>, ParamStore, CrueModel)> {
    let dataset = build_dataset(&setup.dataset, setup.dataset_seed)?;
    let frames = prepare_frames(&dataset, &setup.train.afe)?;
    let store = ParamStore::load(ckpt).map_err(|e| match e {
        EvactError::Io(io) => {
            EvactError::Validation(format!("cannot read {}: {io}", ckpt.display()))
        }
        other => other,
    })?;
    let mut vocab = dataset.vocab.clone();
    for word in HAND_PROMPT.split_whitespace() {
        vocab.add(word);
    }
    let model = CrueModel::attach(&store, &vocab, setup.train.model)?;
    Ok((dataset, frames, store, model))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut setup = setup_from(args.config.as_deref(), &[])?;
    apply_ablation(&mut setup, args.ablate);
    let (dataset, frames, store, model) = attach(&setup, &args.ckpt)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let report = evaluate(&model, &store, &dataset, &frames, split)?;
    print!("{}", report.to_kv());
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let mut setup = setup_from(args.config.as_deref(), &[])?;
    apply_ablation(&mut setup, args.ablate);
    let (dataset, _, store, model) = attach(&setup, &args.ckpt)?;

    let stream = args.input.load()?;
    if stream.width() != setup.dataset.width || stream.height() != setup.dataset.height {
        return Err(EvactError::Validation(format!(
            "query geometry {}x{} does not match the configured {}x{}",
            stream.width(),
            stream.height(),
            setup.dataset.width,
            setup.dataset.height
        )));
    }
    let tree = afe_slice(&stream, &setup.train.afe)?;
    let frames = render_frames(&stream, &tree.boundaries(&stream), SliceMethod::Afe)?;

    let k = args.k.unwrap_or(dataset.class_count);
    let ranked = retrieve_event_to_text(&model, &store, &frames, &dataset.class_tokens, k)?;
    for (score, class) in ranked {
        println!("{score:.6}\t{}", dataset.class_names[class]);
    }
    Ok(())
}
