//! `nilm` command-line tool.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use nilm_core::appliance_sim::simulate_channel;
use nilm_core::model::{ModelKind, ModelSpec, Network};
use nilm_core::series::resample_gaps;
use nilm_core::synthesis::{build_window_matrix, synthesize, WindowMatrix};
use nilm_core::train::{evaluate, prepare_with, train, TrainError};
use nilm_core::metrics::DEFAULT_THRESHOLD;
use nilm_core::APPLIANCE_NAMES;

use crate::config::{Manifest, RunConfig};
use crate::files::{self, DatasetSidecar};
use crate::ingest;
use crate::report::{render_curves, render_table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub const DATASET_DIR: &str = "dataset";
pub const REPORTS_DIR: &str = "reports";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const EVAL_DIR: &str = "eval";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Synthesize appliance-activation data, train dense and sparse networks, report results")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate four simulated appliance channel files and a config pointing at them
    Simulate(SimulateArgs),
    /// Build the synthetic dataset from the channel files
    Synth(CommonArgs),
    /// Train the selected models on the dataset
    Train(TrainArgs),
    /// Evaluate saved checkpoints on the test split
    Eval(EvalArgs),
    /// Render curves and the comparison table from saved reports
    Report(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration; flags override its values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for synthesis, splitting and training
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Directory for the channel files and config.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed of the appliance simulator
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    /// Days of recording per channel
    #[arg(long, value_name = "N", default_value_t = 60)]
    days: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    All,
    Dnn,
    Cnn,
    Rnn,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("variant").args(["sparse", "dense", "both"])))]
struct Selection {
    /// Model family
    #[arg(long, value_enum, value_name = "KIND", conflicts_with = "all")]
    model: Option<ModelChoice>,
    /// Only the sparse (SET) variants
    #[arg(long, conflicts_with = "all")]
    sparse: bool,
    /// Only the dense variants
    #[arg(long, conflicts_with = "all")]
    dense: bool,
    /// Both variants (default)
    #[arg(long, conflicts_with = "all")]
    both: bool,
    /// All six models; same as `--model all --both`
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    selection: Selection,
    /// Training epochs
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// SGD learning rate
    #[arg(long, value_name = "RATE")]
    lr: Option<f64>,
    /// Minibatch size
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    selection: Selection,
}

impl Selection {
    fn specs(&self, all_specs: Vec<ModelSpec>) -> Vec<ModelSpec> {
        let kind = match self.model.unwrap_or(ModelChoice::All) {
            ModelChoice::All => None,
            ModelChoice::Dnn => Some(ModelKind::Dnn),
            ModelChoice::Cnn => Some(ModelKind::Cnn),
            ModelChoice::Rnn => Some(ModelKind::Rnn),
        };
        all_specs
            .into_iter()
            .filter(|s| kind.is_none_or(|k| s.kind == k))
            .filter(|s| !(self.sparse && !s.sparse) && !(self.dense && s.sparse))
            .collect()
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: e.to_string() }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_DATA, message: e.to_string() }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(seed) = common.seed {
        config.synthesis.seed = seed;
        config.train.seed = seed;
    }
    Ok(config)
}

fn write_manifest(config: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&config.out).map_err(|e| data(format!("{}: {e}", config.out.display())))?;
    files::write_json(&config.out.join(MANIFEST_FILE), &Manifest::for_config(config)).map_err(data)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if args.days == 0 {
        return Err(usage("--days must be >= 1"));
    }
    fs::create_dir_all(&args.out).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    let mut channels = Vec::new();
    for (i, name) in APPLIANCE_NAMES.iter().enumerate() {
        let series = simulate_channel(i, args.days, args.seed).map_err(data)?;
        let file = format!("channel_{}.dat", i + 1);
        ingest::write_channel(&args.out.join(&file), &series).map_err(data)?;
        println!("{name}: {} readings -> {file}", series.len());
        channels.push(PathBuf::from(file));
    }
    let config = RunConfig { channels, out: PathBuf::from("run"), ..RunConfig::default() };
    files::write_json(&args.out.join("config.json"), &config).map_err(data)
}

fn cmd_synth(common: &CommonArgs) -> Result<(), Failure> {
    let config = load_config(common)?;
    config.validate().map_err(usage)?;
    config.require_channels().map_err(usage)?;
    let s = &config.synthesis;
    let params = s.window_params();
    let mut matrices: Vec<WindowMatrix> = Vec::new();
    for (i, path) in config.channels.iter().enumerate() {
        let (series, parsed) = ingest::parse_channel_with_report(path, i as u8).map_err(data)?;
        if parsed.clamped_negative > 0 || parsed.duplicate_timestamps > 0 {
            eprintln!(
                "{}: {} negative readings clamped, {} duplicate timestamps replaced",
                path.display(),
                parsed.clamped_negative,
                parsed.duplicate_timestamps
            );
        }
        let runs = resample_gaps(&series, s.max_gap_secs);
        let m = build_window_matrix(&runs, &params).map_err(|e| data(format!("{}: {e}", path.display())))?;
        println!("{}: {} valid windows", APPLIANCE_NAMES[i], m.num_valid());
        matrices.push(m);
    }
    let matrices: [WindowMatrix; 4] = matrices.try_into().expect("four channels");
    let mut dataset = synthesize(&matrices, s.repetitions, s.seed).map_err(data)?;
    dataset.split(s.train_fraction, s.seed).map_err(data)?;
    let sidecar = DatasetSidecar {
        seed: s.seed,
        repetitions: s.repetitions,
        window: params,
        max_gap_secs: s.max_gap_secs,
        num_valid: std::array::from_fn(|i| matrices[i].num_valid()),
        split: dataset.split,
    };
    write_manifest(&config)?;
    let dir = config.out.join(DATASET_DIR);
    files::write_dataset(&dir, &dataset, &sidecar).map_err(data)?;
    println!("{} rows -> {}", dataset.len(), dir.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.common)?;
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        config.train.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        config.train.batch_size = b;
    }
    config.validate().map_err(usage)?;
    let (dataset, _) = files::read_dataset(&config.out.join(DATASET_DIR)).map_err(data)?;
    if dataset.window_len != config.synthesis.window_len {
        return Err(data(format!("dataset windows have {} samples, config expects {}", dataset.window_len, config.synthesis.window_len)));
    }
    let (train_set, test_set, _) = prepare_with(&dataset, config.train.log_scale_kw).map_err(data)?;
    let split_index = dataset.split.map(|s| s.split_index);
    write_manifest(&config)?;
    let reports_dir = config.out.join(REPORTS_DIR);
    let ckpt_dir = config.out.join(CHECKPOINTS_DIR);
    for dir in [&reports_dir, &ckpt_dir] {
        fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    }
    let mut diverged = Vec::new();
    for spec in args.selection.specs(config.specs()) {
        let name = spec.name();
        let mut net = Network::build(&spec, config.train.seed).map_err(usage)?;
        let mut seconds = Vec::new();
        let mut clock = Instant::now();
        let result = train(&mut net, &train_set, &test_set, &config.train_config(spec.sparse), |e| {
            seconds.push(clock.elapsed().as_secs_f64());
            clock = Instant::now();
            eprintln!("{name} epoch {}: train loss {:.4} acc {:.4}, test loss {:.4} acc {:.4}", e.epoch + 1, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy);
        });
        let mut report = match result {
            Ok(r) => r,
            Err(TrainError::Diverged(r)) => {
                eprintln!("{name}: loss diverged");
                diverged.push(name.clone());
                *r
            }
            Err(TrainError::Model(e)) => return Err(data(format!("{name}: {e}"))),
        };
        report.split_index = split_index;
        report.epoch_seconds = seconds;
        files::write_report(&reports_dir.join(format!("{name}.json")), &report).map_err(data)?;
        files::write_text(&reports_dir.join(format!("{name}.curves.csv")), &files::curves_csv(&report)).map_err(data)?;
        files::write_json(&reports_dir.join(format!("{name}.timings.json")), &report.epoch_seconds).map_err(data)?;
        files::write_checkpoint(&ckpt_dir.join(format!("{name}.json")), &net).map_err(data)?;
        if let Some(m) = &report.final_metrics {
            println!("{name}: test accuracy {:.4} (exact match {:.4})", m.micro_accuracy, m.exact_match_accuracy);
        }
    }
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_DIVERGED, message: format!("training diverged: {}", diverged.join(", ")) })
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let (dataset, _) = files::read_dataset(&config.out.join(DATASET_DIR)).map_err(data)?;
    let (_, test_set, _) = prepare_with(&dataset, config.train.log_scale_kw).map_err(data)?;
    let eval_dir = config.out.join(EVAL_DIR);
    fs::create_dir_all(&eval_dir).map_err(|e| data(format!("{}: {e}", eval_dir.display())))?;
    let mut evaluated = 0;
    for spec in args.selection.specs(config.specs()) {
        let name = spec.name();
        let path = config.out.join(CHECKPOINTS_DIR).join(format!("{name}.json"));
        if !path.exists() {
            continue;
        }
        let mut net = files::read_checkpoint(&path).map_err(data)?;
        let (loss, metrics) = evaluate(&mut net, &test_set, DEFAULT_THRESHOLD).map_err(|e| data(format!("{name}: {e}")))?;
        files::write_json(&eval_dir.join(format!("{name}.json")), &serde_json::json!({ "model": name, "test_loss": loss, "metrics": metrics }))
            .map_err(data)?;
        println!("{name}: test loss {loss:.4}, accuracy {:.4}, exact match {:.4}", metrics.micro_accuracy, metrics.exact_match_accuracy);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(data(format!("no checkpoints under {}", config.out.join(CHECKPOINTS_DIR).display())));
    }
    Ok(())
}

/// Report files in spec order.
pub fn load_reports(run_dir: &Path) -> Result<Vec<nilm_core::train::TrainReport>, files::FileError> {
    let mut reports = Vec::new();
    for spec in ModelSpec::grid() {
        let path = run_dir.join(REPORTS_DIR).join(format!("{}.json", spec.name()));
        if path.exists() {
            reports.push(files::read_report(&path)?);
        }
    }
    Ok(reports)
}

fn cmd_report(common: &CommonArgs) -> Result<(), Failure> {
    let config = load_config(common)?;
    let reports = load_reports(&config.out).map_err(data)?;
    if reports.is_empty() {
        return Err(data(format!("no reports under {}", config.out.join(REPORTS_DIR).display())));
    }
    let figures = render_curves(&reports).map_err(data)?;
    for (appliance, svg) in &figures.svgs {
        files::write_text(&config.out.join(format!("curves_{appliance}.svg")), svg).map_err(data)?;
    }
    files::write_text(&config.out.join("curves.csv"), &figures.csv).map_err(data)?;
    let table = render_table(&reports).map_err(data)?;
    files::write_text(&config.out.join("comparison.csv"), &table.to_csv()).map_err(data)?;
    files::write_text(&config.out.join("comparison.txt"), &table.to_text()).map_err(data)?;
    print!("{}", table.to_text());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
