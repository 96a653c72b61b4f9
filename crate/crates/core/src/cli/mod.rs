//! Command-line front end: `train`, `eval`, `synth`, `ablate`, `sweep`,
//! `import-dataset`, plus `schema` and `replay`.
//!
//! Exit codes: 0 success, 2 usage or config, 3 numerical failure, 4 artifact
//! or version problem.

mod config;
mod run;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

pub use config::{
    apply_override, check_schema, parse_override, read_config_value, DatasetSource, RunConfig,
    ToySpec, RUN_CONFIG_SCHEMA,
};
pub use run::{write_atomic, Invocation, RunDir, RunManifest, MANIFEST_NAME};

use crate::datasets::{import_mat_splits, GzslDataset};
use crate::error::Error;
use crate::eval::{
    conditioning_rows, evaluate_gzsl, format_plot_csv, run_ablation_suite, synthesize_unseen,
    transform_through_d, ClassifierKind, EvalConfig, EvalReport, PlotRow,
};
use crate::training::{
    load_checkpoint, train_with, Ablation, TrainConfig, TrainOutputs, TrainState,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ARTIFACT: i32 = 4;

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            error,
        }
    }

    fn artifact(error: Error) -> Self {
        Failure {
            code: EXIT_ARTIFACT,
            error,
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Numeric { .. } => EXIT_NUMERIC,
            Error::Checkpoint(_)
            | Error::Version { .. }
            | Error::Load(_)
            | Error::Schema(_)
            | Error::InductiveViolation(_)
            | Error::Io { .. } => EXIT_ARTIFACT,
            Error::Argument(_) | Error::Shape(_) | Error::Config(_) | Error::Json(_) => EXIT_USAGE,
        };
        Failure { code, error }
    }
}

type CmdResult = std::result::Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "bmcogan",
    version,
    about = "Feature-generating GAN for generalized zero-shot learning"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model, then evaluate it unless `--no-eval` is given.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print the U/S/H table.
    Eval(EvalArgs),
    /// Write synthesized unseen-class features to CSV.
    Synth(SynthArgs),
    /// Train and evaluate a list of ablation variants.
    Ablate(AblateArgs),
    /// One run per value of a loss weight or of the synthesis count.
    Sweep(SweepArgs),
    /// Convert `.mat` split archives into the portable dataset layout.
    ImportDataset(ImportArgs),
    /// Print the run-config JSON schema.
    Schema,
    /// Re-execute the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config value, e.g. `--set train.weights.lambda_d=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sets both the training and the synthesis seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Parent directory for run directories.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Final classifier: softmax or knn.
    #[arg(long)]
    classifier: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Ablation variant to train.
    #[arg(long)]
    ablation: Option<String>,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    no_eval: bool,
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the manifest of the run that wrote the checkpoint.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: CheckpointArgs,
    #[arg(long)]
    classifier: Option<String>,
    /// Report path; defaults to the run's `reports` directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    source: CheckpointArgs,
    #[arg(long)]
    out: PathBuf,
    /// Pass the features through the critic's hidden layer.
    #[arg(long)]
    transform: bool,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Comma-separated variant names.
    #[arg(long)]
    variants: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// lambda1, lambda2, lambda_d, lambda_cls, lambda_cen or n_per_class.
    #[arg(long)]
    param: String,
    /// Comma-separated values; each parameter has a default grid.
    #[arg(long)]
    values: Option<String>,
    /// Run the values on separate threads.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Archive holding `features` and `labels`.
    #[arg(long)]
    features: PathBuf,
    /// Archive holding `att` and the `*_loc` split lists.
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    name: String,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Parent directory for the new run; defaults to the recorded one.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
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
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ImportDataset(a) => cmd_import(a),
        Command::Schema => {
            println!("{RUN_CONFIG_SCHEMA}");
            Ok(())
        }
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

// ---------------------------------------------------------------------------
// Config resolution

fn set_value(root: &mut Value, path: &str, v: Value) -> Result<(), Failure> {
    let keys: Vec<String> = path.split('.').map(str::to_string).collect();
    apply_override(root, &keys, v).map_err(Failure::usage)
}

/// File, then `--set`, then explicit flags.
fn resolve_config(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut value = read_config_value(&a.config, &a.set).map_err(Failure::usage)?;
    if let Some(seed) = a.seed {
        set_value(&mut value, "train.seed", seed.into())?;
        set_value(&mut value, "eval.synthesis.seed", seed.into())?;
    }
    if let Some(epochs) = a.epochs {
        set_value(&mut value, "train.epochs", epochs.into())?;
    }
    if let Some(out) = &a.output {
        set_value(
            &mut value,
            "output_dir",
            out.to_string_lossy().into_owned().into(),
        )?;
    }
    if let Some(kind) = &a.classifier {
        let kind = ClassifierKind::from_str(kind).map_err(Failure::usage)?;
        set_value(
            &mut value,
            "eval.classifier",
            serde_json::to_value(kind).expect("enum serializes"),
        )?;
    }
    RunConfig::from_value(value).map_err(Failure::usage)
}

fn load_dataset(cfg: &RunConfig) -> Result<GzslDataset, Failure> {
    cfg.load_dataset().map_err(Failure::artifact)
}

fn run_root_of(checkpoint: &Path) -> Option<PathBuf> {
    let root = checkpoint.parent()?.parent()?;
    root.join(MANIFEST_NAME)
        .is_file()
        .then(|| root.to_path_buf())
}

fn resolve_checkpoint_config(a: &CheckpointArgs) -> Result<RunConfig, Failure> {
    let value = match (&a.config, run_root_of(&a.checkpoint)) {
        (Some(path), _) => read_config_value(path, &a.set).map_err(Failure::usage)?,
        (None, Some(root)) => {
            let manifest = RunManifest::read(&root.join(MANIFEST_NAME)).map_err(Failure::usage)?;
            let mut v =
                serde_json::to_value(&manifest.config).map_err(|e| Failure::usage(e.into()))?;
            for spec in &a.set {
                let (keys, val) = parse_override(spec).map_err(Failure::usage)?;
                apply_override(&mut v, &keys, val).map_err(Failure::usage)?;
            }
            v
        }
        (None, None) => {
            return Err(Failure::usage(Error::Config(
                "no config given and no run manifest next to the checkpoint; pass --config".into(),
            )))
        }
    };
    RunConfig::from_value(value).map_err(Failure::usage)
}

fn load_state(path: &Path, ds: &GzslDataset) -> Result<TrainState, Failure> {
    let state = load_checkpoint(path).map_err(Failure::artifact)?;
    let d = state.model.dims;
    if d.dx != ds.dx() || d.a_dim != ds.a_dim() || d.c_seen != ds.c_seen() {
        return Err(Failure::artifact(Error::Checkpoint(format!(
            "checkpoint dims (dx {}, A {}, seen {}) do not fit dataset `{}` (dx {}, A {}, seen {})",
            d.dx,
            d.a_dim,
            d.c_seen,
            ds.name,
            ds.dx(),
            ds.a_dim(),
            ds.c_seen()
        ))));
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Outputs

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(Failure::from)
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<(), Failure> {
    write_text(&dir.join(format!("{stem}.json")), &report.to_json())?;
    write_text(&dir.join(format!("{stem}.txt")), &report.to_table())?;
    write_text(
        &dir.join(format!("{stem}-per-class.csv")),
        &report.per_class_csv(),
    )
}

/// Evaluates with the variant's test-time settings applied.
pub fn evaluate_state(
    state: &TrainState,
    ds: &GzslDataset,
    eval: &EvalConfig,
) -> crate::Result<EvalReport> {
    let variant = state.config.ablation;
    let mut cfg = eval.clone();
    cfg.synthesis.use_d_transform &= variant.uses_d_transform();
    let mut report = evaluate_gzsl(&state.model, ds, &cfg)?;
    report.variant = Some(variant);
    Ok(report)
}

fn train_into(
    dir: &RunDir,
    ds: &GzslDataset,
    cfg: &TrainConfig,
    from: Option<&Path>,
) -> Result<TrainState, Failure> {
    let log_path = dir.logs().join("train.log");
    let file = File::create(&log_path).map_err(|e| Failure::from(Error::io(&log_path, e)))?;
    let mut log = BufWriter::new(file);
    let mut out = TrainOutputs {
        checkpoint_dir: Some(dir.checkpoints()),
        log: Some(&mut log),
    };
    let state = match from {
        Some(ckpt) => {
            let state = load_state(ckpt, ds)?;
            let total = state.config.total_steps(ds.split.train.len());
            crate::training::run_until(ds, state, total, &mut out)?
        }
        None => train_with(ds, cfg, &mut out)?,
    };
    log.flush()
        .map_err(|e| Failure::from(Error::io(&log_path, e)))?;
    Ok(state)
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut cfg = resolve_config(&a.common)?;
    if let Some(v) = &a.ablation {
        cfg.train.ablation = Ablation::from_str(v).map_err(Failure::usage)?;
    }
    do_train(&cfg, !a.no_eval, a.resume.as_deref())
}

fn do_train(cfg: &RunConfig, evaluate: bool, resume_from: Option<&Path>) -> CmdResult {
    let started = run::now_rfc3339();
    let clock = Instant::now();
    let ds = load_dataset(cfg)?;
    let dir = RunDir::create(&cfg.output_dir, &cfg.hash())?;
    let mut manifest = RunManifest::new(
        Invocation::Train { evaluate },
        cfg,
        ds.content_hash(),
        started,
    );
    let state = train_into(&dir, &ds, &cfg.train, resume_from)?;
    if evaluate {
        let report = evaluate_state(&state, &ds, &cfg.eval)?;
        write_report(&dir.reports(), "eval", &report)?;
        print!("{}", report.to_table());
        manifest.report = Some(report);
    }
    manifest.wall_clock_secs = clock.elapsed().as_secs_f64();
    manifest.write(&dir.manifest())?;
    println!("run directory: {}", dir.root.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let mut cfg = resolve_checkpoint_config(&a.source)?;
    if let Some(kind) = &a.classifier {
        cfg.eval.classifier = ClassifierKind::from_str(kind).map_err(Failure::usage)?;
    }
    do_eval(&cfg, &a.source.checkpoint, a.out.as_deref())
}

fn do_eval(cfg: &RunConfig, checkpoint: &Path, out: Option<&Path>) -> CmdResult {
    let started = run::now_rfc3339();
    let clock = Instant::now();
    let ds = load_dataset(cfg)?;
    let state = load_state(checkpoint, &ds)?;
    let report = evaluate_state(&state, &ds, &cfg.eval)?;
    print!("{}", report.to_table());

    let kind = cfg.eval.classifier;
    let json_path = match (out, run_root_of(checkpoint)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(root)) => root.join("reports").join(format!("eval-{kind}.json")),
        (None, None) => {
            let mut p = checkpoint.as_os_str().to_owned();
            p.push(format!(".eval-{kind}.json"));
            PathBuf::from(p)
        }
    };
    if let Some(parent) = json_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::from(Error::io(parent, e)))?;
    }
    write_text(&json_path, &report.to_json())?;

    let checkpoint = fs::canonicalize(checkpoint).unwrap_or_else(|_| checkpoint.to_path_buf());
    let mut manifest = RunManifest::new(
        Invocation::Eval { checkpoint },
        cfg,
        ds.content_hash(),
        started,
    );
    manifest.seed = state.config.seed;
    manifest.report = Some(report);
    manifest.wall_clock_secs = clock.elapsed().as_secs_f64();
    manifest.write(&json_path.with_extension("manifest.json"))?;
    println!("report: {}", json_path.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let cfg = resolve_checkpoint_config(&a.source)?;
    let ds = load_dataset(&cfg)?;
    let state = load_state(&a.source.checkpoint, &ds)?;
    let (mut x, y) = synthesize_unseen(&state.model, &ds.semantics, &cfg.eval.synthesis)?;
    if a.transform {
        let cond = conditioning_rows(&ds.semantics, &y, cfg.eval.synthesis.conditioning)?;
        x = transform_through_d(&state.model, &x.view(), &cond.view(), true)?;
    }
    let mut text = String::from("label,original_id");
    for j in 0..x.ncols() {
        let _ = write!(text, ",f{j}");
    }
    text.push('\n');
    for (row, &label) in x.rows().into_iter().zip(&y) {
        let _ = write!(
            text,
            "{label},{}",
            ds.class_map.original(label).unwrap_or(label as i64)
        );
        for v in row {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    write_text(&a.out, &text)?;
    println!(
        "wrote {} rows of width {} to {}",
        x.nrows(),
        x.ncols(),
        a.out.display()
    );
    Ok(())
}

/// Parses a comma-separated variant list. Empty lists and unknown names are
/// usage errors that list the valid names.
pub fn parse_variants(spec: &str) -> crate::Result<Vec<Ablation>> {
    let names: Vec<&str> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::Config(format!(
            "no variants given; valid names: {}",
            Ablation::valid_names()
        )));
    }
    names.iter().map(|n| Ablation::from_str(n)).collect()
}

fn cmd_ablate(a: AblateArgs) -> CmdResult {
    let cfg = resolve_config(&a.common)?;
    let variants = parse_variants(&a.variants).map_err(Failure::usage)?;
    do_ablate(&cfg, &variants)
}

fn do_ablate(cfg: &RunConfig, variants: &[Ablation]) -> CmdResult {
    let started = run::now_rfc3339();
    let clock = Instant::now();
    let ds = load_dataset(cfg)?;
    let dir = RunDir::create(&cfg.output_dir, &cfg.hash())?;
    let names = variants.iter().map(|v| v.to_string()).collect();
    let mut manifest = RunManifest::new(
        Invocation::Ablate { variants: names },
        cfg,
        ds.content_hash(),
        started,
    );
    let table = run_ablation_suite(&ds, &cfg.train, &cfg.eval, variants)?;
    let reports = dir.reports();
    write_text(&reports.join("ablation.txt"), &table.to_table())?;
    write_text(&reports.join("ablation.csv"), &table.to_csv())?;
    write_text(
        &reports.join("ablation.json"),
        &serde_json::to_string_pretty(&table).map_err(Error::from)?,
    )?;
    print!("{}", table.to_table());
    manifest.ablation = Some(table);
    manifest.wall_clock_secs = clock.elapsed().as_secs_f64();
    manifest.write(&dir.manifest())?;
    println!("run directory: {}", dir.root.display());
    Ok(())
}

/// Quantities a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda1,
    Lambda2,
    LambdaD,
    LambdaCls,
    LambdaCen,
    NPerClass,
}

impl SweepParam {
    pub const NAMES: [&'static str; 6] = [
        "lambda1",
        "lambda2",
        "lambda_d",
        "lambda_cls",
        "lambda_cen",
        "n_per_class",
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda1 => "lambda1",
            SweepParam::Lambda2 => "lambda2",
            SweepParam::LambdaD => "lambda_d",
            SweepParam::LambdaCls => "lambda_cls",
            SweepParam::LambdaCen => "lambda_cen",
            SweepParam::NPerClass => "n_per_class",
        }
    }

    /// Grid used when no values are given. The `lambda1` grid contains both
    /// 0.2 and 2.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Lambda1 => vec![0.02, 0.2, 0.5, 1.0, 2.0, 5.0],
            SweepParam::Lambda2 => vec![0.2, 0.4, 0.8, 1.6, 3.2],
            SweepParam::LambdaD => vec![0.0, 0.25, 0.5, 1.0, 2.0],
            SweepParam::LambdaCls => vec![0.05, 0.1, 0.2, 0.4, 0.8],
            SweepParam::LambdaCen => vec![0.025, 0.05, 0.1, 0.2, 0.4],
            SweepParam::NPerClass => vec![100.0, 200.0, 400.0, 600.0],
        }
    }

    fn apply(self, train: &mut TrainConfig, value: f64) {
        let w = &mut train.weights;
        match self {
            SweepParam::Lambda1 => w.lambda1 = value,
            SweepParam::Lambda2 => w.lambda2 = value,
            SweepParam::LambdaD => w.lambda_d = value,
            SweepParam::LambdaCls => w.lambda_cls = value,
            SweepParam::LambdaCen => w.lambda_cen = value,
            SweepParam::NPerClass => {}
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Ok(match s {
            "lambda1" => SweepParam::Lambda1,
            "lambda2" => SweepParam::Lambda2,
            "lambda_d" => SweepParam::LambdaD,
            "lambda_cls" => SweepParam::LambdaCls,
            "lambda_cen" => SweepParam::LambdaCen,
            "n_per_class" => SweepParam::NPerClass,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter `{s}`; valid: {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Parses a comma-separated list of finite numbers, checked against `param`.
pub fn parse_sweep_values(param: SweepParam, spec: &str) -> crate::Result<Vec<f64>> {
    let values = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("sweep value `{s}` is not a number")))
        })
        .collect::<crate::Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::Config("no sweep values given".into()));
    }
    for &v in &values {
        let ok = match param {
            SweepParam::NPerClass => v >= 0.0 && v.fract() == 0.0,
            _ => v >= 0.0,
        };
        if !ok {
            return Err(Error::Config(format!(
                "{v} is not a valid value for {}",
                param.name()
            )));
        }
    }
    Ok(values)
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let cfg = resolve_config(&a.common)?;
    let param = SweepParam::from_str(&a.param).map_err(Failure::usage)?;
    let values = match &a.values {
        Some(spec) => parse_sweep_values(param, spec).map_err(Failure::usage)?,
        None => param.default_grid(),
    };
    do_sweep(&cfg, param, &values, a.parallel)
}

fn sweep_point(
    ds: &GzslDataset,
    cfg: &RunConfig,
    param: SweepParam,
    value: f64,
) -> crate::Result<PlotRow> {
    let mut train = cfg.train.clone();
    param.apply(&mut train, value);
    let state = crate::training::train(ds, &train)?;
    let r = evaluate_state(&state, ds, &cfg.eval)?;
    Ok(PlotRow {
        value,
        u: r.u,
        s: r.s,
        h: r.h,
    })
}

/// Plot rows for every value, in order.
pub fn sweep_rows(
    ds: &GzslDataset,
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    parallel: bool,
) -> crate::Result<Vec<PlotRow>> {
    if param == SweepParam::NPerClass {
        // one trained model, re-synthesized per value
        let state = crate::training::train(ds, &cfg.train)?;
        return values
            .iter()
            .map(|&v| {
                let mut eval = cfg.eval.clone();
                eval.synthesis.n_per_class = v as usize;
                let r = evaluate_state(&state, ds, &eval)?;
                Ok(PlotRow {
                    value: v,
                    u: r.u,
                    s: r.s,
                    h: r.h,
                })
            })
            .collect();
    }
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = values
                .iter()
                .map(|&v| scope.spawn(move || sweep_point(ds, cfg, param, v)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    } else {
        values
            .iter()
            .map(|&v| sweep_point(ds, cfg, param, v))
            .collect()
    }
}

fn do_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], parallel: bool) -> CmdResult {
    let started = run::now_rfc3339();
    let clock = Instant::now();
    let ds = load_dataset(cfg)?;
    let dir = RunDir::create(&cfg.output_dir, &cfg.hash())?;
    let invocation = Invocation::Sweep {
        parameter: param.name().to_string(),
        values: values.to_vec(),
    };
    let mut manifest = RunManifest::new(invocation, cfg, ds.content_hash(), started);
    let rows = sweep_rows(&ds, cfg, param, values, parallel)?;
    let csv = format_plot_csv(param.name(), &rows);
    write_text(
        &dir.reports().join(format!("sweep-{}.csv", param.name())),
        &csv,
    )?;
    print!("{csv}");
    manifest.sweep = Some(rows);
    manifest.wall_clock_secs = clock.elapsed().as_secs_f64();
    manifest.write(&dir.manifest())?;
    println!("run directory: {}", dir.root.display());
    Ok(())
}

fn cmd_import(a: ImportArgs) -> CmdResult {
    let ds = import_mat_splits(&a.features, &a.splits, &a.out, &a.name)?;
    println!(
        "{}: {} samples, dx {}, A {}, {} seen / {} unseen classes -> {}",
        ds.name,
        ds.n_samples(),
        ds.dx(),
        ds.a_dim(),
        ds.c_seen(),
        ds.c_unseen(),
        a.out.display()
    );
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> CmdResult {
    let manifest = RunManifest::read(&a.manifest).map_err(Failure::usage)?;
    let mut cfg = manifest.config;
    if let Some(out) = a.output {
        cfg.output_dir = out;
    }
    cfg.validate().map_err(Failure::usage)?;
    match manifest.invocation {
        Invocation::Train { evaluate } => do_train(&cfg, evaluate, None),
        Invocation::Eval { checkpoint } => do_eval(&cfg, &checkpoint, None),
        Invocation::Ablate { variants } => {
            let variants = parse_variants(&variants.join(",")).map_err(Failure::usage)?;
            do_ablate(&cfg, &variants)
        }
        Invocation::Sweep { parameter, values } => {
            let param = SweepParam::from_str(&parameter).map_err(Failure::usage)?;
            do_sweep(&cfg, param, &values, false)
        }
    }
}

#[cfg(test)]
mod tests;
