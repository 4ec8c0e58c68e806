//! Command-line surface. Exit codes: 0 success, 1 user error, 2 internal
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pprgat_core::gradcheck::suite::run_suite;
use pprgat_core::graph::Dataset;
use pprgat_core::models::{InductiveShape, ModelError, ModelKind};
use pprgat_core::ppr::PprConfig;

use crate::benchmark::{benchmark, write_results_csv, BenchmarkConfig};
use crate::dataset_io::{dataset_name, load_dataset, DatasetError};
use crate::harness::{
    evaluate_run, preset, save_run, train, Part, PprSet, RunRecord, TrainConfig, TrainError, DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
};
use crate::ppr_cache::{default_threads, CacheError, THREADS_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pprgat", version, about = "PPR-augmented graph attention: precompute, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Precompute the top-k approximate PPR matrix of a dataset.
    Ppr(PprArgs),
    /// Train one model and write a run directory.
    Train(TrainArgs),
    /// Re-evaluate a run directory.
    Eval(EvalArgs),
    /// Train several models over consecutive seeds and write results.csv.
    Benchmark(BenchArgs),
    /// Run the gradient-check suite; exit 0 iff every check passes.
    Gradcheck,
}

#[derive(Debug, Args)]
struct PprArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 32)]
    topk: usize,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Cache file (transductive) or directory of per-graph caches (inductive).
    /// Defaults to `<dataset>/ppr.cache` or `<dataset>/ppr/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PprSource {
    /// PPR cache; defaults to the dataset's default cache location.
    #[arg(long)]
    ppr: Option<PathBuf>,
    /// Compute the PPR matrix in memory when no cache is found.
    #[arg(long)]
    auto_ppr: bool,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct Schedule {
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    patience: usize,
    /// Inductive layout: full (2 x 4 x 256 hidden) instead of the reduced
    /// (1 x 4 x 64) desk-scale layout.
    #[arg(long)]
    full_inductive: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ppr: PprSource,
    #[command(flatten)]
    schedule: Schedule,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: Part,
    #[command(flatten)]
    ppr: PprSource,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Keep every run directory under this path.
    #[arg(long)]
    runs_dir: Option<PathBuf>,
    /// Concurrent training runs; defaults to the thread count.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    ppr: PprSource,
    #[command(flatten)]
    schedule: Schedule,
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

fn threads(arg: Option<usize>) -> usize {
    arg.filter(|&n| n > 0).unwrap_or_else(default_threads)
}

fn default_cache(dataset: &Path, ds: &Dataset) -> PathBuf {
    if ds.is_inductive() {
        dataset.join("ppr")
    } else {
        dataset.join("ppr.cache")
    }
}

fn resolve_ppr(
    src: &PprSource,
    fallback: Option<&Path>,
    dataset: &Path,
    ds: &Dataset,
    kinds: &[ModelKind],
    cfg: &PprConfig,
) -> Result<(PprSet, Option<PathBuf>), CliError> {
    if !kinds.iter().any(|k| k.needs_ppr()) {
        return Ok((PprSet::none(ds), None));
    }
    let path = src
        .ppr
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .unwrap_or_else(|| default_cache(dataset, ds));
    if path.exists() {
        return Ok((PprSet::load(ds, &path, cfg)?, Some(path)));
    }
    if src.auto_ppr {
        let cfg = PprConfig {
            threads: threads(src.threads),
            ..*cfg
        };
        let set = PprSet::compute(ds, &cfg).map_err(|e| CliError::User(e.to_string()))?;
        return Ok((set, None));
    }
    let kind = kinds.iter().copied().find(|k| k.needs_ppr()).expect("checked above");
    Err(CliError::User(format!(
        "{}; run `pprgat ppr --dataset {}` or pass --auto-ppr (looked for {})",
        ModelError::PrecomputeRequired(kind),
        dataset.display(),
        path.display()
    )))
}

fn cmd_ppr(a: &PprArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = PprConfig {
        alpha: a.alpha,
        epsilon: a.eps,
        top_k: a.topk,
        threads: threads(a.threads),
    };
    let set = PprSet::compute(&ds, &cfg).map_err(|e| CliError::User(e.to_string()))?;
    let out = a.out.clone().unwrap_or_else(|| default_cache(&a.dataset, &ds));
    set.save(&ds, &out)?;
    let nnz: usize = set.matrices.iter().flatten().map(|m| m.nnz()).sum();
    println!("wrote {} ({} graphs, {nnz} entries)", out.display(), ds.graphs.len());
    Ok(())
}

fn shape(s: &Schedule) -> InductiveShape {
    if s.full_inductive {
        InductiveShape::full()
    } else {
        InductiveShape::reduced()
    }
}

fn train_config(ds: &Dataset, s: &Schedule, seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: s.max_epochs,
        patience: s.patience,
        ..TrainConfig::for_dataset(ds, seed)
    }
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let name = dataset_name(&a.dataset);
    let model = preset(a.model, &ds, &name, shape(&a.schedule), a.seed);
    let (ppr, cache) = resolve_ppr(&a.ppr, None, &a.dataset, &ds, &[a.model], &model.ppr)?;
    let tc = train_config(&ds, &a.schedule, a.seed);
    let verbose = a.verbose;
    let mut run = train(&model, &ds, &name, &tc, &ppr, |r| {
        if verbose {
            eprintln!(
                "epoch {:>5}  train_loss {:.4}  val_loss {:.4}  val_metric {:.4}",
                r.epoch, r.train_loss, r.val_loss, r.val_metric
            );
        }
    })?;
    run.record.ppr_cache = cache.map(|p| p.display().to_string());
    save_run(&run, &a.out)?;
    let r = &run.record;
    println!(
        "{} on {}: best epoch {} of {}, test {} {:.4} ({:.1}s) -> {}",
        a.model,
        name,
        r.best_epoch,
        r.stop_epoch,
        r.metric,
        r.test_metric,
        r.wall_clock_sec,
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let record = RunRecord::load(&a.run)?;
    let fallback = record.ppr_cache.as_ref().map(PathBuf::from);
    let (ppr, _) = resolve_ppr(
        &a.ppr,
        fallback.as_deref(),
        &a.dataset,
        &ds,
        &[record.model.kind],
        &record.model.ppr,
    )?;
    let value = evaluate_run(&a.run, &ds, &ppr, a.split)?;
    println!("{} {value}", record.metric);
    Ok(())
}

fn cmd_benchmark(a: &BenchArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let name = dataset_name(&a.dataset);
    let shape = shape(&a.schedule);
    let base = preset(a.models[0], &ds, &name, shape, a.seed);
    let (ppr, _) = resolve_ppr(&a.ppr, None, &a.dataset, &ds, &a.models, &base.ppr)?;
    let cfg = BenchmarkConfig {
        models: a.models.clone(),
        runs: a.runs,
        base_seed: a.seed,
        workers: a.workers.unwrap_or_else(|| threads(a.ppr.threads)),
        out: a.runs_dir.clone(),
    };
    let (rows, failures) = benchmark(
        &ds,
        &name,
        &cfg,
        |kind, seed| preset(kind, &ds, &name, shape, seed),
        |seed| train_config(&ds, &a.schedule, seed),
        &ppr,
    );
    write_results_csv(&rows, &a.out).map_err(|e| CliError::User(format!("{}: {e}", a.out.display())))?;
    print!("{}", crate::benchmark::results_csv(&rows));
    for f in &failures {
        eprintln!("{} seed {} failed: {}", f.model, f.seed, f.error);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Internal(format!("{} runs failed", failures.len())))
    }
}

fn cmd_gradcheck() -> Result<(), CliError> {
    let results = run_suite();
    let mut failed = 0;
    for r in &results {
        match &r.outcome {
            Ok(e) => println!("{} {:<48} rel_err {e:.3e}", if r.passed() { "ok  " } else { "FAIL" }, r.name),
            Err(msg) => println!("FAIL {:<48} {msg}", r.name),
        }
        failed += usize::from(!r.passed());
    }
    println!("{} checks, {failed} failed", results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Internal(format!("{failed} gradient checks failed")))
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Ppr(a) => cmd_ppr(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Gradcheck => cmd_gradcheck(),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::User(m) => eprintln!("error: {m}"),
                CliError::Internal(m) => eprintln!("internal error: {m}"),
            }
            e.code()
        }
    }
}
