//! `sdgar`: split interaction data, train, evaluate and benchmark the sampler.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors (including
//! missing inputs and mismatched checkpoints), 1 for failures during a run.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::{Table, Value};

use sdgar_core::bench::{bench_sampler, SamplerBenchSettings};
use sdgar_core::dataset::{filter_min_interactions, load_interactions, load_split, split, write_split, SplitMeta};
use sdgar_core::evaluator::{evaluate_validation, EvalReport};
use sdgar_core::trainer::{train_with, InitialState};
use sdgar_core::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, Exec, SamplerMode};

const DATA_DIR_ENV: &str = "SDGAR_DATA_DIR";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<sdgar_core::Error> for CliError {
    fn from(e: sdgar_core::Error) -> Self {
        let code = if e.is_usage() { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "sdgar", version, about = "Adversarial negative sampling for implicit-feedback recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter an interaction file and split it per context into train,
    /// validation and test parts.
    Split(SplitArgs),
    /// Train a model on a split directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint with NDCG@k.
    Eval(EvalArgs),
    /// Time alias-table generator draws against a naive softmax sampler.
    BenchSampler(BenchArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Interaction file with `context, item[, rating]` rows (tab or comma
    /// separated). Relative paths that do not exist are looked up under
    /// $SDGAR_DATA_DIR.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the split files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Fraction of each context's train pool held out for validation.
    #[arg(long, default_value_t = 0.1)]
    valid_frac: f64,
    /// Keep only ratings strictly above this value.
    #[arg(long)]
    rating_threshold: Option<f64>,
    /// Drop contexts with fewer positives than this.
    #[arg(long, default_value_t = 1)]
    min_interactions: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Sampler {
    SdGar,
    Uniform,
    SelfAdversarial,
    Dns,
}

impl From<Sampler> for SamplerMode {
    fn from(s: Sampler) -> Self {
        match s {
            Sampler::SdGar => SamplerMode::SdGar,
            Sampler::Uniform => SamplerMode::Uniform,
            Sampler::SelfAdversarial => SamplerMode::SelfAdversarial,
            Sampler::Dns => SamplerMode::Dns,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Split directory written by `sdgar split`.
    #[arg(long, env = DATA_DIR_ENV)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint, log and effective config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with training parameters; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint instead of a random initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Worker threads; 1 runs everything on the calling thread, 0 uses all
    /// cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    sampler: Option<Sampler>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lambda_x: Option<f64>,
    #[arg(long)]
    lambda_y: Option<f64>,
    /// Generator refresh period in epochs.
    #[arg(long)]
    l_g: Option<usize>,
    #[arg(long)]
    neg_per_context: Option<usize>,
    #[arg(long)]
    est_samples: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    weight_gradient: Option<bool>,
    #[arg(long)]
    eval_k: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

impl TrainArgs {
    fn overrides(&self) -> Table {
        let mut t = Table::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(k.to_string(), v);
            }
        };
        let int = |v: Option<usize>| v.map(|x| Value::Integer(x as i64));
        let float = |v: Option<f64>| v.map(Value::Float);
        put("seed", Some(Value::Integer(self.seed as i64)));
        put(
            "sampler",
            self.sampler.map(|s| Value::String(SamplerMode::from(s).as_str().into())),
        );
        put("epochs", int(self.epochs));
        put("temperature", float(self.temperature));
        put("lambda_x", float(self.lambda_x));
        put("lambda_y", float(self.lambda_y));
        put("l_g", int(self.l_g));
        put("neg_per_context", int(self.neg_per_context));
        put("est_samples", int(self.est_samples));
        put("states", int(self.states));
        put("dim", int(self.dim));
        put("batch_size", int(self.batch_size));
        put("learning_rate", float(self.learning_rate));
        put("l2", float(self.l2));
        put("weight_gradient", self.weight_gradient.map(Value::Boolean));
        put("eval_k", int(self.eval_k));
        put("eval_every", int(self.eval_every));
        t
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Part {
    Test,
    Validation,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split directory the checkpoint was trained on.
    #[arg(long, env = DATA_DIR_ENV)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Part::Test)]
    part: Part,
    /// Rank training positives too instead of excluding them.
    #[arg(long)]
    no_mask: bool,
    /// Report path; defaults to `eval_report.json` next to the checkpoint.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Item counts to time.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    states: usize,
    #[arg(long, default_value_t = 64)]
    contexts: usize,
    /// Generator draws per repetition.
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the rows as JSON lines to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BenchSampler(a) => cmd_bench_sampler(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn existing(path: &Path) -> Result<PathBuf, CliError> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let joined = Path::new(&dir).join(path);
            if joined.exists() {
                return Ok(joined);
            }
        }
    }
    Err(CliError::usage(format!("input not found: {}", path.display())))
}

fn data_dir(data: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = data.ok_or_else(|| CliError::usage(format!("no data directory: pass --data or set {DATA_DIR_ENV}")))?;
    existing(&dir)
}

fn setup_threads(threads: usize) -> Exec {
    #[cfg(feature = "parallel")]
    if threads > 1 {
        // Only fails if a pool exists already, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Exec::from_threads(threads)
}

fn cmd_split(a: SplitArgs) -> Result<(), CliError> {
    let input = existing(&a.input)?;
    let ds = load_interactions(&input, a.rating_threshold)?;
    let ds = filter_min_interactions(&ds, a.min_interactions);
    let parts = split(&ds, a.train_frac, a.valid_frac, a.seed)?;
    let meta = SplitMeta {
        seed: a.seed,
        train_frac: a.train_frac,
        valid_frac: a.valid_frac,
        num_contexts: ds.num_contexts(),
        num_items: ds.num_items(),
        rating_threshold: a.rating_threshold,
        min_interactions: a.min_interactions,
    };
    write_split(&a.out, &parts, &meta)?;
    println!(
        "contexts {} items {} interactions: train {} validation {} test {}",
        ds.num_contexts(),
        ds.num_items(),
        parts.train.num_interactions(),
        parts.validation.num_interactions(),
        parts.test.num_interactions()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let (file, paths) = match &a.config {
        Some(p) => {
            let mut t = config::read_table(p)?;
            let paths = config::take_paths(&mut t)?;
            (t, paths)
        }
        None => (Table::new(), config::FilePaths::default()),
    };
    let config = config::resolve(file, a.overrides())?;
    let data = data_dir(a.data.clone().or(paths.data))?;
    let out = a
        .out
        .clone()
        .or(paths.out)
        .ok_or_else(|| CliError::usage("no output directory: pass --out"))?;
    let resume = match a.resume.clone().or(paths.resume) {
        Some(p) => Some(existing(&p)?),
        None => None,
    };
    let threads = a.threads.or(paths.threads).unwrap_or(0);

    let split = load_split(&data)?;
    let init = match &resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            ckpt.expect_dims(split.train.num_contexts(), split.train.num_items())?;
            if ckpt.disc.dim() != config.dim || ckpt.gen.states() != config.states {
                return Err(CliError::usage(format!(
                    "checkpoint has dim {} and {} states, config asks for dim {} and {} states",
                    ckpt.disc.dim(),
                    ckpt.gen.states(),
                    config.dim,
                    config.states
                )));
            }
            Some(InitialState {
                disc: ckpt.disc,
                gen: ckpt.gen,
            })
        }
        None => None,
    };

    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, config::render(&config, &data, resume.as_deref(), threads))
        .map_err(|e| io_error(&config_path, e))?;

    let exec = setup_threads(threads);
    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_error(&log_path, e))?);
    let mut write_error = None;
    let outcome = train_with(&config, &split, init, exec, &mut |record| {
        let line = serde_json::to_string(record).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_error.get_or_insert(e);
        }
        match record.valid_ndcg {
            Some(v) => eprintln!("epoch {} loss {:.5} valid NDCG@{} {v:.5}", record.epoch, record.loss, config.eval_k),
            None => eprintln!("epoch {} loss {:.5}", record.epoch, record.loss),
        }
    })?;
    if let Some(e) = write_error {
        return Err(io_error(&log_path, e));
    }

    let hash = config.hash();
    let final_path = out.join("model.ckpt");
    save_checkpoint(&final_path, &Checkpoint::new(outcome.disc, outcome.gen.clone(), hash)?)?;
    if let Some(best) = outcome.best_disc {
        save_checkpoint(&out.join("best.ckpt"), &Checkpoint::new(best, outcome.gen, hash)?)?;
    }
    match (outcome.log.best_epoch, outcome.log.best_valid_ndcg) {
        (Some(e), Some(v)) => println!(
            "trained {} epochs; best validation NDCG@{} {v:.6} at epoch {e}; wrote {}",
            config.epochs,
            config.eval_k,
            out.display()
        ),
        _ => println!("trained {} epochs; wrote {}", config.epochs, out.display()),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::usage("k must be at least 1"));
    }
    let ckpt_path = existing(&a.checkpoint)?;
    let data = data_dir(a.data)?;
    let split = load_split(&data)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    ckpt.expect_dims(split.train.num_contexts(), split.train.num_items())?;
    let exec = setup_threads(a.threads);
    let report: EvalReport = match a.part {
        Part::Test => evaluate(&ckpt.disc, &split, a.k, !a.no_mask, exec),
        Part::Validation if a.no_mask => {
            sdgar_core::evaluator::evaluate_against(&ckpt.disc, &split.validation, &[], a.k, exec)
        }
        Part::Validation => evaluate_validation(&ckpt.disc, &split, a.k, exec),
    };
    let report_path = a.report.unwrap_or_else(|| {
        ckpt_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval_report.json")
    });
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, body + "\n").map_err(|e| io_error(&report_path, e))?;
    println!(
        "NDCG@{} {:.6} over {} contexts",
        report.k, report.mean_ndcg, report.num_evaluated
    );
    Ok(())
}

fn cmd_bench_sampler(a: BenchArgs) -> Result<(), CliError> {
    if a.grid.contains(&0) || a.states == 0 || a.contexts == 0 || a.draws == 0 {
        return Err(CliError::usage("grid sizes, states, contexts and draws must be positive"));
    }
    let settings = SamplerBenchSettings {
        contexts: a.contexts,
        states: a.states,
        alias_draws: a.draws,
        repeats: a.repeats.max(1),
        seed: a.seed,
        ..SamplerBenchSettings::default()
    };
    let rows = bench_sampler(&a.grid, &settings);
    println!("{:>10} {:>12} {:>12}", "items", "alias_ns", "naive_ns");
    for r in &rows {
        println!("{:>10} {:>12.2} {:>12.2}", r.items, r.alias_ns, r.naive_ns);
    }
    if let Some(path) = a.out {
        let body: String = rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect();
        fs::write(&path, body).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}
