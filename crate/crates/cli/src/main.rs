use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use convex_tomo::metrics::Metrics;
use convex_tomo::pipeline::{Pipeline, PipelineConfig, SweepParameter};
use toml::{Table, Value};

const THREADS_ENV: &str = "CONVEX_TOMO_THREADS";

/// Travel-time tomography by convexification: synthetic data, inversion and
/// evaluation, one stage at a time or all at once.
#[derive(Parser)]
#[command(name = "convex-tomo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the phantom on the fast-marching lattice.
    Phantom(Common),
    /// Compute first-arrival times for every source.
    Forward(Common),
    /// Add noise to the travel times.
    Noise(Common),
    /// Project the boundary data onto the basis.
    Project(Common),
    /// Minimize the weighted functional and recover the medium.
    Reconstruct(Common),
    /// Compare the recovered index with the phantom.
    Evaluate(Common),
    /// Write VTK volumes and mid-plane slices.
    Export(Common),
    /// Run every stage in order.
    Run(Common),
    /// Reconstruct for several values of one parameter.
    Sweep {
        /// `lambda` or `order` (alias `N`).
        parameter: String,
        /// Comma-separated values; may be empty.
        #[arg(value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML); built-in defaults otherwise.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(short, long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    sources: Option<u64>,
    #[arg(long)]
    detector_step: Option<f64>,
    #[arg(long)]
    forward_step: Option<f64>,
    #[arg(long)]
    inversion_h: Option<f64>,
    /// Truncation order N.
    #[arg(long, short = 'N')]
    order: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<u64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Any other key, e.g. `phantom.kind=letter` or `noise_mode=per-detector`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Failures before any stage runs exit with 1, stage failures with 2.
enum Failure {
    Usage(anyhow::Error),
    Stage(anyhow::Error),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

type Action = Box<dyn FnOnce(&Pipeline) -> Result<()>>;

fn execute(command: Command) -> std::result::Result<(), Failure> {
    configure_threads().map_err(Failure::Usage)?;
    let (common, action): (Common, Action) = match command {
        Command::Config(common) => {
            let config = load_config(&common).map_err(Failure::Usage)?;
            print!("{}", config.to_toml());
            return Ok(());
        }
        Command::Sweep {
            parameter,
            values,
            common,
        } => {
            let p = SweepParameter::from_name(&parameter)
                .with_context(|| format!("cannot sweep `{parameter}`; use `lambda` or `order`"))
                .map_err(Failure::Usage)?;
            (
                common,
                Box::new(move |pl: &Pipeline| {
                    print!("{}", pl.sweep(p, &values)?.to_text());
                    Ok(())
                }),
            )
        }
        Command::Phantom(c) => (c, Box::new(|p: &Pipeline| Ok(p.phantom()?))),
        Command::Forward(c) => (c, Box::new(|p: &Pipeline| Ok(p.forward()?))),
        Command::Noise(c) => (c, Box::new(|p: &Pipeline| Ok(p.noise()?))),
        Command::Project(c) => (c, Box::new(|p: &Pipeline| Ok(p.project()?))),
        Command::Reconstruct(c) => (c, Box::new(|p: &Pipeline| Ok(p.reconstruct().map(|_| ())?))),
        Command::Evaluate(c) => (c, Box::new(|p: &Pipeline| print_metrics(&p.evaluate()?))),
        Command::Export(c) => (c, Box::new(|p: &Pipeline| Ok(p.export()?))),
        Command::Run(c) => (c, Box::new(|p: &Pipeline| print_metrics(&p.run()?))),
    };
    let config = load_config(&common).map_err(Failure::Usage)?;
    let pipeline = Pipeline::new(config, &common.out).map_err(|e| Failure::Usage(e.into()))?;
    action(&pipeline).map_err(Failure::Stage)
}

fn print_metrics(m: &Metrics) -> Result<()> {
    print!("{}", toml::to_string(m)?);
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("{THREADS_ENV}={value} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot configure the thread pool")
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut table = match &common.config {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    let flags: [(&str, Option<Value>); 11] = [
        ("sources", common.sources.map(|v| Value::Integer(v as i64))),
        ("detector_step", common.detector_step.map(Value::Float)),
        ("forward_step", common.forward_step.map(Value::Float)),
        ("inversion_h", common.inversion_h.map(Value::Float)),
        ("order", common.order.map(|v| Value::Integer(v as i64))),
        ("lambda", common.lambda.map(Value::Float)),
        ("beta", common.beta.map(Value::Float)),
        ("delta", common.delta.map(Value::Float)),
        ("seed", common.seed.map(|v| Value::Integer(v as i64))),
        ("max_iter", common.max_iter.map(|v| Value::Integer(v as i64))),
        ("grad_tol", common.grad_tol.map(Value::Float)),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            table.insert(key.into(), v);
        }
    }
    for assignment in &common.set {
        let (key, raw) = assignment
            .split_once('=')
            .with_context(|| format!("`--set {assignment}` is not of the form KEY=VALUE"))?;
        insert_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let config: PipelineConfig = Value::Table(table).try_into().context("invalid configuration")?;
    config.validate().context("invalid configuration")?;
    Ok(config)
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("cannot parse {}", path.display()))
}

/// A TOML literal, or a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
            Ok(())
        }
        Some((head, rest)) => {
            let entry = table.entry(head.to_string()).or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(inner) => insert_path(inner, rest, value),
                _ => bail!("`{head}` is not a table"),
            }
        }
    }
}
