//! `atomprune` command-line front end.

mod config;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use atomprune::bench::{
    block_corr_experiment, phase_transition, run_solver, stability_sweep, wavelet_experiment, write_reconstructions,
    write_table, Algorithm, BlockCorrConfig, ExperimentTable, Instance, PhaseConfig, Runner, SolverSettings,
    StabilityConfig, WaveletConfig,
};
use atomprune::gap::gap_solve;
use atomprune::gapcorr::gap_corr_solve;
use atomprune::numkit::io::{read_matrix, read_vector, write_matrix, write_vector};
use atomprune::numkit::{gaussian_matrix_normalized, DenseMatrix, RngStream};
use atomprune::signals::{
    add_noise_snr, block_diagonal_correlation, correlated_block_sparse_signal, exponential_correlation,
    random_sparse_signal, Snr,
};

use config::{describe_defaults, read_config_file, resolve, ConfigError};

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "atomprune", version, about = "Sparse recovery by gradual atom pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random problem instance (A.txt, y.txt, x.txt and, for block
    /// instances, C.txt)
    Gen(Common),
    /// Run solvers on an instance directory and write estimates and traces
    Solve {
        #[command(flatten)]
        common: Common,
        /// Directory holding A.txt and y.txt, plus optional x.txt and C.txt
        #[arg(long, default_value = ".")]
        instance: PathBuf,
    },
    /// Failure probability versus number of nonzeros
    Phase(Common),
    /// Mean distortion versus measurement SNR
    Stability(Common),
    /// Mean distortion versus number of active correlated blocks
    Blockcorr(Common),
    /// HeaviSine recovery in the Haar domain
    Wavelet(Common),
    /// Run the built-in invariant checks
    Selftest(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file, or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated algorithms: gap, gapcorr, sl0, iht, l0oracle
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    /// Worker threads for experiment trials
    #[arg(long, env = "ATOMPRUNE_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Parameter override with a dotted key, e.g. gap.mu_v2=0.02
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

const DEFAULT_SEED: u64 = 0;

enum Failure {
    Usage(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<atomprune::Error> for Failure {
    fn from(e: atomprune::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Instance generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenConfig {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    /// Nonzeros, or active blocks when `block_length > 0`.
    k: usize,
    /// Zero gives an unstructured sparse signal.
    block_length: usize,
    alpha: f64,
    /// Measurement SNR in dB; `null` for noiseless.
    snr_db: Option<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { n: 60, m: 30, k: 3, block_length: 0, alpha: 0.99, snr_db: None }
    }
}

/// Solver parameters for `solve`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolveConfig {
    /// Sparsity for iht and l0oracle; zero takes the nonzero count of x.txt.
    sparsity: usize,
    solvers: SolverSettings,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

/// The clap command with each subcommand's parameter defaults appended to
/// its help.
fn command() -> clap::Command {
    let with = |cmd: clap::Command, name: &str, text: String| cmd.mut_subcommand(name, |c| c.after_help(text));
    let cmd = Cli::command();
    let cmd = with(cmd, "gen", describe_defaults::<GenConfig>());
    let cmd = with(cmd, "solve", describe_defaults::<SolveConfig>());
    let cmd = with(cmd, "phase", describe_defaults::<PhaseConfig>());
    let cmd = with(cmd, "stability", describe_defaults::<StabilityConfig>());
    let cmd = with(cmd, "blockcorr", describe_defaults::<BlockCorrConfig>());
    with(cmd, "wavelet", describe_defaults::<WaveletConfig>())
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Gen(c) => gen(&c),
        Command::Solve { common, instance } => solve(&common, &instance),
        Command::Phase(c) => experiment::<PhaseConfig>(&c, "phase", |cfg, seed, r| phase_transition(cfg, seed, r)),
        Command::Stability(c) => {
            experiment::<StabilityConfig>(&c, "stability", |cfg, seed, r| stability_sweep(cfg, seed, r))
        }
        Command::Blockcorr(c) => {
            experiment::<BlockCorrConfig>(&c, "blockcorr", |cfg, seed, r| block_corr_experiment(cfg, seed, r))
        }
        Command::Wavelet(c) => experiment::<WaveletConfig>(&c, "wavelet", |cfg, seed, r| wavelet_experiment(cfg, seed, r)),
        Command::Selftest(_) => {
            if selftest::run() {
                Ok(())
            } else {
                Err(Failure::Run("self-test failed".into()))
            }
        }
    }
}

/// Resolves the configuration and seed for `subcommand`.
/// `--algo` is folded into the config as `algorithms` when `algo_key` is set.
fn load<T: Serialize + serde::de::DeserializeOwned + Default>(
    c: &Common,
    subcommand: &str,
    algo_key: bool,
) -> CliResult<(T, u64)> {
    let (file, file_seed) = match &c.config {
        Some(p) => {
            let f = read_config_file(p, subcommand)?;
            (Some(f.config), f.seed)
        }
        None => (None, None),
    };
    let mut sets: Vec<String> = c.sets.iter().map(|s| alias_solver_key(s)).collect();
    if algo_key && !c.algo.is_empty() {
        let names: Vec<Value> = c.algo.iter().map(|a| Value::String(a.trim().to_string())).collect();
        sets.push(format!("algorithms={}", Value::Array(names)));
    }
    let cfg = resolve::<T>(file, &sets)?;
    Ok((cfg, c.seed.or(file_seed).unwrap_or(DEFAULT_SEED)))
}

/// Lets `gap.mu_v2=...` stand for `solvers.gap.mu_v2=...`.
fn alias_solver_key(assignment: &str) -> String {
    let head = assignment.split(['.', '=']).next().unwrap_or_default();
    if ["gap", "gapcorr", "sl0", "iht", "l0_k_max"].contains(&head) {
        format!("solvers.{assignment}")
    } else {
        assignment.to_string()
    }
}

fn parse_algorithms(names: &[String]) -> CliResult<Vec<Algorithm>> {
    names
        .iter()
        .map(|n| n.trim().parse::<Algorithm>().map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))
}

fn write_manifest<T: Serialize>(dir: &Path, subcommand: &str, seed: u64, cfg: &T) -> CliResult<()> {
    let manifest = json!({
        "tool": "atomprune",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "seed": seed,
        "config": serde_json::to_value(cfg).map_err(|e| Failure::Run(e.to_string()))?,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Run(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn experiment<T>(
    c: &Common,
    name: &str,
    runner_fn: impl Fn(&T, u64, &Runner) -> atomprune::Result<ExperimentTable>,
) -> CliResult<()>
where
    T: Serialize + serde::de::DeserializeOwned + Default,
{
    let (cfg, seed) = load::<T>(c, name, true)?;
    create_dir(&c.out)?;
    write_manifest(&c.out, name, seed, &cfg)?;
    log::info!("running {name} with seed {seed} on {} worker(s)", c.workers.max(1));
    let table = runner_fn(&cfg, seed, &Runner::new(c.workers))?;
    let csv = c.out.join(format!("{name}.csv"));
    write_table(&table, &csv)?;
    if !table.reconstructions.is_empty() {
        write_reconstructions(&table, &c.out.join(format!("{name}_signals.csv")))?;
    }
    log::info!("wrote {}", csv.display());
    print!("{}", table.to_csv());
    Ok(())
}

fn gen(c: &Common) -> CliResult<()> {
    let (cfg, seed) = load::<GenConfig>(c, "gen", false)?;
    if cfg.n == 0 || cfg.m == 0 {
        return Err(Failure::Usage("N and M must be positive".into()));
    }
    let a = gaussian_matrix_normalized(cfg.m, cfg.n, RngStream::derived(seed, &[0]))?;
    let (x, correlation) = if cfg.block_length == 0 {
        (random_sparse_signal(cfg.n, cfg.k, RngStream::derived(seed, &[1]))?.0, None)
    } else {
        if cfg.n % cfg.block_length != 0 {
            return Err(Failure::Usage("block_length must divide N".into()));
        }
        let block = exponential_correlation(cfg.block_length, cfg.alpha)?;
        let x = correlated_block_sparse_signal(cfg.n, cfg.block_length, cfg.k, &block, RngStream::derived(seed, &[1]))?.0;
        (x, Some(block_diagonal_correlation(&block, cfg.n / cfg.block_length)?))
    };
    let clean = a.matvec(&x);
    let y = match cfg.snr_db {
        None => clean,
        Some(db) => add_noise_snr(&clean, Snr::Db(db), RngStream::derived(seed, &[2]))?,
    };
    create_dir(&c.out)?;
    write_manifest(&c.out, "gen", seed, &cfg)?;
    write_matrix(&c.out.join("A.txt"), &a)?;
    write_vector(&c.out.join("y.txt"), &y)?;
    write_vector(&c.out.join("x.txt"), &x)?;
    if let Some(cm) = &correlation {
        write_matrix(&c.out.join("C.txt"), cm)?;
    }
    println!("{}", json!({"N": cfg.n, "M": cfg.m, "k": cfg.k, "out": c.out.display().to_string()}));
    Ok(())
}

fn solve(c: &Common, instance: &Path) -> CliResult<()> {
    let (cfg, seed) = load::<SolveConfig>(c, "solve", false)?;
    let algorithms = if c.algo.is_empty() { vec![Algorithm::Gap] } else { parse_algorithms(&c.algo)? };
    let a = read_matrix(&instance.join("A.txt"))?;
    let y = read_vector(&instance.join("y.txt"))?;
    let x_true = optional(&instance.join("x.txt"), read_vector)?;
    let corr = optional(&instance.join("C.txt"), read_matrix)?;
    let sparsity = match (cfg.sparsity, &x_true) {
        (0, Some(x)) => x.iter().filter(|v| **v != 0.0).count(),
        (0, None) => (a.rows() / 4).max(1),
        (k, _) => k,
    };
    create_dir(&c.out)?;
    write_manifest(&c.out, "solve", seed, &cfg)?;
    let inst = Instance { a: &a, y: &y, correlation: corr.as_ref(), sparsity };
    for algo in algorithms {
        log::info!("solving with {algo}");
        let x_hat = solve_one(algo, &inst, &cfg.solvers, &c.out)?;
        write_vector(&c.out.join(format!("{algo}_xhat.txt")), &x_hat)?;
        let distortion = match &x_true {
            Some(x) if x.iter().any(|v| *v != 0.0) => json!(atomprune::bench::distortion(x, &x_hat)?),
            _ => Value::Null,
        };
        println!("{}", json!({"algorithm": algo.name(), "distortion": distortion}));
    }
    Ok(())
}

/// Runs one solver, writing a per-level trace for the annealed ones.
fn solve_one(algo: Algorithm, inst: &Instance<'_>, s: &SolverSettings, out: &Path) -> CliResult<Vec<f64>> {
    let trace = match algo {
        Algorithm::Gap => Some(gap_solve(inst.a, inst.y, &s.gap)?),
        Algorithm::GapCorr => {
            let identity;
            let c = match inst.correlation {
                Some(c) => c,
                None => {
                    identity = DenseMatrix::identity(inst.a.cols());
                    &identity
                }
            };
            Some(gap_corr_solve(inst.a, inst.y, c, &s.gapcorr)?)
        }
        _ => None,
    };
    match trace {
        Some((x, t)) => {
            let path = out.join(format!("{algo}_trace.csv"));
            std::fs::write(&path, t.to_csv()).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
            Ok(x)
        }
        None => Ok(run_solver(algo, inst, s)?),
    }
}

fn optional<T>(path: &Path, read: impl Fn(&Path) -> atomprune::Result<T>) -> CliResult<Option<T>> {
    if path.exists() {
        Ok(Some(read(path)?))
    } else {
        Ok(None)
    }
}
