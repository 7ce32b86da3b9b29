//! Experiment runners, metrics, and result tables.
//!
//! Every trial is generated from a stream derived from the master seed and
//! the trial's coordinates, so results do not depend on how many workers
//! execute them or in which order they finish.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{iht_solve, l0_oracle_solve, sl0_solve, IhtConfig, Sl0Config};
use crate::error::{Error, Result};
use crate::gap::{gap_solve, GapConfig};
use crate::gapcorr::{gap_corr_solve, CorrGapConfig};
use crate::numkit::{gaussian_matrix_normalized, DenseMatrix, RngStream};
use crate::signals::{
    add_noise_snr, block_diagonal_correlation, correlated_block_sparse_signal, exponential_correlation, heavisine,
    random_sparse_signal, Snr,
};
use crate::wavelet::{haar_analysis_matrix, haar_inverse, transform_correlation};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 1e-3;

/// `‖x_true - x_hat‖² / ‖x_true‖²`
pub fn distortion(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::invalid(format!(
            "distortion: lengths {} and {} differ",
            x_true.len(),
            x_hat.len()
        )));
    }
    let energy: f64 = x_true.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::invalid("distortion is undefined for an all-zero reference"));
    }
    let err: f64 = x_true.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gap,
    GapCorr,
    Sl0,
    Iht,
    L0Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Gap, Algorithm::GapCorr, Algorithm::Sl0, Algorithm::Iht, Algorithm::L0Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gap => "gap",
            Algorithm::GapCorr => "gapcorr",
            Algorithm::Sl0 => "sl0",
            Algorithm::Iht => "iht",
            Algorithm::L0Oracle => "l0oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}; expected one of gap, gapcorr, sl0, iht, l0oracle")))
    }
}

/// Parameters for every solver an experiment may run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub gap: GapConfig,
    pub gapcorr: CorrGapConfig,
    pub sl0: Sl0Config,
    /// A zero `sparsity` means "use the instance's sparsity".
    pub iht: IhtConfig,
    /// Largest support the ℓ0 oracle tries; `None` uses the instance's
    /// sparsity.
    pub l0_k_max: Option<usize>,
}

/// A single recovery problem handed to the solvers.
pub struct Instance<'a> {
    pub a: &'a DenseMatrix,
    pub y: &'a [f64],
    /// Correlation prior for `gapcorr`; identity when absent.
    pub correlation: Option<&'a DenseMatrix>,
    /// Sparsity used by `iht` and `l0oracle` when not configured.
    pub sparsity: usize,
}

/// Runs `algo` on `inst`.
pub fn run_solver(algo: Algorithm, inst: &Instance<'_>, s: &SolverSettings) -> Result<Vec<f64>> {
    let n = inst.a.cols();
    match algo {
        Algorithm::Gap => gap_solve(inst.a, inst.y, &s.gap).map(|(x, _)| x),
        Algorithm::GapCorr => match inst.correlation {
            Some(c) => gap_corr_solve(inst.a, inst.y, c, &s.gapcorr).map(|(x, _)| x),
            None => gap_corr_solve(inst.a, inst.y, &DenseMatrix::identity(n), &s.gapcorr).map(|(x, _)| x),
        },
        Algorithm::Sl0 => sl0_solve(inst.a, inst.y, &s.sl0),
        Algorithm::Iht => {
            let mut cfg = s.iht.clone();
            if cfg.sparsity == 0 {
                cfg.sparsity = inst.sparsity.min(n);
            }
            iht_solve(inst.a, inst.y, &cfg)
        }
        Algorithm::L0Oracle => {
            let k = s.l0_k_max.unwrap_or(inst.sparsity).min(n);
            l0_oracle_solve(inst.a, inst.y, k).map(|(x, _)| x)
        }
    }
}

/// `+∞` is written as the string `"inf"` so the JSON stays standard.
mod distortion_value {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid distortion {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub algorithm: Algorithm,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Nonzero count, or active blocks for block experiments.
    pub k: usize,
    pub seed: u64,
    /// `+∞` when the solver failed.
    #[serde(with = "distortion_value")]
    pub distortion: f64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmAggregate {
    pub algorithm: Algorithm,
    pub failures: usize,
    /// Solver errors, counted as failures and left out of the mean.
    pub errors: usize,
    pub failure_probability: f64,
    /// Mean over trials that returned an estimate; `None` if none did.
    pub mean_distortion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Values of the swept parameters, in the order of `sweep_columns`.
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub aggregates: Vec<AlgorithmAggregate>,
}

/// Which aggregate the CSV reports per algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FailureProbability,
    MeanDistortion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// `reference` or an algorithm name.
    pub label: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub schema_version: u32,
    pub experiment: String,
    pub sweep_columns: Vec<String>,
    pub metric: Metric,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub master_seed: u64,
    pub threshold: f64,
    /// The fully resolved experiment configuration.
    pub config: serde_json::Value,
    pub rows: Vec<SweepRow>,
    pub records: Vec<TrialRecord>,
    /// Reference and reconstructed signals, for experiments that emit them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reconstructions: Vec<Reconstruction>,
    /// Wall-clock seconds per record, parallel to `records`. Not part of
    /// the reproducible output.
    #[serde(skip)]
    pub wall_times: Vec<f64>,
}

impl ExperimentTable {
    pub fn row(&self, values: &[f64]) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.values == values)
    }

    pub fn aggregate(&self, values: &[f64], algo: Algorithm) -> Option<&AlgorithmAggregate> {
        self.row(values)?.aggregates.iter().find(|a| a.algorithm == algo)
    }

    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = self.sweep_columns.clone();
        header.extend(self.algorithms.iter().map(|a| a.name().to_string()));
        header.extend(self.algorithms.iter().map(|a| format!("{a}_errors")));
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut cells: Vec<String> = row.values.iter().map(|v| format_param(*v)).collect();
            match &row.skipped {
                Some(_) => cells.extend(std::iter::repeat("skipped".to_string()).take(2 * self.algorithms.len())),
                None => {
                    for agg in &row.aggregates {
                        cells.push(match self.metric {
                            Metric::FailureProbability => format!("{:.6}", agg.failure_probability),
                            Metric::MeanDistortion => match agg.mean_distortion {
                                Some(d) => format!("{d:.6e}"),
                                None => "inf".to_string(),
                            },
                        });
                    }
                    cells.extend(row.aggregates.iter().map(|a| a.errors.to_string()));
                }
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                what: "experiment table".into(),
                msg: format!("unsupported schema_version {}", t.schema_version),
            });
        }
        Ok(t)
    }
}

fn format_param(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Paths written by [`write_table`] for a CSV path `p`: `p`, `p` with a
/// `.json` extension, and `<stem>.timings.csv`.
pub fn sidecar_paths(csv: &Path) -> (PathBuf, PathBuf) {
    let json = csv.with_extension("json");
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let timings = csv.with_file_name(format!("{stem}.timings.csv"));
    (json, timings)
}

/// Writes the CSV summary, the JSON sidecar, and a separate wall-time file.
pub fn write_table(table: &ExperimentTable, path: &Path) -> Result<()> {
    let (json, timings) = sidecar_paths(path);
    std::fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))?;
    std::fs::write(&json, table.to_json()?).map_err(|e| Error::io(&json, e))?;
    let mut t = String::from("point,trial,algorithm,wall_time_s\n");
    for (r, w) in table.records.iter().zip(&table.wall_times) {
        t.push_str(&format!("{},{},{},{w:.6}\n", r.point, r.trial, r.algorithm));
    }
    std::fs::write(&timings, t).map_err(|e| Error::io(&timings, e))?;
    Ok(())
}

pub fn read_table(json_path: &Path) -> Result<ExperimentTable> {
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    ExperimentTable::from_json(&text)
}

/// Writes `index,reference,<algo>...` rows for experiments with reconstructions.
pub fn write_reconstructions(table: &ExperimentTable, path: &Path) -> Result<()> {
    let Some(len) = table.reconstructions.first().map(|r| r.samples.len()) else {
        return Ok(());
    };
    let mut out = String::from("index");
    for r in &table.reconstructions {
        out.push(',');
        out.push_str(&r.label);
    }
    out.push('\n');
    for i in 0..len {
        out.push_str(&i.to_string());
        for r in &table.reconstructions {
            out.push_str(&format!(",{:?}", r.samples[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Worker pool for trials.
#[derive(Debug, Clone, Copy)]
pub struct Runner {
    pub workers: usize,
}

impl Default for Runner {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

impl Runner {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    /// Maps `f` over `jobs` on the pool and returns results in job order.
    fn map<J: Sync, R: Send>(&self, jobs: &[J], f: impl Fn(&J) -> R + Sync + Send) -> Result<Vec<R>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
    }
}

/// Outcome of one algorithm on one trial.
struct Outcome {
    record: TrialRecord,
    wall: f64,
    estimate: Option<Vec<f64>>,
}

struct TrialSetup {
    point: usize,
    trial: usize,
    n: usize,
    m: usize,
    k: usize,
    seed: u64,
}

fn evaluate(
    setup: &TrialSetup,
    algo: Algorithm,
    inst: &Instance<'_>,
    solvers: &SolverSettings,
    threshold: f64,
    reference: &[f64],
    map_estimate: impl Fn(Vec<f64>) -> Result<Vec<f64>>,
) -> Outcome {
    let start = Instant::now();
    let result = run_solver(algo, inst, solvers).and_then(map_estimate);
    let wall = start.elapsed().as_secs_f64();
    let (distortion, error, estimate) = match result.and_then(|x| distortion(reference, &x).map(|d| (d, x))) {
        Ok((d, x)) if d.is_finite() => (d, None, Some(x)),
        Ok(_) => (f64::INFINITY, Some("non-finite estimate".to_string()), None),
        Err(e) => {
            log::debug!("{algo} failed on point {} trial {}: {e}", setup.point, setup.trial);
            (f64::INFINITY, Some(e.to_string()), None)
        }
    };
    Outcome {
        record: TrialRecord {
            point: setup.point,
            trial: setup.trial,
            algorithm: algo,
            n: setup.n,
            m: setup.m,
            k: setup.k,
            seed: setup.seed,
            distortion,
            success: distortion <= threshold,
            error,
        },
        wall,
        estimate,
    }
}

fn aggregate(algorithms: &[Algorithm], records: &[TrialRecord], trials: usize) -> Vec<AlgorithmAggregate> {
    algorithms
        .iter()
        .map(|&algo| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.algorithm == algo).collect();
            let failures = mine.iter().filter(|r| !r.success).count();
            let errors = mine.iter().filter(|r| r.error.is_some()).count();
            let finite: Vec<f64> = mine.iter().filter(|r| r.error.is_none()).map(|r| r.distortion).collect();
            let mean_distortion = if finite.is_empty() {
                None
            } else {
                Some(finite.iter().sum::<f64>() / finite.len() as f64)
            };
            AlgorithmAggregate {
                algorithm: algo,
                failures,
                errors,
                failure_probability: failures as f64 / trials as f64,
                mean_distortion,
            }
        })
        .collect()
}

fn skipped_row(values: Vec<f64>, algorithms: &[Algorithm], note: &str) -> SweepRow {
    SweepRow {
        values,
        skipped: Some(note.to_string()),
        aggregates: algorithms
            .iter()
            .map(|&algorithm| AlgorithmAggregate {
                algorithm,
                failures: 0,
                errors: 0,
                failure_probability: 0.0,
                mean_distortion: None,
            })
            .collect(),
    }
}

fn check_common(trials: usize, algorithms: &[Algorithm], threshold: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if algorithms.is_empty() {
        return Err(Error::invalid("need at least one algorithm"));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("failure threshold must be nonnegative, got {threshold}")));
    }
    Ok(())
}

// stream tags keep each experiment's instances disjoint
const TAG_PHASE: u64 = 1;
const TAG_BLOCK: u64 = 3;
const TAG_WAVELET: u64 = 4;
const TAG_NOISE: u64 = 5;

fn instance_streams(seed: u64, tag: u64, key: u64, trial: usize) -> (RngStream, RngStream) {
    (
        RngStream::derived(seed, &[tag, key, trial as u64, 0]),
        RngStream::derived(seed, &[tag, key, trial as u64, 1]),
    )
}

/// Sparse-recovery sweep over the number of nonzeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub threshold: f64,
    pub algorithms: Vec<Algorithm>,
    pub solvers: SolverSettings,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 250,
            k_values: (1..=15).map(|i| 10 * i).collect(),
            trials: 100,
            threshold: DEFAULT_FAILURE_THRESHOLD,
            algorithms: vec![Algorithm::Gap, Algorithm::Sl0, Algorithm::Iht],
            solvers: SolverSettings::default(),
        }
    }
}

/// Noisy sweep over SNR at fixed sparsity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub k_values: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Replace the SNR grid with a single noiseless point.
    pub noiseless: bool,
    pub trials: usize,
    pub threshold: f64,
    pub algorithms: Vec<Algorithm>,
    pub solvers: SolverSettings,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 250,
            k_values: vec![15, 90],
            snr_db: (1..=8).map(|i| 5.0 * i as f64).collect(),
            noiseless: false,
            trials: 100,
            threshold: DEFAULT_FAILURE_THRESHOLD,
            algorithms: vec![Algorithm::Gap, Algorithm::Sl0, Algorithm::Iht],
            solvers: SolverSettings::default(),
        }
    }
}

/// Correlated block-sparse sweep over the number of active blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockCorrConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub active_blocks: Vec<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub threshold: f64,
    pub algorithms: Vec<Algorithm>,
    pub solvers: SolverSettings,
}

impl Default for BlockCorrConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 250,
            l: 10,
            active_blocks: (1..=15).collect(),
            alpha: 0.99,
            trials: 100,
            threshold: DEFAULT_FAILURE_THRESHOLD,
            algorithms: vec![Algorithm::GapCorr, Algorithm::Sl0, Algorithm::Iht],
            solvers: SolverSettings::default(),
        }
    }
}

/// Least-squares step for `gapcorr` in the Haar domain. Rows of the
/// transformed correlation sum to well over 100 in magnitude, so the block
/// default of 0.01 is unstable there.
pub const WAVELET_GAPCORR_MU_V2: f64 = 1e-3;

/// HeaviSine recovery in the Haar domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub levels: usize,
    pub alpha: f64,
    pub trials: usize,
    pub threshold: f64,
    /// Sparsity handed to `iht` and `l0oracle`; zero means `M / 4`.
    pub sparsity: usize,
    pub algorithms: Vec<Algorithm>,
    pub solvers: SolverSettings,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            m: 330,
            levels: crate::wavelet::DEFAULT_LEVELS,
            alpha: 0.99,
            trials: 1,
            threshold: DEFAULT_FAILURE_THRESHOLD,
            sparsity: 0,
            algorithms: vec![Algorithm::GapCorr, Algorithm::Sl0],
            solvers: SolverSettings {
                gapcorr: CorrGapConfig { mu_v2: WAVELET_GAPCORR_MU_V2, ..CorrGapConfig::default() },
                ..SolverSettings::default()
            },
        }
    }
}

fn config_value<T: Serialize>(cfg: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

struct Collected {
    rows: Vec<SweepRow>,
    records: Vec<TrialRecord>,
    wall_times: Vec<f64>,
}

/// Runs `trial(point, t)` for every live point and trial and aggregates
/// in (point, trial) order.
fn collect(
    runner: &Runner,
    points: &[(Vec<f64>, Option<&str>)],
    trials: usize,
    algorithms: &[Algorithm],
    trial: impl Fn(usize, usize) -> Result<Vec<Outcome>> + Sync + Send,
) -> Result<Collected> {
    let jobs: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .filter(|(_, (_, skip))| skip.is_none())
        .flat_map(|(p, _)| (0..trials).map(move |t| (p, t)))
        .collect();
    let results = runner.map(&jobs, |&(p, t)| trial(p, t))?;
    let mut by_point: Vec<Vec<Outcome>> = (0..points.len()).map(|_| Vec::new()).collect();
    for (&(p, _), res) in jobs.iter().zip(results) {
        by_point[p].extend(res?);
    }
    let mut out = Collected { rows: Vec::new(), records: Vec::new(), wall_times: Vec::new() };
    for ((values, skip), outcomes) in points.iter().zip(by_point) {
        if let Some(note) = skip {
            out.rows.push(skipped_row(values.clone(), algorithms, note));
            continue;
        }
        let records: Vec<TrialRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
        out.rows.push(SweepRow { values: values.clone(), skipped: None, aggregates: aggregate(algorithms, &records, trials) });
        out.wall_times.extend(outcomes.iter().map(|o| o.wall));
        out.records.extend(records);
    }
    Ok(out)
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("N and M must be positive"));
    }
    Ok(())
}

/// Failure probability versus number of nonzeros, noiseless.
pub fn phase_transition(cfg: &PhaseConfig, master_seed: u64, runner: &Runner) -> Result<ExperimentTable> {
    check_common(cfg.trials, &cfg.algorithms, cfg.threshold)?;
    check_sizes(cfg.n, cfg.m)?;
    if let Some(&k) = cfg.k_values.iter().find(|&&k| k > cfg.n) {
        return Err(Error::invalid(format!("k = {k} exceeds N = {}", cfg.n)));
    }
    let points: Vec<(Vec<f64>, Option<&str>)> = cfg
        .k_values
        .iter()
        .map(|&k| (vec![k as f64], (k == 0).then_some("zero signal")))
        .collect();
    let collected = collect(runner, &points, cfg.trials, &cfg.algorithms, |p, t| {
        sparse_trial(cfg.n, cfg.m, cfg.k_values[p], None, p, t, master_seed, &cfg.algorithms, &cfg.solvers, cfg.threshold)
    })?;
    Ok(ExperimentTable {
        schema_version: SCHEMA_VERSION,
        experiment: "phase".into(),
        sweep_columns: vec!["k".into()],
        metric: Metric::FailureProbability,
        algorithms: cfg.algorithms.clone(),
        trials: cfg.trials,
        master_seed,
        threshold: cfg.threshold,
        config: config_value(cfg)?,
        rows: collected.rows,
        records: collected.records,
        reconstructions: Vec::new(),
        wall_times: collected.wall_times,
    })
}

/// One sparse trial. The `(A, x)` pair depends only on `(seed, k, trial)`,
/// so noiseless stability points reproduce the phase experiment.
#[allow(clippy::too_many_arguments)]
fn sparse_trial(
    n: usize,
    m: usize,
    k: usize,
    snr: Option<(usize, Snr)>,
    point: usize,
    trial: usize,
    seed: u64,
    algorithms: &[Algorithm],
    solvers: &SolverSettings,
    threshold: f64,
) -> Result<Vec<Outcome>> {
    let (sa, sx) = instance_streams(seed, TAG_PHASE, k as u64, trial);
    let a = gaussian_matrix_normalized(m, n, sa)?;
    let (x, _) = random_sparse_signal(n, k, sx)?;
    let clean = a.matvec(&x);
    let y = match snr {
        None | Some((_, Snr::Noiseless)) => clean,
        Some((idx, level)) => {
            add_noise_snr(&clean, level, RngStream::derived(seed, &[TAG_NOISE, k as u64, idx as u64, trial as u64]))?
        }
    };
    let inst = Instance { a: &a, y: &y, correlation: None, sparsity: k };
    let setup = TrialSetup { point, trial, n, m, k, seed };
    Ok(algorithms
        .iter()
        .map(|&algo| evaluate(&setup, algo, &inst, solvers, threshold, &x, Ok))
        .collect())
}

/// Mean distortion versus SNR for each sparsity level.
pub fn stability_sweep(cfg: &StabilityConfig, master_seed: u64, runner: &Runner) -> Result<ExperimentTable> {
    check_common(cfg.trials, &cfg.algorithms, cfg.threshold)?;
    check_sizes(cfg.n, cfg.m)?;
    if let Some(&k) = cfg.k_values.iter().find(|&&k| k > cfg.n) {
        return Err(Error::invalid(format!("k = {k} exceeds N = {}", cfg.n)));
    }
    let levels: Vec<Snr> = if cfg.noiseless {
        vec![Snr::Noiseless]
    } else {
        if let Some(bad) = cfg.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("SNR values must be finite, got {bad}")));
        }
        cfg.snr_db.iter().map(|&d| Snr::Db(d)).collect()
    };
    let mut coords = Vec::new();
    let mut points = Vec::new();
    for &k in &cfg.k_values {
        for (i, &level) in levels.iter().enumerate() {
            let values = match level {
                Snr::Noiseless => vec![k as f64],
                Snr::Db(d) => vec![k as f64, d],
            };
            coords.push((k, i, level));
            points.push((values, (k == 0).then_some("zero signal")));
        }
    }
    let collected = collect(runner, &points, cfg.trials, &cfg.algorithms, |p, t| {
        let (k, i, level) = coords[p];
        sparse_trial(cfg.n, cfg.m, k, Some((i, level)), p, t, master_seed, &cfg.algorithms, &cfg.solvers, cfg.threshold)
    })?;
    Ok(ExperimentTable {
        schema_version: SCHEMA_VERSION,
        experiment: "stability".into(),
        sweep_columns: if cfg.noiseless { vec!["k".into()] } else { vec!["k".into(), "snr_db".into()] },
        metric: Metric::MeanDistortion,
        algorithms: cfg.algorithms.clone(),
        trials: cfg.trials,
        master_seed,
        threshold: cfg.threshold,
        config: config_value(cfg)?,
        rows: collected.rows,
        records: collected.records,
        reconstructions: Vec::new(),
        wall_times: collected.wall_times,
    })
}

/// Mean distortion versus number of active correlated blocks.
pub fn block_corr_experiment(cfg: &BlockCorrConfig, master_seed: u64, runner: &Runner) -> Result<ExperimentTable> {
    check_common(cfg.trials, &cfg.algorithms, cfg.threshold)?;
    check_sizes(cfg.n, cfg.m)?;
    if cfg.l == 0 || cfg.n % cfg.l != 0 {
        return Err(Error::invalid(format!("block length {} must divide N = {}", cfg.l, cfg.n)));
    }
    let block = exponential_correlation(cfg.l, cfg.alpha)?;
    let total = block_diagonal_correlation(&block, cfg.n / cfg.l)?;
    let points: Vec<(Vec<f64>, Option<&str>)> = cfg
        .active_blocks
        .iter()
        .map(|&b| (vec![b as f64], (b == 0).then_some("zero signal")))
        .collect();
    let collected = collect(runner, &points, cfg.trials, &cfg.algorithms, |p, t| {
        let active = cfg.active_blocks[p];
        let (sa, sx) = instance_streams(master_seed, TAG_BLOCK, active as u64, t);
        let a = gaussian_matrix_normalized(cfg.m, cfg.n, sa)?;
        let (x, _) = correlated_block_sparse_signal(cfg.n, cfg.l, active, &block, sx)?;
        let y = a.matvec(&x);
        let inst = Instance { a: &a, y: &y, correlation: Some(&total), sparsity: active * cfg.l };
        let setup = TrialSetup { point: p, trial: t, n: cfg.n, m: cfg.m, k: active, seed: master_seed };
        Ok(cfg
            .algorithms
            .iter()
            .map(|&algo| evaluate(&setup, algo, &inst, &cfg.solvers, cfg.threshold, &x, Ok))
            .collect())
    })?;
    Ok(ExperimentTable {
        schema_version: SCHEMA_VERSION,
        experiment: "blockcorr".into(),
        sweep_columns: vec!["active_blocks".into()],
        metric: Metric::MeanDistortion,
        algorithms: cfg.algorithms.clone(),
        trials: cfg.trials,
        master_seed,
        threshold: cfg.threshold,
        config: config_value(cfg)?,
        rows: collected.rows,
        records: collected.records,
        reconstructions: Vec::new(),
        wall_times: collected.wall_times,
    })
}

/// HeaviSine measured through a Gaussian matrix and recovered in the Haar
/// domain; distortion is reported in the time domain. The first trial's
/// reconstructions are kept in the table.
pub fn wavelet_experiment(cfg: &WaveletConfig, master_seed: u64, runner: &Runner) -> Result<ExperimentTable> {
    check_common(cfg.trials, &cfg.algorithms, cfg.threshold)?;
    check_sizes(cfg.n, cfg.m)?;
    let g = haar_analysis_matrix(cfg.n, cfg.levels)?;
    let synthesis = g.transpose();
    let c_g = transform_correlation(&g, &exponential_correlation(cfg.n, cfg.alpha)?)?;
    let s = heavisine(cfg.n)?;
    let sparsity = if cfg.sparsity == 0 { (cfg.m / 4).max(1) } else { cfg.sparsity };
    let levels = cfg.levels;

    let jobs: Vec<usize> = (0..cfg.trials).collect();
    let results = runner.map(&jobs, |&t| -> Result<Vec<Outcome>> {
        let (sa, _) = instance_streams(master_seed, TAG_WAVELET, cfg.m as u64, t);
        let phi = gaussian_matrix_normalized(cfg.m, cfg.n, sa)?;
        let a = phi.matmul(&synthesis)?;
        let y = phi.matvec(&s);
        let inst = Instance { a: &a, y: &y, correlation: Some(&c_g), sparsity };
        let setup = TrialSetup { point: 0, trial: t, n: cfg.n, m: cfg.m, k: sparsity, seed: master_seed };
        Ok(cfg
            .algorithms
            .iter()
            .map(|&algo| evaluate(&setup, algo, &inst, &cfg.solvers, cfg.threshold, &s, |x| haar_inverse(&x, levels)))
            .collect())
    })?;
    let mut outcomes = Vec::new();
    for r in results {
        outcomes.extend(r?);
    }
    let mut reconstructions = vec![Reconstruction { label: "reference".into(), samples: s.clone() }];
    for o in outcomes.iter().filter(|o| o.record.trial == 0) {
        if let Some(est) = &o.estimate {
            reconstructions.push(Reconstruction { label: o.record.algorithm.name().into(), samples: est.clone() });
        }
    }
    let records: Vec<TrialRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let rows = vec![SweepRow {
        values: vec![cfg.m as f64],
        skipped: None,
        aggregates: aggregate(&cfg.algorithms, &records, cfg.trials),
    }];
    Ok(ExperimentTable {
        schema_version: SCHEMA_VERSION,
        experiment: "wavelet".into(),
        sweep_columns: vec!["M".into()],
        metric: Metric::MeanDistortion,
        algorithms: cfg.algorithms.clone(),
        trials: cfg.trials,
        master_seed,
        threshold: cfg.threshold,
        config: config_value(cfg)?,
        rows,
        records,
        reconstructions,
        wall_times: outcomes.iter().map(|o| o.wall).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distortion_cases() {
        assert_eq!(distortion(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(distortion(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(distortion(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(distortion(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(distortion(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("lasso".parse::<Algorithm>().is_err());
    }

    #[test]
    fn inf_distortion_serializes_as_string() {
        let r = TrialRecord {
            point: 0,
            trial: 0,
            algorithm: Algorithm::Iht,
            n: 4,
            m: 2,
            k: 1,
            seed: 9,
            distortion: f64::INFINITY,
            success: false,
            error: Some("diverged".into()),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"distortion\":\"inf\""));
        let back: TrialRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn zero_sparsity_is_skipped() {
        let cfg = PhaseConfig { n: 20, m: 10, k_values: vec![0], trials: 1, ..PhaseConfig::default() };
        let t = phase_transition(&cfg, 1, &Runner::default()).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.rows[0].skipped.as_deref(), Some("zero signal"));
        assert!(t.to_csv().lines().nth(1).unwrap().contains("skipped"));
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let cfg = PhaseConfig { n: 20, m: 10, k_values: vec![], trials: 1, ..PhaseConfig::default() };
        let t = phase_transition(&cfg, 1, &Runner::default()).unwrap();
        assert_eq!(t.to_csv(), "k,gap,sl0,iht,gap_errors,sl0_errors,iht_errors\n");
    }

    #[test]
    fn invalid_configs() {
        let runner = Runner::default();
        let bad_k = PhaseConfig { n: 5, m: 3, k_values: vec![6], ..PhaseConfig::default() };
        assert!(phase_transition(&bad_k, 0, &runner).is_err());
        let no_trials = PhaseConfig { trials: 0, ..PhaseConfig::default() };
        assert!(phase_transition(&no_trials, 0, &runner).is_err());
        let bad_l = BlockCorrConfig { n: 25, l: 10, ..BlockCorrConfig::default() };
        assert!(block_corr_experiment(&bad_l, 0, &runner).is_err());
        let bad_n = WaveletConfig { n: 100, ..WaveletConfig::default() };
        assert!(wavelet_experiment(&bad_n, 0, &runner).is_err());
    }
}
