//! Gradual atom pruning for uncorrelated sparse vectors.
//!
//! Each coefficient is written as `x_i = v_i γ_i` with a *value* `v_i` and
//! an oracle weight `γ_i = exp(-(d_i - 1)² / (2σ²))` driven by a *detector*
//! `d_i`. Values follow the gradient of the least-squares error plus an ℓ1
//! term, detectors follow the ℓ1 gradient, and `σ²` is annealed downward so
//! that detectors left behind at `-1` drive their `γ` toward zero and prune
//! the atom.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{norm1, norm2, sign, DenseMatrix};

/// State entries larger than this abort the solve.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapConfig {
    pub sigma2_max: f64,
    pub sigma2_min: f64,
    /// Decrement of `σ²` between outer levels.
    pub tau: f64,
    /// Inner loop runs while `‖A x̂ - y‖₂ > β σ²`.
    pub beta: f64,
    pub max_inner: usize,
    /// Least-squares step.
    pub mu_v2: f64,
    /// ℓ1 step is `σ² · mu_v1_scale / γ`.
    pub mu_v1_scale: f64,
    /// Detector step is `σ² · mu_d_scale`.
    pub mu_d_scale: f64,
    pub gamma_floor: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            sigma2_max: 10.0,
            sigma2_min: 1.0,
            tau: 0.1,
            beta: 0.01,
            max_inner: 2000,
            mu_v2: 0.01,
            mu_v1_scale: 4e-5,
            mu_d_scale: 1e-4,
            gamma_floor: 1e-12,
        }
    }
}

impl GapConfig {
    /// The published phase-transition settings verbatim: `β = 0.1` and an
    /// ℓ1 scale of `1e-4`.
    pub fn published() -> Self {
        Self { beta: 0.1, mu_v1_scale: 1e-4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        validate_schedule(self.sigma2_max, self.sigma2_min, self.tau)?;
        for (name, v) in [
            ("beta", self.beta),
            ("mu_v2", self.mu_v2),
            ("mu_v1_scale", self.mu_v1_scale),
            ("mu_d_scale", self.mu_d_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor.is_finite()) {
            return Err(Error::invalid("gamma_floor must be positive"));
        }
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        num_levels(self.sigma2_max, self.sigma2_min, self.tau)
    }
}

pub(crate) fn validate_schedule(max: f64, min: f64, tau: f64) -> Result<()> {
    if !(min > 0.0 && max > min && max.is_finite()) {
        return Err(Error::invalid(format!("need sigma2_max > sigma2_min > 0, got {max} and {min}")));
    }
    if !(tau > 0.0 && tau <= max - min) {
        return Err(Error::invalid(format!("tau must lie in (0, sigma2_max - sigma2_min], got {tau}")));
    }
    Ok(())
}

/// `⌈(max - min) / τ⌉`, robust to the representation error of `τ`.
pub(crate) fn num_levels(max: f64, min: f64, tau: f64) -> usize {
    let ratio = (max - min) / tau;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// `σ²` at outer level `j`, computed directly to avoid accumulated drift.
pub(crate) fn sigma2_at(max: f64, tau: f64, level: usize) -> f64 {
    max - level as f64 * tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sigma2: f64,
    pub inner_iters: usize,
    pub residual: f64,
    pub l1: f64,
    pub active_atoms: usize,
}

/// One record per outer level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub const CSV_HEADER: &'static str = "sigma2,inner_iters,residual,l1,active_atoms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{:?},{},{:?},{:?},{}\n",
                r.sigma2, r.inner_iters, r.residual, r.l1, r.active_atoms
            ));
        }
        out
    }

    pub fn total_inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }
}

/// Snapshot handed to observers after every inner iteration.
#[derive(Debug, Clone)]
pub struct GapState {
    pub values: Vec<f64>,
    pub detectors: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma2: f64,
}

impl GapState {
    pub fn estimate(&self) -> Vec<f64> {
        self.values.iter().zip(&self.gamma).map(|(v, g)| v * g).collect()
    }
}

pub fn gamma_weights(detectors: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(detectors.iter().map(|&d| gamma_of(d, sigma2)).collect())
}

#[inline]
pub(crate) fn gamma_of(detector: f64, sigma2: f64) -> f64 {
    let e = detector - 1.0;
    (-(e * e) / (2.0 * sigma2)).exp()
}

/// `∂‖x‖₁/∂d = -((d - 1)/σ²) |v| γ`
pub fn grad_detector(values: &[f64], detectors: &[f64], gamma: &[f64], sigma2: f64) -> Vec<f64> {
    values
        .iter()
        .zip(detectors)
        .zip(gamma)
        .map(|((v, d), g)| -((d - 1.0) / sigma2) * v.abs() * g)
        .collect()
}

/// The ℓ1 step `μ_v1 ⊙ sign(v) ⊙ γ` with `μ_v1 = σ² scale / γ`, in the
/// cancelled form `σ² scale sign(v)`, which stays defined when `γ`
/// underflows to zero.
pub fn grad_l1_effective(values: &[f64], sigma2: f64, mu_v1_scale: f64) -> Vec<f64> {
    let step = sigma2 * mu_v1_scale;
    values.iter().map(|&v| step * sign(v)).collect()
}

/// `∂‖y - A(v ⊙ γ)‖²/∂v = -2 Aᵀ(y - A x) ⊙ γ`
pub fn grad_lsq(a: &DenseMatrix, y: &[f64], values: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
    check_dims(a, y, values.len())?;
    if gamma.len() != values.len() {
        return Err(Error::invalid("gamma and values lengths differ"));
    }
    let x: Vec<f64> = values.iter().zip(gamma).map(|(v, g)| v * g).collect();
    let ax = a.matvec(&x);
    let r: Vec<f64> = y.iter().zip(&ax).map(|(yi, axi)| yi - axi).collect();
    let atr = a.matvec_t(&r);
    Ok(atr.iter().zip(gamma).map(|(t, g)| -2.0 * t * g).collect())
}

pub(crate) fn check_dims(a: &DenseMatrix, y: &[f64], n: usize) -> Result<()> {
    if a.rows() != y.len() {
        return Err(Error::invalid(format!(
            "A has {} rows but y has length {}",
            a.rows(),
            y.len()
        )));
    }
    if a.cols() != n {
        return Err(Error::invalid(format!("A has {} columns, expected {n}", a.cols())));
    }
    Ok(())
}

/// Runs the annealed solver and returns `x̂ = v ⊙ γ` with one trace record
/// per `σ²` level.
pub fn gap_solve(a: &DenseMatrix, y: &[f64], cfg: &GapConfig) -> Result<(Vec<f64>, SolveTrace)> {
    gap_solve_observed(a, y, cfg, |_| {})
}

/// As [`gap_solve`], calling `observer` after every inner iteration.
///
/// At the start of each level `γ` and `x̂` are refreshed for the new `σ²`
/// before the residual test, so a level whose refreshed estimate already
/// meets `β σ²` runs zero inner iterations.
pub fn gap_solve_observed(
    a: &DenseMatrix,
    y: &[f64],
    cfg: &GapConfig,
    mut observer: impl FnMut(&GapState),
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    let n = a.cols();
    check_dims(a, y, n)?;
    crate::numkit::check_finite(y, "measurements")?;

    let mut st = GapState {
        values: vec![0.0; n],
        detectors: vec![-1.0; n],
        gamma: vec![0.0; n],
        sigma2: cfg.sigma2_max,
    };
    let mut x = vec![0.0; n];
    let mut trace = SolveTrace::default();
    let levels = cfg.num_levels();

    for level in 0..levels {
        let sigma2 = sigma2_at(cfg.sigma2_max, cfg.tau, level);
        st.sigma2 = sigma2;
        refresh(&mut st, &mut x);
        let mut residual_vec = residual(a, y, &x);
        let mut res_norm = norm2(&residual_vec);
        let threshold = cfg.beta * sigma2;
        let mu_d = sigma2 * cfg.mu_d_scale;
        let l1_step = sigma2 * cfg.mu_v1_scale;

        let mut inner = 0;
        while res_norm > threshold && inner < cfg.max_inner {
            let atr = a.matvec_t(&residual_vec);
            for i in 0..n {
                let v = st.values[i];
                let g = st.gamma[i];
                let d = st.detectors[i];
                // δ_v2 = -2 Aᵀr ⊙ γ, δ_d = -((d-1)/σ²)|v|γ
                let grad_v2 = -2.0 * atr[i] * g;
                let grad_d = -((d - 1.0) / sigma2) * v.abs() * g;
                st.values[i] = v - cfg.mu_v2 * grad_v2 - l1_step * sign(v);
                st.detectors[i] = d + mu_d * grad_d;
            }
            refresh(&mut st, &mut x);
            guard("gap", &st.values, &st.detectors, level, inner, sigma2)?;
            residual_vec = residual(a, y, &x);
            res_norm = norm2(&residual_vec);
            inner += 1;
            observer(&st);
        }

        trace.records.push(TraceRecord {
            sigma2,
            inner_iters: inner,
            residual: res_norm,
            l1: norm1(&x),
            active_atoms: st.gamma.iter().filter(|&&g| g > 0.5).count(),
        });
    }
    Ok((x, trace))
}

fn refresh(st: &mut GapState, x: &mut [f64]) {
    for i in 0..st.values.len() {
        let g = gamma_of(st.detectors[i], st.sigma2);
        st.gamma[i] = g;
        x[i] = st.values[i] * g;
    }
}

pub(crate) fn residual(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    y.iter().zip(ax).map(|(yi, axi)| yi - axi).collect()
}

pub(crate) fn guard(
    solver: &'static str,
    values: &[f64],
    detectors: &[f64],
    level: usize,
    iteration: usize,
    sigma2: f64,
) -> Result<()> {
    let bad = values
        .iter()
        .chain(detectors)
        .find(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT);
    match bad {
        Some(v) => Err(Error::Divergence {
            solver,
            location: format!("level {level} (sigma2 = {sigma2}), inner iteration {iteration}"),
            reason: format!("state entry {v:e} is non-finite or exceeds {DIVERGENCE_LIMIT:e}"),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{gaussian_matrix_normalized, RngStream};

    #[test]
    fn gamma_cases() {
        assert_eq!(gamma_weights(&[1.0], 3.0).unwrap(), vec![1.0]);
        let g = gamma_weights(&[-1.0], 10.0).unwrap()[0];
        assert!((g - (-0.2f64).exp()).abs() < 1e-15);
        assert!((g - 0.818731).abs() < 1e-6);
        let tiny = gamma_weights(&[-1.0], 0.01).unwrap()[0];
        assert!(tiny.is_finite() && (0.0..1e-80).contains(&tiny));
        assert!(gamma_weights(&[0.0], 0.0).is_err());
        assert!(gamma_weights(&[0.0], -1.0).is_err());
    }

    #[test]
    fn detector_gradient_cases() {
        assert_eq!(grad_detector(&[0.0, 0.0], &[-1.0, 0.3], &[0.8, 0.9], 2.0), vec![0.0, 0.0]);
        assert_eq!(grad_detector(&[3.0], &[1.0], &[1.0], 2.0), vec![0.0]);
        let g = (-0.2f64).exp();
        let d = grad_detector(&[2.0], &[-1.0], &[g], 10.0)[0];
        assert!((d - 0.4 * g).abs() < 1e-15);
        assert!((d - 0.327492).abs() < 1e-6);
    }

    #[test]
    fn l1_step_cases() {
        assert_eq!(grad_l1_effective(&[0.0], 10.0, 1e-4), vec![0.0]);
        let v = grad_l1_effective(&[-3.0], 10.0, 1e-4)[0];
        assert!((v + 1e-3).abs() < 1e-18);
        // cross-check with the uncancelled product at a clamped gamma
        let gamma = 1e-12_f64;
        let uncancelled = (10.0 * 1e-4 / gamma) * sign(-3.0) * gamma;
        assert!((v - uncancelled).abs() < 1e-15);
    }

    #[test]
    fn lsq_gradient_cases() {
        let a = gaussian_matrix_normalized(4, 6, RngStream::new(3, 0)).unwrap();
        let y = vec![1.0, -0.5, 0.25, 2.0];
        let at_y = a.matvec_t(&y);
        let g = grad_lsq(&a, &y, &[0.0; 6], &[1.0; 6]).unwrap();
        for (gi, ti) in g.iter().zip(&at_y) {
            assert!((gi + 2.0 * ti).abs() < 1e-14);
        }
        let z = grad_lsq(&a, &y, &[1.0; 6], &[0.0; 6]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(grad_lsq(&a, &[1.0; 3], &[0.0; 6], &[1.0; 6]).is_err());
    }

    #[test]
    fn zero_measurements_stay_zero() {
        let a = gaussian_matrix_normalized(5, 10, RngStream::new(1, 0)).unwrap();
        let (x, trace) = gap_solve(&a, &[0.0; 5], &GapConfig::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(trace.records.len(), 90);
        assert_eq!(trace.total_inner_iters(), 0);
    }

    #[test]
    fn level_counts() {
        assert_eq!(GapConfig::default().num_levels(), 90);
        assert_eq!(num_levels(50.0, 0.9, 0.1), 491);
        assert_eq!(num_levels(1.0, 0.0 + 0.25, 0.3), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = GapConfig::default();
        c.sigma2_min = 20.0;
        assert!(c.validate().is_err());
        let mut c = GapConfig::default();
        c.tau = 100.0;
        assert!(c.validate().is_err());
        let mut c = GapConfig::default();
        c.mu_v2 = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let a = DenseMatrix::zeros(3, 4);
        assert!(matches!(gap_solve(&a, &[0.0; 2], &GapConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let a = gaussian_matrix_normalized(10, 20, RngStream::new(2, 0)).unwrap();
        let y = a.matvec(&[1.0; 20]);
        let cfg = GapConfig { mu_v2: 50.0, mu_d_scale: 0.0, beta: 0.0, ..GapConfig::default() };
        assert!(matches!(gap_solve(&a, &y, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn csv_header() {
        let t = SolveTrace {
            records: vec![TraceRecord { sigma2: 10.0, inner_iters: 3, residual: 0.5, l1: 1.0, active_atoms: 2 }],
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("sigma2,inner_iters,residual,l1,active_atoms\n10.0,3,0.5,1.0,2\n"));
    }
}
