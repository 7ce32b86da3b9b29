//! Gradual atom pruning with a correlation prior.
//!
//! The value vector becomes a full matrix `X` and the estimate is `x = X γ`,
//! so column `j` of `X` lets an active atom `j` contribute to the samples it
//! is correlated with. The least-squares gradient is weighted entrywise by
//! the correlation matrix `C`, which keeps weakly correlated entries of `X`
//! out of the fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap::{check_dims, gamma_of, guard, num_levels, residual, sigma2_at, validate_schedule, SolveTrace, TraceRecord};
use crate::numkit::{norm1, norm2, sign, DenseMatrix};

/// How the ℓ1 gradient `sign(x) wᵀ` is applied to `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Weighting {
    /// Every entry of `X`, as the update is usually written.
    Unweighted,
    /// Entrywise product with `C`, like the least-squares term.
    Correlation,
}

/// Which entries of `C` weight the update of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMask {
    /// `C` as given. A row of `C` with a negative weighted sum turns the
    /// least-squares step for that sample uphill.
    Signed,
    /// `|C|`, identical to `Signed` for nonnegative correlations.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrGapConfig {
    pub sigma2_max: f64,
    pub sigma2_min: f64,
    pub tau: f64,
    pub beta: f64,
    pub max_inner: usize,
    pub mu_v2: f64,
    /// Constant ℓ1 step.
    pub mu_v1: f64,
    /// Detector step is `σ² · mu_d_scale`.
    pub mu_d_scale: f64,
    pub gamma_floor: f64,
    /// Cap on the ℓ1 column weight `1/γ - 1`.
    pub r_max: f64,
    /// Correlation entries with magnitude below this are treated as zero.
    pub c_truncate: f64,
    pub l1_weighting: L1Weighting,
    pub mask: CorrelationMask,
}

impl Default for CorrGapConfig {
    fn default() -> Self {
        Self {
            sigma2_max: 50.0,
            sigma2_min: 0.9,
            tau: 0.1,
            beta: 0.03,
            max_inner: 2000,
            mu_v2: 0.01,
            mu_v1: 1e-3,
            mu_d_scale: 1e-3,
            gamma_floor: 1e-12,
            r_max: 1e6,
            c_truncate: 1e-8,
            l1_weighting: L1Weighting::Correlation,
            mask: CorrelationMask::Magnitude,
        }
    }
}

impl CorrGapConfig {
    /// The published block-sparsity settings with the ℓ1 term applied to
    /// every entry of `X` and `C` used as given.
    pub fn published() -> Self {
        Self {
            beta: 0.1,
            mu_v1: 1e-5,
            mu_d_scale: 1e-2,
            l1_weighting: L1Weighting::Unweighted,
            mask: CorrelationMask::Signed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_schedule(self.sigma2_max, self.sigma2_min, self.tau)?;
        for (name, v) in [
            ("beta", self.beta),
            ("mu_v2", self.mu_v2),
            ("mu_v1", self.mu_v1),
            ("mu_d_scale", self.mu_d_scale),
            ("c_truncate", self.c_truncate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor.is_finite()) {
            return Err(Error::invalid("gamma_floor must be positive"));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::invalid("r_max must be positive"));
        }
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        num_levels(self.sigma2_max, self.sigma2_min, self.tau)
    }
}

/// Correlation matrix with small entries truncated, plus its row-wise
/// nonzero pattern.
#[derive(Debug, Clone)]
pub struct CorrelationPattern {
    n: usize,
    /// `(column, weight)` per row, columns ascending.
    rows: Vec<Vec<(usize, f64)>>,
}

impl CorrelationPattern {
    pub fn new(c: &DenseMatrix, truncate: f64) -> Result<Self> {
        Self::with_mask(c, truncate, CorrelationMask::Signed)
    }

    pub fn with_mask(c: &DenseMatrix, truncate: f64, mask: CorrelationMask) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::invalid("correlation matrix must be square"));
        }
        let scale = c.max_abs().max(1.0);
        if !c.is_symmetric(1e-10 * scale) {
            return Err(Error::invalid("correlation matrix must be symmetric"));
        }
        let rows = (0..c.rows())
            .map(|i| {
                c.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() >= truncate && **v != 0.0)
                    .map(|(j, &v)| match mask {
                        CorrelationMask::Signed => (j, v),
                        CorrelationMask::Magnitude => (j, v.abs()),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n: c.rows(), rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }
}

/// Solver state. `values` is the `N x N` matrix `X`.
#[derive(Debug, Clone)]
pub struct CorrGapState {
    pub values: DenseMatrix,
    pub detectors: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma2: f64,
    /// Current estimate `X γ`.
    pub estimate: Vec<f64>,
}

impl CorrGapState {
    pub fn initial(n: usize, sigma2: f64) -> Self {
        let mut st = Self {
            values: DenseMatrix::zeros(n, n),
            detectors: vec![-1.0; n],
            gamma: vec![0.0; n],
            sigma2,
            estimate: vec![0.0; n],
        };
        st.set_sigma2(sigma2, None);
        st
    }

    /// Recomputes `γ` for a new `σ²` and refreshes the estimate.
    pub fn set_sigma2(&mut self, sigma2: f64, pattern: Option<&CorrelationPattern>) {
        self.sigma2 = sigma2;
        for (g, &d) in self.gamma.iter_mut().zip(&self.detectors) {
            *g = gamma_of(d, sigma2);
        }
        self.refresh_estimate(pattern);
    }

    /// `x = X γ`, restricted to `pattern` when `X` is known to live on it.
    fn refresh_estimate(&mut self, pattern: Option<&CorrelationPattern>) {
        let gamma = &self.gamma;
        let values = &self.values;
        self.estimate = match pattern {
            Some(p) => p
                .rows
                .par_iter()
                .enumerate()
                .map(|(i, row)| {
                    let xr = values.row(i);
                    row.iter().map(|&(j, _)| xr[j] * gamma[j]).sum()
                })
                .collect(),
            None => (0..values.rows())
                .into_par_iter()
                .map(|i| crate::numkit::dot(values.row(i), gamma))
                .collect(),
        };
    }
}

/// `δ_d = -(Xᵀ sign(x)) ⊙ ((d - 1)/σ²) ⊙ γ`
pub fn corr_grad_detector(
    values: &DenseMatrix,
    estimate: &[f64],
    detectors: &[f64],
    gamma: &[f64],
    sigma2: f64,
) -> Result<Vec<f64>> {
    let n = detectors.len();
    if values.shape() != (n, n) || estimate.len() != n || gamma.len() != n {
        return Err(Error::invalid("corr_grad_detector: dimension mismatch"));
    }
    let signs: Vec<f64> = estimate.iter().map(|&v| sign(v)).collect();
    let xt_s = values.matvec_t(&signs);
    Ok(detector_from_projection(&xt_s, detectors, gamma, sigma2))
}

fn detector_from_projection(xt_s: &[f64], detectors: &[f64], gamma: &[f64], sigma2: f64) -> Vec<f64> {
    xt_s.iter()
        .zip(detectors)
        .zip(gamma)
        .map(|((p, d), g)| -p * ((d - 1.0) / sigma2) * g)
        .collect()
}

/// ℓ1 column weights `w_j = min(1/max(γ_j, floor) - 1, r_max)`.
pub fn l1_column_weights(gamma: &[f64], gamma_floor: f64, r_max: f64) -> Vec<f64> {
    gamma.iter().map(|&g| (1.0 / g.max(gamma_floor) - 1.0).min(r_max)).collect()
}

/// `sign(x) wᵀ` with `w` from [`l1_column_weights`] (default `γ` floor).
pub fn corr_grad_l1(estimate: &[f64], gamma: &[f64], r_max: f64) -> DenseMatrix {
    let w = l1_column_weights(gamma, CorrGapConfig::default().gamma_floor, r_max);
    let n = estimate.len();
    DenseMatrix::from_fn(n, n, |i, j| sign(estimate[i]) * w[j])
}

/// `-(Aᵀ(y - A x)) γᵀ`
pub fn corr_grad_lsq(a: &DenseMatrix, y: &[f64], estimate: &[f64], gamma: &[f64]) -> Result<DenseMatrix> {
    let n = estimate.len();
    check_dims(a, y, n)?;
    if gamma.len() != n {
        return Err(Error::invalid("gamma length differs from estimate length"));
    }
    let atr = a.matvec_t(&residual(a, y, estimate));
    Ok(DenseMatrix::from_fn(n, n, |i, j| -atr[i] * gamma[j]))
}

/// One inner iteration in place: gradients at the current state, then
/// `X ← X - μ_v2 (C ⊙ δ_v2) - μ_v1 δ_v1`, `d ← d + σ² μ_d δ_d`, and a refresh
/// of `γ` and `x`.
pub fn corr_update(
    state: &mut CorrGapState,
    pattern: &CorrelationPattern,
    cfg: &CorrGapConfig,
    a: &DenseMatrix,
    y: &[f64],
) -> Result<()> {
    let n = state.detectors.len();
    check_dims(a, y, n)?;
    if pattern.dim() != n {
        return Err(Error::invalid(format!("correlation is {0}x{0}, expected {n}x{n}", pattern.dim())));
    }
    let r = residual(a, y, &state.estimate);
    let atr = a.matvec_t(&r);
    step(state, pattern, cfg, &atr);
    Ok(())
}

fn step(state: &mut CorrGapState, pattern: &CorrelationPattern, cfg: &CorrGapConfig, atr: &[f64]) {
    let sigma2 = state.sigma2;
    let signs: Vec<f64> = state.estimate.iter().map(|&v| sign(v)).collect();
    let restricted = cfg.l1_weighting == L1Weighting::Correlation;

    // Xᵀ sign(x), rows accumulated in index order
    let n = signs.len();
    let mut xt_s = vec![0.0; n];
    for (i, &s) in signs.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let xr = state.values.row(i);
        if restricted {
            for &(j, _) in &pattern.rows[i] {
                xt_s[j] += s * xr[j];
            }
        } else {
            crate::numkit::axpy(s, xr, &mut xt_s);
        }
    }
    let grad_d = detector_from_projection(&xt_s, &state.detectors, &state.gamma, sigma2);
    let w = l1_column_weights(&state.gamma, cfg.gamma_floor, cfg.r_max);

    let gamma = &state.gamma;
    let (mu_v2, mu_v1) = (cfg.mu_v2, cfg.mu_v1);
    state
        .values
        .as_mut_slice()
        .par_chunks_mut(n)
        .zip(pattern.rows.par_iter())
        .enumerate()
        .for_each(|(i, (xr, prow))| {
            let ls = mu_v2 * atr[i];
            let shrink = mu_v1 * signs[i];
            if restricted {
                for &(j, c) in prow {
                    xr[j] += c * (ls * gamma[j] - shrink * w[j]);
                }
            } else {
                for &(j, c) in prow {
                    xr[j] += c * ls * gamma[j];
                }
                if shrink != 0.0 {
                    for (xj, wj) in xr.iter_mut().zip(&w) {
                        *xj -= shrink * wj;
                    }
                }
            }
        });

    let mu_d = sigma2 * cfg.mu_d_scale;
    for (d, g) in state.detectors.iter_mut().zip(&grad_d) {
        *d += mu_d * g;
    }
    for (g, &d) in state.gamma.iter_mut().zip(&state.detectors) {
        *g = gamma_of(d, sigma2);
    }
    state.refresh_estimate(restricted.then_some(pattern));
}

pub fn gap_corr_solve(
    a: &DenseMatrix,
    y: &[f64],
    c: &DenseMatrix,
    cfg: &CorrGapConfig,
) -> Result<(Vec<f64>, SolveTrace)> {
    gap_corr_solve_observed(a, y, c, cfg, |_| {})
}

/// As [`gap_corr_solve`], calling `observer` after every inner iteration.
pub fn gap_corr_solve_observed(
    a: &DenseMatrix,
    y: &[f64],
    c: &DenseMatrix,
    cfg: &CorrGapConfig,
    mut observer: impl FnMut(&CorrGapState),
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    let n = a.cols();
    check_dims(a, y, n)?;
    crate::numkit::check_finite(y, "measurements")?;
    if c.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "correlation is {}x{}, expected {n}x{n}",
            c.rows(),
            c.cols()
        )));
    }
    let pattern = CorrelationPattern::with_mask(c, cfg.c_truncate, cfg.mask)?;
    let restricted = cfg.l1_weighting == L1Weighting::Correlation;
    let mut st = CorrGapState::initial(n, cfg.sigma2_max);
    let mut trace = SolveTrace::default();

    for level in 0..cfg.num_levels() {
        let sigma2 = sigma2_at(cfg.sigma2_max, cfg.tau, level);
        st.set_sigma2(sigma2, restricted.then_some(&pattern));
        let mut r = residual(a, y, &st.estimate);
        let mut res_norm = norm2(&r);
        let threshold = cfg.beta * sigma2;
        let mut inner = 0;
        while res_norm > threshold && inner < cfg.max_inner {
            let atr = a.matvec_t(&r);
            step(&mut st, &pattern, cfg, &atr);
            guard("gapcorr", st.values.as_slice(), &st.detectors, level, inner, sigma2)?;
            r = residual(a, y, &st.estimate);
            res_norm = norm2(&r);
            inner += 1;
            observer(&st);
        }
        trace.records.push(TraceRecord {
            sigma2,
            inner_iters: inner,
            residual: res_norm,
            l1: norm1(&st.estimate),
            active_atoms: st.gamma.iter().filter(|&&g| g > 0.5).count(),
        });
    }
    Ok((st.estimate, trace))
}
