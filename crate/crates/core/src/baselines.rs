//! Reference solvers: smoothed-ℓ0 (SL0), iterative hard thresholding (IHT),
//! and an exhaustive ℓ0 search for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap::check_dims;
use crate::numkit::{cholesky, cholesky_solve, norm2, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sl0Config {
    /// Initial σ as a multiple of `max |A⁺y|`.
    pub sigma_start_factor: f64,
    /// Geometric decrease of σ.
    pub sigma_ratio: f64,
    pub sigma_min: f64,
    /// Steepest-ascent iterations per σ.
    pub inner_iters: usize,
    pub step: f64,
}

impl Default for Sl0Config {
    fn default() -> Self {
        Self { sigma_start_factor: 2.0, sigma_ratio: 0.5, sigma_min: 1e-4, inner_iters: 3, step: 2.0 }
    }
}

impl Sl0Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_ratio > 0.0 && self.sigma_ratio < 1.0) {
            return Err(Error::invalid(format!("sigma_ratio must lie in (0, 1), got {}", self.sigma_ratio)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_start_factor > 0.0) {
            return Err(Error::invalid("sigma_min and sigma_start_factor must be positive"));
        }
        if !(self.step.is_finite() && self.step >= 0.0) {
            return Err(Error::invalid("step must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Projector onto `{x : A x = y}` built from the Cholesky factor of `A Aᵀ`.
struct AffineProjector<'a> {
    a: &'a DenseMatrix,
    chol: DenseMatrix,
}

impl<'a> AffineProjector<'a> {
    fn new(a: &'a DenseMatrix) -> Result<Self> {
        let chol = cholesky(&a.gram_rows())
            .ok_or_else(|| Error::invalid("A must have full row rank for the pseudo-inverse"))?;
        Ok(Self { a, chol })
    }

    /// `Aᵀ (A Aᵀ)⁻¹ v`
    fn pinv_apply(&self, v: &[f64]) -> Vec<f64> {
        self.a.matvec_t(&cholesky_solve(&self.chol, v))
    }

    /// `x - A⁺(A x - y)`
    fn project(&self, x: &mut [f64], y: &[f64]) {
        let ax = self.a.matvec(x);
        let r: Vec<f64> = ax.iter().zip(y).map(|(p, q)| p - q).collect();
        let corr = self.pinv_apply(&r);
        for (xi, ci) in x.iter_mut().zip(corr) {
            *xi -= ci;
        }
    }
}

/// Smoothed-ℓ0: ascend `Σ exp(-x²/(2σ²))` for a decreasing σ, projecting
/// back onto the feasible set after every step.
pub fn sl0_solve(a: &DenseMatrix, y: &[f64], cfg: &Sl0Config) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dims(a, y, a.cols())?;
    let proj = AffineProjector::new(a)?;
    let mut x = proj.pinv_apply(y);
    let max_abs = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut sigma = cfg.sigma_start_factor * max_abs;
    while sigma > cfg.sigma_min {
        let two_s2 = 2.0 * sigma * sigma;
        for _ in 0..cfg.inner_iters {
            for xi in x.iter_mut() {
                *xi -= cfg.step * *xi * (-*xi * *xi / two_s2).exp();
            }
            proj.project(&mut x, y);
        }
        sigma *= cfg.sigma_ratio;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IhtConfig {
    /// Number of entries kept per iteration. Zero lets the caller fill it in
    /// (the benchmark uses the planted sparsity).
    pub sparsity: usize,
    pub max_iters: usize,
    pub step: f64,
    /// Stop once the residual norm changes by less than `tol ‖y‖`.
    pub tol: f64,
}

impl Default for IhtConfig {
    fn default() -> Self {
        Self { sparsity: 0, max_iters: 5000, step: 0.5, tol: 1e-12 }
    }
}

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
pub fn hard_threshold(v: &mut [f64], k: usize) {
    if k >= v.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    for &i in &idx[k..] {
        v[i] = 0.0;
    }
}

/// `x ← H_k(x + μ Aᵀ(y - A x))` from `x = 0`.
pub fn iht_solve(a: &DenseMatrix, y: &[f64], cfg: &IhtConfig) -> Result<Vec<f64>> {
    let n = a.cols();
    check_dims(a, y, n)?;
    if cfg.sparsity == 0 || cfg.sparsity > n {
        return Err(Error::invalid(format!("IHT sparsity must be in 1..={n}, got {}", cfg.sparsity)));
    }
    let mut x = vec![0.0; n];
    let y_norm = norm2(y);
    if y_norm == 0.0 {
        return Ok(x);
    }
    let mut prev = y_norm;
    for iter in 0..cfg.max_iters {
        let ax = a.matvec(&x);
        let r: Vec<f64> = y.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let g = a.matvec_t(&r);
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi += cfg.step * gi;
        }
        hard_threshold(&mut x, cfg.sparsity);
        let res = norm2(&crate::gap::residual(a, y, &x));
        if !(res <= crate::gap::DIVERGENCE_LIMIT * y_norm) {
            return Err(Error::Divergence {
                solver: "iht",
                location: format!("iteration {iter}"),
                reason: format!("residual norm {res:e} is non-finite or exceeds {:e} ‖y‖", crate::gap::DIVERGENCE_LIMIT),
            });
        }
        if (prev - res).abs() < cfg.tol * y_norm {
            break;
        }
        prev = res;
    }
    Ok(x)
}

pub const L0_ORACLE_BUDGET: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive sparsest-support search.
///
/// Supports of size `1..=k_max` are scanned in increasing size; each is fit
/// by least squares and accepted when the residual is at most `1e-8 ‖y‖`.
/// Among accepted supports of the smallest size the one with the smallest
/// residual wins, then the lexicographically smallest.
pub fn l0_oracle_solve(a: &DenseMatrix, y: &[f64], k_max: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = a.cols();
    check_dims(a, y, n)?;
    let k_max = k_max.min(n);
    let candidates = binomial(n, k_max);
    if candidates > L0_ORACLE_BUDGET {
        return Err(Error::BudgetExceeded { candidates, budget: L0_ORACLE_BUDGET });
    }
    let y_norm = norm2(y);
    if y_norm == 0.0 {
        return Ok((vec![0.0; n], Vec::new()));
    }
    let tol = 1e-8 * y_norm;
    for size in 1..=k_max {
        let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        let mut support: Vec<usize> = (0..size).collect();
        loop {
            if let Some((coef, res)) = fit_support(a, y, &support) {
                let better = match &best {
                    None => true,
                    Some((r, _, _)) => res < *r,
                };
                if res <= tol && better {
                    best = Some((res, support.clone(), coef));
                }
            }
            if !next_combination(&mut support, n) {
                break;
            }
        }
        if let Some((_, support, coef)) = best {
            let mut x = vec![0.0; n];
            for (&i, c) in support.iter().zip(coef) {
                x[i] = c;
            }
            return Ok((x, support));
        }
    }
    Err(Error::Infeasible { k_max })
}

/// Least-squares coefficients on `support` and the residual norm, or `None`
/// when the selected columns are linearly dependent.
pub fn fit_support(a: &DenseMatrix, y: &[f64], support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let sub = a.select_columns(support);
    let gram = sub.transpose().matmul(&sub).ok()?;
    let chol = cholesky(&gram)?;
    let coef = cholesky_solve(&chol, &sub.matvec_t(y));
    let fitted = sub.matvec(&coef);
    let res = y.iter().zip(fitted).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    Some((coef, res))
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{gaussian_matrix_normalized, RngStream};
    use crate::signals::random_sparse_signal;

    #[test]
    fn sl0_zero_and_square() {
        let a = gaussian_matrix_normalized(10, 20, RngStream::new(1, 0)).unwrap();
        let x = sl0_solve(&a, &[0.0; 10], &Sl0Config::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));

        let sq = gaussian_matrix_normalized(6, 6, RngStream::new(2, 0)).unwrap();
        let truth = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let y = sq.matvec(&truth);
        let x = sl0_solve(&sq, &y, &Sl0Config::default()).unwrap();
        for (a, b) in x.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn sl0_output_is_feasible() {
        let a = gaussian_matrix_normalized(30, 60, RngStream::new(4, 0)).unwrap();
        let (x, _) = random_sparse_signal(60, 20, RngStream::new(4, 1)).unwrap();
        let y = a.matvec(&x);
        for cfg in [Sl0Config::default(), Sl0Config { sigma_ratio: 0.8, step: 1.0, ..Default::default() }] {
            let xh = sl0_solve(&a, &y, &cfg).unwrap();
            let r = norm2(&crate::gap::residual(&a, &y, &xh));
            assert!(r <= 1e-8 * norm2(&y));
        }
    }

    #[test]
    fn sl0_rank_deficient() {
        let a = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
        assert!(matches!(sl0_solve(&a, &[1.0, 2.0], &Sl0Config::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn iht_cases() {
        let a = gaussian_matrix_normalized(10, 20, RngStream::new(3, 0)).unwrap();
        let cfg = IhtConfig { sparsity: 3, ..Default::default() };
        assert!(iht_solve(&a, &[0.0; 10], &cfg).unwrap().iter().all(|&v| v == 0.0));

        let id = DenseMatrix::identity(4);
        let y = vec![1.0, -2.0, 3.0, 0.5];
        let one = IhtConfig { sparsity: 4, max_iters: 1, step: 1.0, tol: 0.0 };
        assert_eq!(iht_solve(&id, &y, &one).unwrap(), y);

        let bad = IhtConfig { sparsity: 0, ..Default::default() };
        assert!(iht_solve(&a, &[1.0; 10], &bad).is_err());
    }

    #[test]
    fn hard_threshold_ties_and_count() {
        let mut v = vec![1.0, -3.0, 3.0, 0.5, -1.0];
        hard_threshold(&mut v, 2);
        assert_eq!(v, vec![0.0, -3.0, 3.0, 0.0, 0.0]);
        let mut w = vec![1.0, 1.0, 1.0];
        hard_threshold(&mut w, 1);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn oracle_single_column() {
        let a = gaussian_matrix_normalized(5, 8, RngStream::new(9, 0)).unwrap();
        let y: Vec<f64> = a.col(4).iter().map(|v| 3.0 * v).collect();
        let (x, s) = l0_oracle_solve(&a, &y, 2).unwrap();
        assert_eq!(s, vec![4]);
        assert!((x[4] - 3.0).abs() < 1e-12);
        assert!(x.iter().enumerate().all(|(i, v)| i == 4 || *v == 0.0));
    }

    #[test]
    fn oracle_planted_pair() {
        for seed in 0..5 {
            let a = gaussian_matrix_normalized(10, 20, RngStream::new(seed, 0)).unwrap();
            let (x, support) = random_sparse_signal(20, 2, RngStream::new(seed, 1)).unwrap();
            let (xh, s) = l0_oracle_solve(&a, &a.matvec(&x), 3).unwrap();
            assert_eq!(s, support);
            for (p, q) in xh.iter().zip(&x) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_errors() {
        let a = gaussian_matrix_normalized(10, 20, RngStream::new(1, 0)).unwrap();
        let dense = a.matvec(&[1.0; 20]);
        assert!(matches!(l0_oracle_solve(&a, &dense, 2), Err(Error::Infeasible { k_max: 2 })));
        let big = gaussian_matrix_normalized(10, 200, RngStream::new(1, 0)).unwrap();
        assert!(matches!(l0_oracle_solve(&big, &[1.0; 10], 4), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(binomial(60, 3), 34_220);
    }
}
