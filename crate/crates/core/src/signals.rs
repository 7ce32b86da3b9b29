//! Test-signal generators and correlation models.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkit::{correlation_factor, DenseMatrix, RngStream};

/// `C[i][j] = α^|i-j|`.
///
/// Any `α` in the open unit interval is accepted; values at or below 0.5 only
/// log a warning since the intended range is `(0.5, 1)`.
pub fn exponential_correlation(n: usize, alpha: f64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::invalid("correlation size must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if alpha <= 0.5 {
        log::warn!("exponential correlation with alpha = {alpha} is outside the usual (0.5, 1) range");
    }
    let powers: Vec<f64> = (0..n).map(|d| alpha.powi(d as i32)).collect();
    Ok(DenseMatrix::from_fn(n, n, |i, j| powers[i.abs_diff(j)]))
}

/// `num_blocks` copies of `block` on the diagonal, zeros elsewhere.
pub fn block_diagonal_correlation(block: &DenseMatrix, num_blocks: usize) -> Result<DenseMatrix> {
    if !block.is_square() {
        return Err(Error::invalid("correlation block must be square"));
    }
    if num_blocks == 0 {
        return Err(Error::invalid("need at least one block"));
    }
    let l = block.rows();
    let n = l * num_blocks;
    let mut out = DenseMatrix::zeros(n, n);
    for b in 0..num_blocks {
        for i in 0..l {
            out.row_mut(b * l + i)[b * l..(b + 1) * l].copy_from_slice(block.row(i));
        }
    }
    Ok(out)
}

/// A `k`-sparse vector of length `n`: uniformly random distinct support,
/// i.i.d. standard normal values. The support is returned sorted.
pub fn random_sparse_signal(n: usize, k: usize, rng: RngStream) -> Result<(Vec<f64>, Vec<usize>)> {
    if k > n {
        return Err(Error::invalid(format!("sparsity {k} exceeds length {n}")));
    }
    let mut s = rng.sampler();
    let mut support = s.choose_distinct(n, k);
    support.sort_unstable();
    let mut x = vec![0.0; n];
    for &i in &support {
        x[i] = s.normal();
    }
    Ok((x, support))
}

/// Block-sparse vector: `active` distinct length-`l` blocks, each filled with
/// `F n` where `F Fᵀ = block_corr` and `n` is fresh white Gaussian noise.
/// Active block indices are returned sorted.
pub fn correlated_block_sparse_signal(
    n: usize,
    l: usize,
    active: usize,
    block_corr: &DenseMatrix,
    rng: RngStream,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if l == 0 || n % l != 0 {
        return Err(Error::invalid(format!("block length {l} must divide signal length {n}")));
    }
    if block_corr.shape() != (l, l) {
        return Err(Error::invalid(format!(
            "block correlation is {}x{}, expected {l}x{l}",
            block_corr.rows(),
            block_corr.cols()
        )));
    }
    let num_blocks = n / l;
    if active > num_blocks {
        return Err(Error::invalid(format!("{active} active blocks requested but only {num_blocks} exist")));
    }
    let factor = correlation_factor(block_corr)?;
    let mut s = rng.sampler();
    let mut blocks = s.choose_distinct(num_blocks, active);
    blocks.sort_unstable();
    let mut x = vec![0.0; n];
    for &b in &blocks {
        let white = s.normals(l);
        let coloured = factor.matvec(&white);
        x[b * l..(b + 1) * l].copy_from_slice(&coloured);
    }
    Ok((x, blocks))
}

/// HeaviSine on the grid `t_i = i / n`:
/// `4 sin(4πt) - sign(t - 0.3) - sign(0.72 - t)`.
pub fn heavisine(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("heavisine needs at least two samples"));
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            4.0 * (4.0 * PI * t).sin() - sgn(t - 0.3) - sgn(0.72 - t)
        })
        .collect())
}

fn sgn(v: f64) -> f64 {
    crate::numkit::sign(v)
}

/// Measurement noise level. `Noiseless` leaves measurements bit-identical.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snr {
    Noiseless,
    Db(f64),
}

/// Adds white Gaussian noise with per-sample variance
/// `‖y‖² / (M 10^(snr/10))`, so the expected measurement-domain SNR equals
/// `snr_db`.
pub fn add_noise_snr(y_clean: &[f64], snr: Snr, rng: RngStream) -> Result<Vec<f64>> {
    let energy: f64 = y_clean.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::invalid("SNR is undefined for an all-zero measurement vector"));
    }
    let db = match snr {
        Snr::Noiseless => return Ok(y_clean.to_vec()),
        Snr::Db(db) if db.is_finite() => db,
        Snr::Db(db) => return Err(Error::invalid(format!("SNR must be finite, got {db}"))),
    };
    let m = y_clean.len() as f64;
    let sd = (energy / (m * 10f64.powf(db / 10.0))).sqrt();
    let mut s = rng.sampler();
    Ok(y_clean.iter().map(|v| v + sd * s.normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::symmetric_eig;

    #[test]
    fn exponential_small_cases() {
        let c = exponential_correlation(2, 0.9).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 0.9, 0.9, 1.0]);
        let c3 = exponential_correlation(3, 0.9).unwrap();
        assert!((c3.get(0, 2) - 0.81).abs() < 1e-15);
        let c4 = exponential_correlation(4, 0.73).unwrap();
        assert_eq!(c4, c4.transpose());
        assert!(exponential_correlation(3, 1.0).is_err());
        assert!(exponential_correlation(3, 0.0).is_err());
        assert!(exponential_correlation(3, 0.3).is_ok());
    }

    #[test]
    fn exponential_is_psd() {
        for (n, alpha) in [(16, 0.6), (64, 0.9), (128, 0.99)] {
            let (_, l) = symmetric_eig(&exponential_correlation(n, alpha).unwrap()).unwrap();
            assert!(*l.last().unwrap() >= -1e-10, "n={n} alpha={alpha}");
        }
    }

    #[test]
    fn block_diagonal_layout() {
        let one = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(block_diagonal_correlation(&one, 3).unwrap(), DenseMatrix::identity(3));
        let blk = exponential_correlation(10, 0.99).unwrap();
        let total = block_diagonal_correlation(&blk, 50).unwrap();
        assert_eq!(total.shape(), (500, 500));
        assert_eq!(total.get(0, 10), 0.0);
        assert_eq!(total.get(10, 11), 0.99);
        assert!(total.is_symmetric(0.0));
    }

    #[test]
    fn sparse_signal_edges() {
        let (x, s) = random_sparse_signal(10, 0, RngStream::new(1, 1)).unwrap();
        assert!(x.iter().all(|&v| v == 0.0) && s.is_empty());
        let (x, s) = random_sparse_signal(10, 10, RngStream::new(1, 1)).unwrap();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert!(x.iter().all(|&v| v != 0.0));
        assert!(random_sparse_signal(3, 4, RngStream::new(0, 0)).is_err());
        let (x, _) = random_sparse_signal(500, 50, RngStream::new(4, 4)).unwrap();
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 50);
    }

    #[test]
    fn block_signal_edges() {
        let c = exponential_correlation(10, 0.99).unwrap();
        let (x, b) = correlated_block_sparse_signal(100, 10, 0, &c, RngStream::new(0, 0)).unwrap();
        assert!(x.iter().all(|&v| v == 0.0) && b.is_empty());
        assert!(correlated_block_sparse_signal(105, 10, 1, &c, RngStream::new(0, 0)).is_err());
        assert!(correlated_block_sparse_signal(100, 10, 11, &c, RngStream::new(0, 0)).is_err());
        let (x, b) = correlated_block_sparse_signal(100, 10, 4, &c, RngStream::new(3, 0)).unwrap();
        assert_eq!(b.len(), 4);
        for blk in 0..10 {
            let nz = x[blk * 10..(blk + 1) * 10].iter().filter(|v| **v != 0.0).count();
            assert_eq!(nz, if b.contains(&blk) { 10 } else { 0 });
        }
    }

    #[test]
    fn heavisine_values() {
        let s = heavisine(1024).unwrap();
        assert_eq!(s.len(), 1024);
        assert!((s[512] - (-2.0)).abs() < 1e-12);
        assert!(heavisine(1).is_err());
    }

    #[test]
    fn noise_edges() {
        let y = vec![1.0, -2.0, 0.5];
        assert_eq!(add_noise_snr(&y, Snr::Noiseless, RngStream::new(0, 0)).unwrap(), y);
        assert!(add_noise_snr(&[0.0, 0.0], Snr::Db(10.0), RngStream::new(0, 0)).is_err());
        assert!(add_noise_snr(&y, Snr::Db(f64::NAN), RngStream::new(0, 0)).is_err());
    }
}
