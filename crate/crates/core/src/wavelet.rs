//! Orthonormal multi-level Haar transform.
//!
//! Coefficient layout after `L` levels on a length-`N` signal:
//! `[a_L | d_L | d_{L-1} | ... | d_1]`, i.e. the coarsest averages first and
//! then the detail bands from coarse to fine. `d_j` has `N / 2^j` entries.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

pub const DEFAULT_LEVELS: usize = 3;

fn check(n: usize, levels: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("Haar length must be a power of two >= 2, got {n}")));
    }
    let max_levels = n.trailing_zeros() as usize;
    if levels == 0 || levels > max_levels {
        return Err(Error::invalid(format!(
            "Haar levels must be in 1..={max_levels} for length {n}, got {levels}"
        )));
    }
    Ok(())
}

pub fn haar_forward(signal: &[f64], levels: usize) -> Result<Vec<f64>> {
    check(signal.len(), levels)?;
    let mut out = signal.to_vec();
    let mut scratch = vec![0.0; signal.len()];
    let mut len = signal.len();
    for _ in 0..levels {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (out[2 * i], out[2 * i + 1]);
            scratch[i] = (a + b) * FRAC_1_SQRT_2;
            scratch[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        out[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
    Ok(out)
}

pub fn haar_inverse(coeffs: &[f64], levels: usize) -> Result<Vec<f64>> {
    check(coeffs.len(), levels)?;
    let n = coeffs.len();
    let mut out = coeffs.to_vec();
    let mut scratch = vec![0.0; n];
    let mut len = n >> (levels - 1);
    for _ in 0..levels {
        let half = len / 2;
        for i in 0..half {
            let (a, d) = (out[i], out[half + i]);
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        out[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
    Ok(out)
}

/// Analysis matrix `G` with `G s = haar_forward(s)`. The synthesis
/// dictionary is `Gᵀ`.
pub fn haar_analysis_matrix(n: usize, levels: usize) -> Result<DenseMatrix> {
    check(n, levels)?;
    let mut g = DenseMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for c in 0..n {
        unit[c] = 1.0;
        let col = haar_forward(&unit, levels)?;
        unit[c] = 0.0;
        for (r, v) in col.into_iter().enumerate() {
            g.set(r, c, v);
        }
    }
    Ok(g)
}

/// `G C Gᵀ`, symmetrized as `(R + Rᵀ)/2`.
pub fn transform_correlation(g: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    if !g.is_square() || !c.is_square() || g.cols() != c.rows() {
        return Err(Error::invalid(format!(
            "transform_correlation needs conformable square matrices, got {}x{} and {}x{}",
            g.rows(),
            g.cols(),
            c.rows(),
            c.cols()
        )));
    }
    let r = g.matmul(c)?.matmul(&g.transpose())?;
    let n = r.rows();
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (r.get(i, j) + r.get(j, i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{norm2, symmetric_eig, RngStream};
    use crate::signals::exponential_correlation;

    fn orthonormality_error(g: &DenseMatrix) -> f64 {
        g.matmul(&g.transpose())
            .unwrap()
            .max_abs_diff(&DenseMatrix::identity(g.rows()))
            .unwrap()
    }

    #[test]
    fn single_stage_butterfly() {
        let g = haar_analysis_matrix(2, 1).unwrap();
        let h = FRAC_1_SQRT_2;
        let expect = [h, h, h, -h];
        for (a, b) in g.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(orthonormality_error(&g) <= 1e-10);
    }

    #[test]
    fn coarsest_row_is_constant() {
        let g = haar_analysis_matrix(8, 3).unwrap();
        for v in g.row(0) {
            assert!((v - 1.0 / 8f64.sqrt()).abs() < 1e-15);
        }
        let ones = haar_forward(&[1.0; 8], 3).unwrap();
        assert!((ones[0] - 8f64.sqrt()).abs() < 1e-12);
        assert!(ones[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn orthonormal_for_several_sizes() {
        for (n, l) in [(8, 1), (8, 3), (64, 3), (64, 6), (256, 3)] {
            assert!(orthonormality_error(&haar_analysis_matrix(n, l).unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn constant_and_zero_signals() {
        for levels in 1..=4 {
            let c = haar_forward(&[2.5; 16], levels).unwrap();
            let coarse = 16 >> levels;
            // every coarsest-scale average equals c * sqrt(2^levels)
            for v in &c[..coarse] {
                assert!((v - 2.5 * ((1 << levels) as f64).sqrt()).abs() < 1e-12);
            }
            assert!(c[coarse..].iter().all(|v| v.abs() < 1e-12));
        }
        assert!(haar_forward(&[0.0; 32], 3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_of_coarse_impulse() {
        let mut c = vec![0.0; 8];
        c[0] = 8f64.sqrt();
        let s = haar_inverse(&c, 3).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fast_matches_matrix_and_roundtrips() {
        for n in [8usize, 64, 1024] {
            let g = if n <= 64 { Some(haar_analysis_matrix(n, 3).unwrap()) } else { None };
            let mut s = RngStream::new(n as u64, 0).sampler();
            for _ in 0..5 {
                let x = s.normals(n);
                let c = haar_forward(&x, 3).unwrap();
                if let Some(g) = &g {
                    for (a, b) in c.iter().zip(g.matvec(&x)) {
                        assert!((a - b).abs() <= 1e-10);
                    }
                }
                assert!((norm2(&c) - norm2(&x)).abs() <= 1e-10);
                let back = haar_inverse(&c, 3).unwrap();
                for (a, b) in back.iter().zip(&x) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn invalid_lengths() {
        assert!(haar_forward(&[1.0; 6], 1).is_err());
        assert!(haar_forward(&[1.0; 8], 4).is_err());
        assert!(haar_forward(&[1.0; 8], 0).is_err());
        assert!(haar_analysis_matrix(12, 2).is_err());
    }

    #[test]
    fn transform_correlation_cases() {
        let g = haar_analysis_matrix(8, 3).unwrap();
        let id = transform_correlation(&g, &DenseMatrix::identity(8)).unwrap();
        assert!(id.max_abs_diff(&DenseMatrix::identity(8)).unwrap() < 1e-12);
        let c = exponential_correlation(8, 0.9).unwrap();
        let same = transform_correlation(&DenseMatrix::identity(8), &c).unwrap();
        assert_eq!(same, c);
        let cg = transform_correlation(&g, &c).unwrap();
        assert!(cg.is_symmetric(0.0));
        assert!((cg.trace() - 8.0).abs() < 1e-10);
        let (_, l1) = symmetric_eig(&c).unwrap();
        let (_, l2) = symmetric_eig(&cg).unwrap();
        assert!(l2.last().unwrap() >= &-1e-10);
        for (a, b) in l1.iter().zip(&l2) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(transform_correlation(&g, &DenseMatrix::identity(4)).is_err());
    }
}
