use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const PSD_TOL: f64 = 1e-10;

/// Symmetric eigendecomposition `C = Q diag(λ) Qᵀ` by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order with the columns of `Q`
/// permuted to match. Iteration stops once the off-diagonal Frobenius mass
/// drops below `1e-12 ‖C‖_F`.
pub fn symmetric_eig(c: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    if !c.is_square() {
        return Err(Error::invalid(format!(
            "symmetric_eig needs a square matrix, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let scale = c.max_abs().max(1.0);
    if !c.is_symmetric(SYMMETRY_TOL * scale) {
        return Err(Error::invalid("symmetric_eig needs a symmetric matrix"));
    }
    let n = c.rows();
    let mut a = c.clone();
    let mut v = DenseMatrix::identity(n);
    let target = OFF_DIAG_TOL * c.frobenius();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                rotate(&mut a, &mut v, p, q, cs, sn, t, apq);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals = a.diag();
    order.sort_by(|&i, &j| evals[j].total_cmp(&evals[i]));
    let lambda: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let q = DenseMatrix::from_fn(n, n, |r, col| v.get(r, order[col]));
    Ok((q, lambda))
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = a.rows();
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let nkp = c * akp - s * akq;
        let nkq = s * akp + c * akq;
        a.set(k, p, nkp);
        a.set(p, k, nkp);
        a.set(k, q, nkq);
        a.set(q, k, nkq);
    }
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// `Q diag(λ) Qᵀ`
pub fn reconstruct(q: &DenseMatrix, lambda: &[f64]) -> DenseMatrix {
    let n = q.rows();
    DenseMatrix::from_fn(n, n, |i, j| {
        (0..lambda.len()).map(|k| q.get(i, k) * lambda[k] * q.get(j, k)).sum()
    })
}

/// Factor `F = Q diag(√λ)` with `F Fᵀ = C` for a PSD matrix `C`. Tiny negative
/// eigenvalues (above `-1e-10`, scaled by `max|C|` when that exceeds 1) are
/// clamped to zero.
pub fn correlation_factor(c: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, lambda) = symmetric_eig(c)?;
    let tol = PSD_TOL * c.max_abs().max(1.0);
    if let Some(&bad) = lambda.iter().find(|&&l| l < -tol) {
        return Err(Error::NotPsd { eigenvalue: bad });
    }
    let roots: Vec<f64> = lambda.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let n = q.rows();
    Ok(DenseMatrix::from_fn(n, n, |i, j| q.get(i, j) * roots[j]))
}

/// Cholesky factor `L` (lower triangular) of an SPD matrix, or `None` if a
/// pivot is not positive.
pub fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    let scale = a.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 1e-13 * scale {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthogonality_error(q: &DenseMatrix) -> f64 {
        let qtq = q.transpose().matmul(q).unwrap();
        qtq.max_abs_diff(&DenseMatrix::identity(q.rows())).unwrap()
    }

    #[test]
    fn identity_eigenpairs() {
        let (q, l) = symmetric_eig(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l, vec![1.0, 1.0, 1.0]);
        assert!(orthogonality_error(&q) <= 1e-9);
    }

    #[test]
    fn diagonal_input_sorted_descending() {
        let c = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let (q, l) = symmetric_eig(&c).unwrap();
        assert_eq!(l, vec![2.0, 1.0]);
        // signed permutation of the identity
        assert_eq!(q.get(0, 0), 0.0);
        assert_eq!(q.get(1, 0).abs(), 1.0);
        assert_eq!(q.get(0, 1).abs(), 1.0);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        let ns = DenseMatrix::zeros(2, 3);
        assert!(matches!(symmetric_eig(&ns), Err(Error::InvalidArgument(_))));
        let asym = DenseMatrix::new(2, 2, vec![1.0, 0.5, 0.4, 1.0]).unwrap();
        assert!(matches!(symmetric_eig(&asym), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scalar_factor() {
        let f = correlation_factor(&DenseMatrix::new(1, 1, vec![4.0]).unwrap()).unwrap();
        assert!((f.get(0, 0).abs() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_rejected() {
        let c = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(correlation_factor(&c), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn cholesky_solves_spd() {
        let a = DenseMatrix::new(3, 3, vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]).unwrap();
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let back = a.matvec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-12);
        }
        let singular = DenseMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(cholesky(&singular).is_none());
    }
}
