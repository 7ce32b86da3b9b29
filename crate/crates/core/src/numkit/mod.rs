//! Dense linear algebra, seeded random generation, and symmetric
//! eigendecomposition shared by the rest of the crate.

mod eig;
pub mod io;
mod matrix;
mod rng;

pub use eig::{cholesky, cholesky_solve, correlation_factor, reconstruct, symmetric_eig};
pub use matrix::{axpy, check_finite, dot, norm1, norm2, sign, sub, DenseMatrix};
pub use rng::{splitmix64, RngStream, Sampler};

use crate::error::{Error, Result};

/// `m x n` matrix with i.i.d. standard normal entries, each column then
/// scaled to unit ℓ2 norm.
pub fn gaussian_matrix_normalized(m: usize, n: usize, rng: RngStream) -> Result<DenseMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("gaussian matrix needs positive dimensions, got {m}x{n}")));
    }
    let mut s = rng.sampler();
    let mut a = DenseMatrix::from_fn(m, n, |_, _| s.normal());
    let norms = a.column_norms();
    for r in 0..m {
        for (v, nrm) in a.row_mut(r).iter_mut().zip(&norms) {
            *v /= nrm;
        }
    }
    Ok(a)
}

pub fn gaussian_vector(n: usize, rng: RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("gaussian vector length must be positive"));
    }
    Ok(rng.sampler().normals(n))
}
