//! Quick invariant checks run by `atomprune selftest`.

use atomprune::bench::distortion;
use atomprune::gap::{gap_solve_observed, grad_lsq, GapConfig};
use atomprune::gapcorr::CorrGapConfig;
use atomprune::numkit::{correlation_factor, gaussian_matrix_normalized, norm2, DenseMatrix, RngStream};
use atomprune::signals::{exponential_correlation, random_sparse_signal};
use atomprune::wavelet::haar_analysis_matrix;

type Check = (&'static str, fn() -> Result<(), String>);

/// Prints one PASS/FAIL line per check on stdout; true if all pass.
pub fn run() -> bool {
    let checks: [Check; 5] = [
        ("schedule level counts", levels),
        ("haar orthonormality", haar),
        ("correlation factor residual", factor),
        ("least-squares gradient", gradient),
        ("small-instance recovery", recovery),
    ];
    let mut ok = true;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                ok = false;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    ok
}

fn levels() -> Result<(), String> {
    let (a, b) = (GapConfig::default().num_levels(), CorrGapConfig::default().num_levels());
    if (a, b) == (90, 491) {
        Ok(())
    } else {
        Err(format!("got {a} and {b}, expected 90 and 491"))
    }
}

fn haar() -> Result<(), String> {
    for n in [8, 64, 1024] {
        let g = haar_analysis_matrix(n, 3).map_err(|e| e.to_string())?;
        let err = g.matmul(&g.transpose()).map_err(|e| e.to_string())?.max_abs_diff(&DenseMatrix::identity(n)).unwrap_or(f64::INFINITY);
        if err > 1e-10 {
            return Err(format!("N = {n}: max |G Gᵀ - I| = {err:e}"));
        }
    }
    Ok(())
}

fn factor() -> Result<(), String> {
    for n in [10, 100] {
        let c = exponential_correlation(n, 0.99).map_err(|e| e.to_string())?;
        let f = correlation_factor(&c).map_err(|e| e.to_string())?;
        let err = f.matmul(&f.transpose()).map_err(|e| e.to_string())?.max_abs_diff(&c).unwrap_or(f64::INFINITY);
        if err > 1e-8 * c.max_abs() {
            return Err(format!("N = {n}: residual {err:e}"));
        }
    }
    Ok(())
}

fn gradient() -> Result<(), String> {
    let a = gaussian_matrix_normalized(5, 8, RngStream::new(11, 0)).map_err(|e| e.to_string())?;
    let mut s = RngStream::new(11, 1).sampler();
    let (y, v) = (s.normals(5), s.normals(8));
    let gamma: Vec<f64> = (0..8).map(|_| 0.2 + 0.8 * s.uniform()).collect();
    let g = grad_lsq(&a, &y, &v, &gamma).map_err(|e| e.to_string())?;
    let f = |v: &[f64]| {
        let x: Vec<f64> = v.iter().zip(&gamma).map(|(a, b)| a * b).collect();
        let ax = a.matvec(&x);
        y.iter().zip(ax).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
    };
    let h = 1e-6;
    let fd: Vec<f64> = (0..8)
        .map(|i| {
            let (mut p, mut m) = (v.clone(), v.clone());
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let rel = norm2(&diff) / norm2(&fd);
    if rel <= 1e-4 {
        Ok(())
    } else {
        Err(format!("relative error {rel:e}"))
    }
}

/// GAP recovers at least four of five small planted instances and keeps
/// every oracle weight in `[0, 1]`.
fn recovery() -> Result<(), String> {
    let mut successes = 0;
    for seed in 0..5 {
        let a = gaussian_matrix_normalized(30, 60, RngStream::new(seed, 0)).map_err(|e| e.to_string())?;
        let (x, _) = random_sparse_signal(60, 3, RngStream::new(seed, 1)).map_err(|e| e.to_string())?;
        let y = a.matvec(&x);
        let mut gamma_ok = true;
        let (x_hat, _) = gap_solve_observed(&a, &y, &GapConfig::default(), |st| {
            gamma_ok &= st.gamma.iter().all(|g| (0.0..=1.0).contains(g));
        })
        .map_err(|e| e.to_string())?;
        if !gamma_ok {
            return Err(format!("oracle weight left [0, 1] on instance {seed}"));
        }
        if distortion(&x, &x_hat).map_err(|e| e.to_string())? <= 1e-3 {
            successes += 1;
        }
    }
    if successes >= 4 {
        Ok(())
    } else {
        Err(format!("{successes} of 5 instances recovered"))
    }
}
