//! Dense SPD solves for the kernel system.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const MAX_REFINEMENTS: usize = 8;

/// Error-free transformation of `a + b`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Dot product evaluated as if in twice the working precision.
pub fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let e = x.mul_add(y, -p);
        let (t, q) = two_sum(s, p);
        s = t;
        c += q + e;
    }
    s + c
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4 * 4;
    for (x, y) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = a[chunks..].iter().zip(&b[chunks..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower Cholesky factor, row-major; `None` when a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` in place.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Outcome of [`solve_spd`].
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Array2<f64>,
    /// Largest absolute entry of `A x - B`, computed with compensated sums.
    pub residual: f64,
    pub jittered: bool,
    pub refinements: usize,
}

/// Max-abs residual `A x - b` for one right-hand side.
fn residual_into(a: &[f64], n: usize, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut row = vec![0.0; n + 1];
    let mut xs = vec![0.0; n + 1];
    xs[..n].copy_from_slice(x);
    xs[n] = -1.0;
    for i in 0..n {
        row[..n].copy_from_slice(&a[i * n..(i + 1) * n]);
        row[n] = b[i];
        // b - A x as one compensated dot over [A_i, b_i] . [x, -1], negated
        r[i] = -dot2(&row, &xs);
        worst = worst.max(r[i].abs());
    }
    worst
}

/// Solves the SPD system `A X = B` by Cholesky with iterative refinement.
///
/// If the factorization breaks down, the diagonal is lifted once by
/// `1e-10 * trace(A) / n`; the jittered factor then only preconditions the
/// refinement against the original `A`. Fails when the residual stays above
/// `tol`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>, tol: f64) -> Result<SpdSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(format!(
            "system {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let flat: Vec<f64> = a.iter().copied().collect();
    let mut jittered = false;
    let l = match cholesky(&flat, n) {
        Some(l) => l,
        None => {
            let trace: f64 = (0..n).map(|i| flat[i * n + i]).sum();
            let jitter = 1e-10 * trace / n as f64;
            log::warn!("Cholesky breakdown; retrying with diagonal jitter {jitter:e}");
            let mut lifted = flat.clone();
            for i in 0..n {
                lifted[i * n + i] += jitter;
            }
            jittered = true;
            cholesky(&lifted, n).ok_or_else(|| {
                Error::Numerical(
                    "system is not positive definite even after jitter; use a smaller C (larger 1/C)".into(),
                )
            })?
        }
    };
    let mut x = Array2::zeros(b.raw_dim());
    let mut worst: f64 = 0.0;
    let mut refinements = 0;
    let mut r = vec![0.0; n];
    for (j, col) in b.columns().into_iter().enumerate() {
        let rhs: Vec<f64> = col.to_vec();
        let mut sol = rhs.clone();
        cholesky_solve(&l, n, &mut sol);
        let mut res = residual_into(&flat, n, &sol, &rhs, &mut r);
        let mut steps = 0;
        while res > tol && steps < MAX_REFINEMENTS {
            cholesky_solve(&l, n, &mut r);
            for (s, d) in sol.iter_mut().zip(&r) {
                *s += d;
            }
            let next = residual_into(&flat, n, &sol, &rhs, &mut r);
            steps += 1;
            if !(next < res) {
                res = next;
                break;
            }
            res = next;
        }
        refinements = refinements.max(steps);
        worst = worst.max(res);
        for (i, v) in sol.into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    if !(worst <= tol) {
        return Err(Error::Numerical(format!(
            "solve residual {worst:e} exceeds {tol:e}; the system is too ill-conditioned, use a smaller C"
        )));
    }
    Ok(SpdSolution {
        x,
        residual: worst,
        jittered,
        refinements,
    })
}
