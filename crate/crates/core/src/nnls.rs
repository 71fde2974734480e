//! Nonnegative least squares (Lawson–Hanson active set).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of `min ||A x - b||_2` subject to `x >= 0`.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Least squares on the selected columns via Householder QR. Columns are
/// unit-normalised before factorisation.
fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize], scale: &[f64]) -> Vec<f64> {
    let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])] / scale[cols[j]]);
    let qr = sub.qr();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let r = qr.r();
    let p = cols.len();
    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qtb[i];
        for j in i + 1..p {
            s -= r[(i, j)] * z[j];
        }
        z[i] = if r[(i, i)].abs() > 0.0 { s / r[(i, i)] } else { 0.0 };
    }
    z.iter().zip(cols).map(|(v, &c)| v / scale[c]).collect()
}

/// Solve the nonnegative least-squares problem. If the unconstrained solution
/// is already nonnegative it is returned directly.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Shape(format!("nnls: matrix has {m} rows, rhs has {}", b.len())));
    }
    if n == 0 {
        return Ok(NnlsSolution { x: vec![], residual_norm: b.norm(), iterations: 0 });
    }
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let s = a.column(j).norm();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();

    if m >= n {
        let all: Vec<usize> = (0..n).collect();
        let z = solve_subset(a, b, &all, &scale);
        if z.iter().all(|&v| v >= 0.0 && v.is_finite()) {
            let x = DVector::from_vec(z);
            let residual_norm = (a * &x - b).norm();
            return Ok(NnlsSolution { x: x.as_slice().to_vec(), residual_norm, iterations: 0 });
        }
    }

    let tol = 1e-13 * scale.iter().cloned().fold(0.0, f64::max) * b.norm().max(1e-300);
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    loop {
        let resid = b - a * &x;
        let grad = a.transpose() * &resid;
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::Numeric(format!(
                    "nnls did not converge within {max_iter} iterations"
                )));
            }
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = solve_subset(a, b, &cols, &scale);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&c, &v) in cols.iter().zip(&z) {
                    x[c] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = cols[0];
            for (&c, &v) in cols.iter().zip(&z) {
                if v <= 0.0 {
                    let denom = x[c] - v;
                    let step = if denom > 0.0 { x[c] / denom } else { 0.0 };
                    if step < alpha {
                        alpha = step;
                        blocking = c;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (&c, &v) in cols.iter().zip(&z) {
                x[c] += alpha * (v - x[c]);
            }
            x[blocking] = 0.0;
            for &c in &cols {
                if x[c] <= 0.0 {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual_norm = (a * &x - b).norm();
    Ok(NnlsSolution { x: x.as_slice().to_vec(), residual_norm, iterations })
}
