//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `lower[i]·u[i-1] + diag[i]·u[i] + upper[i]·u[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored. `scratch` must have length `n`.
pub fn solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    debug_assert!(out.len() == n && scratch.len() == n);
    if n == 0 {
        return Ok(());
    }
    let mut denom = diag[0];
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return Err(Error::SolverSingular { row: 0 });
    }
    scratch[0] = upper[0] / denom;
    out[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * scratch[i - 1];
        if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
            return Err(Error::SolverSingular { row: i });
        }
        scratch[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_against_dense_product() {
        let n = 6;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.2 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let u: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = diag[i] * u[i];
                if i > 0 {
                    s += lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * u[i + 1];
                }
                s
            })
            .collect();
        let mut out = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        solve(&lower, &diag, &upper, &rhs, &mut out, &mut scratch).unwrap();
        for (a, b) in out.iter().zip(&u) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut out = vec![0.0; 2];
        let mut s = vec![0.0; 2];
        let err = solve(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0], &mut out, &mut s);
        assert!(matches!(err, Err(Error::SolverSingular { row: 0 })));
    }
}
