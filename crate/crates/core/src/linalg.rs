//! Dense kernels on top of faer, always single-threaded so results do not
//! depend on the worker pool.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, MatRef, Par};

use crate::{Error, Result};

/// `g += xᵀ x`.
pub(crate) fn add_gram(g: &mut Mat<f64>, x: MatRef<'_, f64>) {
    matmul(g.as_mut(), Accum::Add, x.transpose(), x, 1.0, Par::Seq);
}

/// `dst += xᵀ y` for a matrix of right-hand sides.
pub(crate) fn add_cross(dst: &mut Mat<f64>, x: MatRef<'_, f64>, y: MatRef<'_, f64>) {
    matmul(dst.as_mut(), Accum::Add, x.transpose(), y, 1.0, Par::Seq);
}

/// `x w` for a matrix of weight columns.
pub(crate) fn mul(x: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(x.nrows(), w.ncols());
    matmul(out.as_mut(), Accum::Replace, x, w, 1.0, Par::Seq);
    out
}

/// Lower Cholesky factor of a symmetric positive-definite matrix (only the
/// lower triangle of `a` is read). Matrices that are singular to working
/// precision are rejected even when every pivot happens to stay positive.
pub(crate) fn cholesky(mut a: Mat<f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    cholesky_in_place(
        a.as_mut(),
        Default::default(),
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| Error::numerical(format!("matrix is not positive definite ({e})")))?;
    let floor = n as f64 * f64::EPSILON * max_diag;
    if let Some(i) = (0..n).find(|&i| a[(i, i)] * a[(i, i)] <= floor) {
        return Err(Error::numerical(format!("matrix is singular to working precision (pivot {i})")));
    }
    for j in 0..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(a)
}

/// Solves `L z = b` in place.
pub(crate) fn forward_solve(l: MatRef<'_, f64>, b: &mut Mat<f64>) {
    solve_lower_triangular_in_place(l, b.as_mut(), Par::Seq);
}

/// Solves `Lᵀ w = z` in place.
pub(crate) fn backward_solve(l: MatRef<'_, f64>, z: &mut Mat<f64>) {
    solve_upper_triangular_in_place(l.transpose(), z.as_mut(), Par::Seq);
}

/// Solves `(L Lᵀ) w = b` using only the leading `k × k` block of `L`, which
/// is the Cholesky factor of the leading block of the original matrix.
pub(crate) fn solve_leading(l: MatRef<'_, f64>, k: usize, b: &[f64]) -> Vec<f64> {
    let lk = l.submatrix(0, 0, k, k);
    let mut z = Mat::from_fn(k, 1, |i, _| b[i]);
    forward_solve(lk, &mut z);
    backward_solve(lk, &mut z);
    (0..k).map(|i| z[(i, 0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_and_leading_blocks() {
        let a = Mat::from_fn(4, 4, |i, j| if i == j { 4.0 } else { 1.0 / (1 + i + j) as f64 });
        let l = cholesky(a.clone()).unwrap();
        let back = mul(l.as_ref(), l.transpose());
        for i in 0..4 {
            for j in 0..4 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
        // leading 2×2 solve equals the solve of the leading 2×2 system
        let w = solve_leading(l.as_ref(), 2, &[1.0, 2.0]);
        let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
        let det = p * r - q * q;
        assert!((w[0] - (r * 1.0 - q * 2.0) / det).abs() < 1e-12);
        assert!((w[1] - (p * 2.0 - q * 1.0) / det).abs() < 1e-12);
        assert!(cholesky(Mat::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 })).is_err());
    }
}
