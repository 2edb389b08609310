//! Small dense linear-algebra helpers on top of faer.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

/// faer's SIMD kernels can return with the upper halves of the AVX registers
/// dirty. Code compiled for the baseline target then pays an SSE/AVX
/// transition penalty on every instruction, so this is called after each
/// faer call that feeds a scalar loop.
#[inline]
pub(crate) fn settle() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the instruction exists whenever AVX is available.
        unsafe { zero_upper() }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn zero_upper() {
    std::arch::x86_64::_mm256_zeroupper();
}

/// dst ← lhs·rhs (or dst += lhs·rhs), sequential.
pub(crate) fn gemm(dst: MatMut<'_, f64>, accumulate: bool, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) {
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(dst, accum, lhs, rhs, 1.0, Par::Seq);
    settle();
}

/// Cholesky factor of a symmetric positive definite matrix, or `None` when
/// the matrix is not numerically positive definite. A pivot smaller than
/// `rel_tol` times the largest diagonal entry counts as a failure.
pub(crate) fn cholesky(a: MatRef<'_, f64>, rel_tol: f64) -> Option<faer::linalg::solvers::Llt<f64>> {
    let max_diag = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let llt = a.llt(Side::Lower).ok();
    settle();
    let llt = llt?;
    let l = llt.L();
    let floor = rel_tol * max_diag;
    for i in 0..l.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > floor) || !pivot.is_finite() {
            return None;
        }
    }
    Some(llt)
}

/// Solves `a x = b` for SPD `a`.
pub(crate) fn solve_spd(a: MatRef<'_, f64>, b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let llt = cholesky(a, rel_tol)?;
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    settle();
    let out: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// trace(A⁻¹) for SPD `a`.
pub(crate) fn trace_of_inverse(a: MatRef<'_, f64>, rel_tol: f64) -> Option<f64> {
    let llt = cholesky(a, rel_tol)?;
    let inv = llt.inverse();
    settle();
    let t: f64 = (0..inv.nrows()).map(|i| inv[(i, i)]).sum();
    t.is_finite().then_some(t)
}

/// Ordinary least squares through the normal equations. `rows` holds the
/// regressor rows, all of equal length.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len();
    if rows.len() < k {
        return None;
    }
    let x = Mat::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let mut xtx = Mat::zeros(k, k);
    gemm(xtx.as_mut(), false, x.transpose(), x.as_ref());
    let yv = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let mut xty = Mat::zeros(k, 1);
    gemm(xty.as_mut(), false, x.transpose(), yv.as_ref());
    let rhs: Vec<f64> = (0..k).map(|i| xty[(i, 0)]).collect();
    solve_spd(xtx.as_ref(), &rhs, 1e-12)
}
