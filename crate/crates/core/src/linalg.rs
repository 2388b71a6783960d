//! Small dense kernels: Householder least squares and LU solves.

use alloc::vec::Vec;

/// Residual sum of squares of `y` regressed on the columns in `cols`
/// (each of length `n`), via Householder QR.
///
/// Returns `None` when some diagonal of `R` falls below `rank_tol` times the
/// largest column norm.
pub fn householder_rss(cols: &[&[f64]], y: &[f64], rank_tol: f64) -> Option<f64> {
    let n = y.len();
    let p = cols.len();
    let mut a: Vec<f64> = Vec::with_capacity(n * p);
    for c in cols {
        debug_assert_eq!(c.len(), n);
        a.extend_from_slice(c);
    }
    let mut b: Vec<f64> = y.to_vec();
    let scale = cols
        .iter()
        .map(|c| libm::sqrt(c.iter().map(|v| v * v).sum::<f64>()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }

    for j in 0..p {
        let (done, rest) = a.split_at_mut((j + 1) * n);
        let col = &mut done[j * n..];
        let norm = libm::sqrt(col[j..].iter().map(|v| v * v).sum::<f64>());
        if norm <= rank_tol * scale {
            return None;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place; H = I - 2 v v' / (v'v)
        col[j] -= alpha;
        let vtv: f64 = col[j..].iter().map(|v| v * v).sum();
        let v = &col[j..];
        for k in 0..(p - j - 1) {
            let other = &mut rest[k * n + j..(k + 1) * n];
            let dot: f64 = v.iter().zip(other.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vtv;
            for (o, vi) in other.iter_mut().zip(v) {
                *o -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vtv;
        for (o, vi) in b[j..].iter_mut().zip(v) {
            *o -= f * vi;
        }
    }
    Some(b[p..].iter().map(|v| v * v).sum())
}

/// Solves `a x = b` in place for a row-major `n x n` matrix using Gaussian
/// elimination with partial pivoting. `b` is overwritten with `x`.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                libm::fabs(a[i * n + col])
                    .partial_cmp(&libm::fabs(a[j * n + col]))
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if libm::fabs(a[pivot * n + col]) <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row * n + k] * b[k]).sum();
        b[row] = (b[row] - s) / a[row * n + row];
    }
    Some(())
}
