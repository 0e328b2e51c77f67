//! Small dense complex linear algebra for the per-position L×R systems.
//!
//! Matrices are row-major `&[Complex64]` slices. Everything here is sized by
//! the coil count or the reduction factor, so O(n³) routines are fine.

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Lower-triangular `Lf` with `Lf·Lfᴴ = a` for Hermitian positive definite `a`.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian positive definite matrix via its Cholesky factor.
pub fn hpd_inverse(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![ZERO; n * n];
    let mut col = vec![ZERO; n];
    for c in 0..n {
        col.iter_mut().for_each(|v| *v = ZERO);
        col[c] = Complex64::new(1.0, 0.0);
        // forward: L y = e_c
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[k * n + i].conj() * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    // symmetrize away round-off
    for i in 0..n {
        inv[i * n + i].im = 0.0;
        for j in i + 1..n {
            let m = (inv[i * n + j] + inv[j * n + i].conj()) * 0.5;
            inv[i * n + j] = m;
            inv[j * n + i] = m.conj();
        }
    }
    Some(inv)
}

/// Solves `a x = b` for Hermitian positive definite `a`.
pub fn hpd_solve(a: &[Complex64], n: usize, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let l = cholesky(a, n)?;
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// `y = a·x` for an `rows×cols` matrix.
#[inline]
pub fn matvec(a: &[Complex64], rows: usize, cols: usize, x: &[Complex64], y: &mut [Complex64]) {
    for i in 0..rows {
        let mut s = ZERO;
        for j in 0..cols {
            s += a[i * cols + j] * x[j];
        }
        y[i] = s;
    }
}

/// Largest eigenvalue of a Hermitian positive semi-definite matrix.
///
/// Closed form for n ≤ 2; power iteration otherwise (tolerance 1e-10,
/// at most 1000 iterations).
pub fn hermitian_lambda_max(a: &[Complex64], n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => a[0].re,
        2 => {
            let (p, q) = (a[0].re, a[3].re);
            let b = a[1].norm_sqr();
            let half_tr = 0.5 * (p + q);
            let disc = (0.25 * (p - q) * (p - q) + b).sqrt();
            half_tr + disc
        }
        _ => power_iteration(a, n, 1e-10, 1000),
    }
}

fn power_iteration(a: &[Complex64], n: usize, tol: f64, max_iter: usize) -> f64 {
    // start from the column of largest diagonal, nudged so it is not
    // orthogonal to the dominant eigenvector by accident
    let start = (0..n)
        .max_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re))
        .unwrap_or(0);
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let base = if i == start { 1.0 } else { 0.0 };
            Complex64::new(base + 1e-3 * (i as f64 + 1.0) / n as f64, 0.0)
        })
        .collect();
    let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= nv);
    let mut w = vec![ZERO; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        matvec(a, n, n, &v, &mut w);
        let rayleigh: f64 = v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if (rayleigh - lambda).abs() <= tol * rayleigh.abs().max(f64::MIN_POSITIVE) {
            return rayleigh;
        }
        lambda = rayleigh;
    }
    lambda
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rel_tol·σ_max` treated as zero.
pub fn pseudo_inverse(a: &[Complex64], rows: usize, cols: usize, rel_tol: f64) -> Vec<Complex64> {
    let m = DMatrix::from_row_slice(rows, cols, a);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let pinv = if smax == 0.0 {
        DMatrix::zeros(cols, rows)
    } else {
        svd.pseudo_inverse(rel_tol * smax)
            .expect("u and v were computed")
    };
    // DMatrix is column-major
    let mut out = vec![ZERO; cols * rows];
    for i in 0..cols {
        for j in 0..rows {
            out[i * rows + j] = pinv[(i, j)];
        }
    }
    out
}
