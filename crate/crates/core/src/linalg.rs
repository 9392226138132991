//! Dense helpers on row-major slices. Dimensions here are tiny (d, m, k of a
//! few units), so everything works on caller-provided buffers.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `out = a * a^T` for a row-major `rows x cols` matrix.
pub fn gram(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..rows {
            let mut s = 0.0;
            for l in 0..cols {
                s += a[i * cols + l] * a[j * cols + l];
            }
            out[i * rows + j] = s;
        }
    }
}

/// `out = a * v` for a row-major `rows x cols` matrix.
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        out[i] = dot(&a[i * cols..(i + 1) * cols], v);
    }
}

/// Smallest eigenvalue of a symmetric `d x d` matrix.
pub fn min_eigenvalue_sym(a: &[f64], d: usize) -> f64 {
    match d {
        1 => a[0],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let mean = 0.5 * (p + r);
            let half_gap = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            mean - half_gap
        }
        _ => {
            let m = DMatrix::from_row_slice(d, d, a);
            SymmetricEigen::new(m).eigenvalues.min()
        }
    }
}

/// Solve `a x = b` for symmetric positive-definite `a` by Cholesky.
/// Returns `None` when a pivot is not positive.
pub fn solve_spd(a: &[f64], d: usize, b: &[f64], x: &mut [f64]) -> Option<()> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    Some(())
}
