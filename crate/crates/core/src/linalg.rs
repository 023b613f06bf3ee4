//! Small dense linear algebra: symmetric Jacobi eigendecomposition and an
//! SVD built on it.
//!
//! The matrices this crate decomposes are tiny (class count by sensitive
//! level count, at most 64 on a side), so a cyclic Jacobi sweep on the
//! smaller Gram matrix is accurate, dependency-free, and deterministic.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Maximum side length accepted by [`Svd::compute`].
pub const MAX_SVD_SIDE: usize = 64;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as columns. The input must be symmetric; only the upper triangle is
/// trusted.
pub fn jacobi_eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        let vals = Array1::from_iter(m.iter().copied());
        return Ok((vals, v));
    }

    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += m[[p, q]] * m[[p, q]];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Classic Jacobi rotation angle choice; t is the smaller
                // root so the rotation angle stays below pi/4.
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[[p, j]];
                    let mqj = m[[q, j]];
                    m[[p, j]] = c * mpj - s * mqj;
                    m[[q, j]] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    // Sort eigenpairs by eigenvalue, descending; stable so exact ties keep
    // sweep order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[[r, dst]] = v[[r, src]];
        }
    }
    Ok((vals, vecs))
}

/// Thin SVD of a small dense matrix: `a = u * diag(sigma) * v^T`.
///
/// Singular values are descending; `u` is rows x r and `v` is cols x r
/// with r = min(rows, cols). Column signs are fixed by making the
/// largest-magnitude entry of each computed-side singular vector
/// positive; the other side is derived from it so the pair stays
/// consistent. A singular value below `1e-12 * sigma_max` gets a zero
/// derived column.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    pub fn compute(a: &Array2<f64>) -> Result<Svd> {
        let (rows, cols) = (a.nrows(), a.ncols());
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(
                "svd of an empty matrix".to_string(),
            ));
        }
        if rows > MAX_SVD_SIDE || cols > MAX_SVD_SIDE {
            return Err(Error::DimensionMismatch(format!(
                "svd supports at most {MAX_SVD_SIDE}x{MAX_SVD_SIDE}, got {rows}x{cols}"
            )));
        }
        let r = rows.min(cols);

        // Eigendecompose the smaller Gram matrix, then recover the other
        // side as a * v / sigma (or a^T * u / sigma).
        if cols <= rows {
            let gram = a.t().dot(a);
            let (vals, mut v) = jacobi_eigh(&gram)?;
            let sigma = Array1::from_iter(vals.iter().take(r).map(|&l| l.max(0.0).sqrt()));
            let mut v_r = Array2::<f64>::zeros((cols, r));
            for j in 0..r {
                for i in 0..cols {
                    v_r[[i, j]] = v[[i, j]];
                }
            }
            fix_column_signs(&mut v_r);
            v = v_r;
            let mut u = Array2::<f64>::zeros((rows, r));
            let sig_max = sigma.iter().cloned().fold(0.0, f64::max);
            for j in 0..r {
                if sigma[j] > 1e-12 * sig_max.max(1.0) {
                    for i in 0..rows {
                        let mut acc = 0.0;
                        for t in 0..cols {
                            acc += a[[i, t]] * v[[t, j]];
                        }
                        u[[i, j]] = acc / sigma[j];
                    }
                }
            }
            Ok(Svd { u, sigma, v })
        } else {
            let gram = a.dot(&a.t());
            let (vals, u_full) = jacobi_eigh(&gram)?;
            let sigma = Array1::from_iter(vals.iter().take(r).map(|&l| l.max(0.0).sqrt()));
            let mut u = Array2::<f64>::zeros((rows, r));
            for j in 0..r {
                for i in 0..rows {
                    u[[i, j]] = u_full[[i, j]];
                }
            }
            fix_column_signs(&mut u);
            let mut v = Array2::<f64>::zeros((cols, r));
            let sig_max = sigma.iter().cloned().fold(0.0, f64::max);
            for j in 0..r {
                if sigma[j] > 1e-12 * sig_max.max(1.0) {
                    for i in 0..cols {
                        let mut acc = 0.0;
                        for t in 0..rows {
                            acc += a[[t, i]] * u[[t, j]];
                        }
                        v[[i, j]] = acc / sigma[j];
                    }
                }
            }
            Ok(Svd { u, sigma, v })
        }
    }

    /// Sum of squared singular values.
    pub fn sum_sq(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    /// Sum of singular values (nuclear norm).
    pub fn nuclear(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// Flip each column so its largest-magnitude entry is positive. On a
/// magnitude tie the first such entry decides.
fn fix_column_signs(m: &mut Array2<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..m.nrows() {
            let a = m[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[[best, j]] < 0.0 {
            for i in 0..m.nrows() {
                m[[i, j]] = -m[[i, j]];
            }
        }
    }
}
