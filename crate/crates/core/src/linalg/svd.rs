//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of the working matrix are orthogonalized pairwise by plane
//! rotations until every pair is orthogonal to machine precision. The
//! column norms are then the singular values. The method has high relative
//! accuracy and is simple to get right, which matters more than raw speed for
//! the 32×32 channel planes this crate handles.

use super::Matrix;
use crate::error::Result;

/// Singular values at or below `ZERO_THRESHOLD · σ₁` count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-9;

const MAX_SWEEPS: usize = 80;

/// Thin SVD restricted to the nonzero part of the spectrum.
///
/// Stores `rank` triplets `(σ_t, u_t, v_t)` with `σ` strictly positive and
/// descending; `u_t` has `rows` entries and `v_t` has `cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularDecomposition {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl SingularDecomposition {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of nonzero singular values.
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_vector(&self, t: usize) -> &[f64] {
        &self.left[t * self.rows..(t + 1) * self.rows]
    }

    pub fn right_vector(&self, t: usize) -> &[f64] {
        &self.right[t * self.cols..(t + 1) * self.cols]
    }

    /// `Σ_{t<keep} σ_t u_t v_tᵀ`. `keep` larger than the rank is clamped.
    pub fn reconstruct(&self, keep: usize) -> Matrix {
        let keep = keep.min(self.rank());
        let mut out = Matrix::zeros(self.rows, self.cols);
        let data = out.as_mut_slice();
        for t in 0..keep {
            let s = self.values[t];
            let u = self.left_vector(t);
            let v = self.right_vector(t);
            for (r, &ur) in u.iter().enumerate() {
                let a = s * ur;
                let row = &mut data[r * self.cols..(r + 1) * self.cols];
                for (o, &vc) in row.iter_mut().zip(v) {
                    *o += a * vc;
                }
            }
        }
        out
    }
}

/// Full nonzero-spectrum SVD of a finite matrix.
pub fn svd(matrix: &Matrix) -> Result<SingularDecomposition> {
    matrix.check_finite()?;
    let (rows, cols) = (matrix.rows(), matrix.cols());
    if rows >= cols {
        let (values, left, right) = jacobi(matrix, true);
        Ok(SingularDecomposition {
            rows,
            cols,
            values,
            left,
            right,
        })
    } else {
        let (values, left, right) = jacobi(&matrix.transpose(), true);
        Ok(SingularDecomposition {
            rows,
            cols,
            values,
            left: right,
            right: left,
        })
    }
}

/// Nonzero singular values only, descending. Skips accumulating the right
/// rotations, so it is roughly twice as fast as [`svd`].
pub fn singular_values(matrix: &Matrix) -> Result<Vec<f64>> {
    matrix.check_finite()?;
    let (values, _, _) = if matrix.rows() >= matrix.cols() {
        jacobi(matrix, false)
    } else {
        jacobi(&matrix.transpose(), false)
    };
    Ok(values)
}

/// Runs on an m×n matrix with m ≥ n. Returns (σ, U columns, V columns) for
/// the nonzero part of the spectrum, each vector stored contiguously.
fn jacobi(a: &Matrix, want_vectors: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = a.rows();
    let n = a.cols();
    // Column-major working copy.
    let mut w = vec![0.0; m * n];
    for r in 0..m {
        for c in 0..n {
            w[c * m + r] = a.get(r, c);
        }
    }
    let mut v = if want_vectors {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    } else {
        Vec::new()
    };
    let mut norms: Vec<f64> = (0..n)
        .map(|c| w[c * m..(c + 1) * m].iter().map(|x| x * x).sum())
        .collect();
    let tol = f64::EPSILON * m as f64;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (cp, cq) = column_pair(&mut w, m, p, q);
                let gamma: f64 = cp.iter().zip(cq.iter()).map(|(x, y)| x * y).sum();
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (mut np, mut nq) = (0.0, 0.0);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let xp = c * *x - s * *y;
                    let yq = s * *x + c * *y;
                    *x = xp;
                    *y = yq;
                    np += xp * xp;
                    nq += yq * yq;
                }
                norms[p] = np;
                norms[q] = nq;
                if want_vectors {
                    let (vp, vq) = column_pair(&mut v, n, p, q);
                    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                        let xp = c * *x - s * *y;
                        let yq = s * *x + c * *y;
                        *x = xp;
                        *y = yq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let smax = order.first().map_or(0.0, |&i| sigma[i]);
    let cutoff = ZERO_THRESHOLD * smax;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sigma[i] > cutoff && sigma[i] > 0.0)
        .collect();

    let values: Vec<f64> = kept.iter().map(|&i| sigma[i]).collect();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    if want_vectors {
        left.reserve(kept.len() * m);
        right.reserve(kept.len() * n);
        for &i in &kept {
            let s = sigma[i];
            left.extend(w[i * m..(i + 1) * m].iter().map(|x| x / s));
            right.extend_from_slice(&v[i * n..(i + 1) * n]);
        }
    }
    (values, left, right)
}

fn column_pair(buf: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = buf.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}
