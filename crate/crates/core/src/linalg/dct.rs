//! Orthonormal type-II 2-D DCT, applied separably as `C_H · A · C_Wᵀ`.

use super::Matrix;
use crate::error::Result;

/// The N×N orthonormal DCT-II matrix, `C[k][n] = α_k cos(π(2n+1)k / 2N)`.
#[derive(Debug, Clone)]
pub struct DctBasis {
    n: usize,
    m: Matrix,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let m = Matrix::from_fn(n, n, |k, i| {
            let scale = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
        });
        DctBasis { n, m }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }
}

pub fn dct2(a: &Matrix) -> Result<Matrix> {
    a.check_finite()?;
    let ch = DctBasis::new(a.rows());
    let cw = DctBasis::new(a.cols());
    Ok(ch.m.matmul(a).matmul(&cw.m.transpose()))
}

pub fn idct2(coeffs: &Matrix) -> Result<Matrix> {
    coeffs.check_finite()?;
    let ch = DctBasis::new(coeffs.rows());
    let cw = DctBasis::new(coeffs.cols());
    Ok(ch.m.transpose().matmul(coeffs).matmul(&cw.m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_is_dc_only() {
        let c = 0.7;
        let a = Matrix::from_fn(4, 6, |_, _| c);
        let d = dct2(&a).unwrap();
        assert!((d.get(0, 0) - c * 24f64.sqrt()).abs() < 1e-12);
        let rest: f64 = d.as_slice()[1..].iter().map(|x| x.abs()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn one_by_one_is_identity() {
        let a = Matrix::from_vec(1, 1, vec![0.3]).unwrap();
        assert!((dct2(&a).unwrap().get(0, 0) - 0.3).abs() < 1e-15);
        assert!((idct2(&a).unwrap().get(0, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Matrix::from_fn(32, 32, |_, _| rng.random::<f64>());
        let d = dct2(&a).unwrap();
        let back = idct2(&d).unwrap();
        assert!(back.max_abs_diff(&a) <= 1e-6);
        assert!((d.frobenius() - a.frobenius()).abs() <= 1e-6 * a.frobenius());
    }

    #[test]
    fn basis_matches_direct_sum() {
        // Straight evaluation of the DCT-II sum for a 3×5 input.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Matrix::from_fn(3, 5, |_, _| rng.random::<f64>());
        let d = dct2(&a).unwrap();
        let alpha = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let pi = std::f64::consts::PI;
        for u in 0..3 {
            for v in 0..5 {
                let mut s = 0.0;
                for x in 0..3 {
                    for y in 0..5 {
                        s += a.get(x, y)
                            * (pi * (2 * x + 1) as f64 * u as f64 / 6.0).cos()
                            * (pi * (2 * y + 1) as f64 * v as f64 / 10.0).cos();
                    }
                }
                s *= alpha(u, 3) * alpha(v, 5);
                assert!((s - d.get(u, v)).abs() < 1e-12);
            }
        }
    }
}
