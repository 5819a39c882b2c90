//! Spectral helpers: operator norm and numeric rank.
//!
//! Small matrices (at most 512² entries) go through a one-sided Jacobi SVD;
//! larger ones use power iteration on `MᵀM` for the operator norm.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const JACOBI_MAX_ENTRIES: usize = 512 * 512;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Singular values in descending order (one-sided Jacobi / Hestenes).
pub fn singular_values(m: &Tensor) -> Result<Vec<f64>> {
    m.require_2d("singular_values")?;
    m.ensure_finite("singular_values")?;
    let (p, q) = (m.shape()[0], m.shape()[1]);
    // Orthogonalise the shorter side: columns of a rows×cols matrix, cols ≤ rows.
    let (rows, cols, mut cols_data) = if q <= p {
        (p, q, column_major(m.data(), p, q))
    } else {
        (q, p, m.data().to_vec())
    };

    let col = |j: usize| j * rows..(j + 1) * rows;
    let scale: f64 = cols_data.iter().map(|v| v * v).sum::<f64>();
    if scale == 0.0 {
        return Ok(vec![0.0; cols]);
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for j in 0..cols {
            for k in (j + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                {
                    let a = &cols_data[col(j)];
                    let b = &cols_data[col(k)];
                    for (x, y) in a.iter().zip(b) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols_data.split_at_mut(k * rows);
                let a = &mut lo[j * rows..(j + 1) * rows];
                let b = &mut hi[..rows];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = (0..cols)
        .map(|j| cols_data[col(j)].iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

fn column_major(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// Largest singular value.
pub fn op_norm(m: &Tensor) -> Result<f64> {
    m.require_2d("op_norm")?;
    if m.is_empty() {
        return Err(Error::Dimension("op_norm of an empty matrix".into()));
    }
    if m.len() <= JACOBI_MAX_ENTRIES {
        Ok(singular_values(m)?[0])
    } else {
        power_iteration_norm(m)
    }
}

/// Operator norm by power iteration on `MᵀM`, never forming the product.
pub fn power_iteration_norm(m: &Tensor) -> Result<f64> {
    m.require_2d("power_iteration_norm")?;
    m.ensure_finite("power_iteration_norm")?;
    let (p, q) = (m.shape()[0], m.shape()[1]);
    let a = m.data();
    let mut v: Vec<f64> = (0..q).map(|i| 1.0 + 0.5 * ((i * 7919) % 101) as f64 / 101.0).collect();
    normalize(&mut v);
    let mut u = vec![0.0; p];
    let mut sigma = 0.0;
    let mut stable = 0;
    for _ in 0..50_000 {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = a[i * q..(i + 1) * q].iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let next = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if next == 0.0 {
            return Ok(0.0);
        }
        let mut w = vec![0.0; q];
        for (i, ui) in u.iter().enumerate() {
            for (wj, aij) in w.iter_mut().zip(&a[i * q..(i + 1) * q]) {
                *wj += aij * ui;
            }
        }
        normalize(&mut w);
        v = w;
        if (next - sigma).abs() <= 1e-14 * next {
            stable += 1;
            if stable >= 3 {
                return Ok(next);
            }
        } else {
            stable = 0;
        }
        sigma = next;
    }
    Ok(sigma)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numeric_rank(m: &Tensor, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Config(format!("rel_tol {rel_tol} not in (0,1)")));
    }
    let sv = singular_values(m)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * top).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi.
    fn sym_eigenvalues(a: &Tensor) -> Vec<f64> {
        let n = a.shape()[0];
        let mut m = a.data().to_vec();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| m[i * n + j].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (m[k * n + p], m[k * n + q]);
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.normal())
    }

    #[test]
    fn diag_norm() {
        let m = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((op_norm(&m).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix() {
        let m = Tensor::zeros(&[3, 4]);
        assert_eq!(op_norm(&m).unwrap(), 0.0);
        assert_eq!(numeric_rank(&m, 1e-8).unwrap(), 0);
    }

    #[test]
    fn random_8x8_matches_eigen_oracle() {
        let mut rng = Rng::new(8);
        for _ in 0..5 {
            let m = random(&mut rng, &[8, 8]);
            let gram = m.transpose().unwrap().matmul(&m).unwrap();
            let oracle = sym_eigenvalues(&gram)[0].sqrt();
            let got = op_norm(&m).unwrap();
            assert!((got - oracle).abs() / oracle < 1e-8, "{got} vs {oracle}");
            let pi = power_iteration_norm(&m).unwrap();
            assert!((pi - oracle).abs() / oracle < 1e-8, "{pi} vs {oracle}");
        }
    }

    #[test]
    fn full_spectrum_matches_eigen_oracle() {
        let mut rng = Rng::new(21);
        let m = random(&mut rng, &[6, 4]);
        let gram = m.transpose().unwrap().matmul(&m).unwrap();
        let oracle: Vec<f64> = sym_eigenvalues(&gram).iter().map(|e| e.max(0.0).sqrt()).collect();
        let sv = singular_values(&m).unwrap();
        for (a, b) in sv.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_invariance() {
        let mut rng = Rng::new(3);
        for shape in [[5, 9], [9, 5], [7, 7]] {
            let m = random(&mut rng, &shape);
            let a = op_norm(&m).unwrap();
            let b = op_norm(&m.transpose().unwrap()).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numeric_rank(&Tensor::identity(4), 1e-8).unwrap(), 4);
        let u = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let v = Tensor::new(vec![1, 4], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        assert_eq!(numeric_rank(&u.matmul(&v).unwrap(), 1e-8).unwrap(), 1);

        // Two rank-1 blocks on the diagonal.
        let mut b = Tensor::zeros(&[5, 5]);
        let block1 = [[1.0, 2.0], [2.0, 4.0]];
        let block2 = [[1.0, 1.0, 1.0], [3.0, 3.0, 3.0], [-1.0, -1.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                b.data_mut()[i * 5 + j] = block1[i][j];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                b.data_mut()[(i + 2) * 5 + j + 2] = block2[i][j];
            }
        }
        assert_eq!(numeric_rank(&b, 1e-8).unwrap(), 2);
    }

    #[test]
    fn large_matrix_uses_power_iteration() {
        let mut rng = Rng::new(4);
        let m = random(&mut rng, &[600, 450]);
        let pi = op_norm(&m).unwrap();
        let jac = singular_values(&m).unwrap()[0];
        assert!((pi - jac).abs() / jac < 1e-8);
    }
}
