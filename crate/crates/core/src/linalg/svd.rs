//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The matrix is oriented so that the working copy is tall (`p >= q`); pairs of
//! its `q` columns are rotated until they are mutually orthogonal to working
//! precision. The column norms are then the singular values, the normalized
//! columns the left vectors, and the accumulated rotations the right vectors.
//! Wide inputs are decomposed through their transpose and the factors swapped.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hard cap on full sweeps over all column pairs. Jacobi converges quadratically
/// once columns are nearly orthogonal; well-scaled inputs finish in under 15.
pub const MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Non-increasing, non-negative; length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// `rows × k` with orthonormal columns.
    pub left_vectors: Matrix,
    /// `cols × k` with orthonormal columns.
    pub right_vectors: Matrix,
}

impl SvdResult {
    /// `U · diag(S) · Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left_vectors.clone();
        for r in 0..us.rows() {
            for (v, s) in us.row_mut(r).iter_mut().zip(&self.singular_values) {
                *v *= s;
            }
        }
        us.matmul_t(&self.right_vectors)
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    validate(m)?;
    let tall = m.rows() >= m.cols();
    let oriented = if tall { m.clone() } else { m.transpose() };
    let mut work = ColumnWork::from_matrix(&oriented, true);
    work.orthogonalize()?;
    let (sigma, u, v) = work.finish();
    let (left_vectors, right_vectors) = if tall { (u, v) } else { (v, u) };
    Ok(SvdResult {
        singular_values: sigma,
        left_vectors,
        right_vectors,
    })
}

/// Singular values only (no vector accumulation), non-increasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    validate(m)?;
    let oriented = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let mut work = ColumnWork::from_matrix(&oriented, false);
    work.orthogonalize()?;
    let mut sigma = work.norms();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma)
}

fn validate(m: &Matrix) -> Result<()> {
    if m.is_empty() {
        return Err(Error::validation("svd of an empty matrix"));
    }
    if !m.is_finite() {
        return Err(Error::validation("svd input contains non-finite entries"));
    }
    Ok(())
}

/// Column-major working storage: `q` columns of length `p`, plus optional `q × q`
/// rotation accumulator (also column-major).
struct ColumnWork {
    p: usize,
    q: usize,
    cols: Vec<f64>,
    v: Option<Vec<f64>>,
}

impl ColumnWork {
    fn from_matrix(m: &Matrix, want_v: bool) -> Self {
        let (p, q) = m.shape();
        let mut cols = vec![0.0; p * q];
        for r in 0..p {
            for (c, &x) in m.row(r).iter().enumerate() {
                cols[c * p + r] = x;
            }
        }
        let v = want_v.then(|| {
            let mut v = vec![0.0; q * q];
            for i in 0..q {
                v[i * q + i] = 1.0;
            }
            v
        });
        ColumnWork { p, q, cols, v }
    }

    fn orthogonalize(&mut self) -> Result<()> {
        let (p, q) = (self.p, self.q);
        let tol = f64::EPSILON * (p as f64).sqrt();
        // Columns below the round-off floor carry no information; rotating them
        // against each other never settles.
        let frob2: f64 = self.cols.iter().map(|x| x * x).sum();
        let floor = f64::EPSILON * f64::EPSILON * frob2;
        for _sweep in 0..MAX_SWEEPS {
            let mut rotated = false;
            for i in 0..q.saturating_sub(1) {
                for j in i + 1..q {
                    let (head, tail) = self.cols.split_at_mut(j * p);
                    let ci = &mut head[i * p..(i + 1) * p];
                    let cj = &mut tail[..p];
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for (&x, &y) in ci.iter().zip(cj.iter()) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    if gamma == 0.0 || alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let (c, s) = jacobi_rotation(alpha, beta, gamma);
                    rotate(ci, cj, c, s);
                    if let Some(v) = self.v.as_mut() {
                        let (vh, vt) = v.split_at_mut(j * q);
                        rotate(&mut vh[i * q..(i + 1) * q], &mut vt[..q], c, s);
                    }
                }
            }
            if !rotated {
                return Ok(());
            }
        }
        Err(Error::NoConvergence { sweeps: MAX_SWEEPS })
    }

    fn norms(&self) -> Vec<f64> {
        self.cols
            .chunks_exact(self.p)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Sorted singular values, `U` (`p × q`) and `V` (`q × q`).
    fn finish(self) -> (Vec<f64>, Matrix, Matrix) {
        let (p, q) = (self.p, self.q);
        let norms = self.norms();
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();

        let cutoff = sigma[0] * f64::EPSILON * p as f64;
        let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut deficient = Vec::new();
        for (slot, &src) in order.iter().enumerate() {
            let col = &self.cols[src * p..(src + 1) * p];
            if sigma[slot] > cutoff && sigma[slot] > 0.0 {
                u_cols.push(col.iter().map(|x| x / sigma[slot]).collect());
            } else {
                u_cols.push(Vec::new());
                deficient.push(slot);
            }
        }
        for slot in deficient {
            let basis: Vec<&[f64]> = u_cols
                .iter()
                .filter(|c| !c.is_empty())
                .map(Vec::as_slice)
                .collect();
            let fill = complement_vector(p, &basis);
            u_cols[slot] = fill;
        }

        let u = Matrix::from_fn(p, q, |r, c| u_cols[c][r]);
        let v_data = self.v.expect("finish requires accumulated rotations");
        let v = Matrix::from_fn(q, q, |r, c| v_data[order[c] * q + r]);
        (sigma, u, v)
    }
}

/// Cosine and sine that zero the off-diagonal of the 2×2 Gram block
/// `[[alpha, gamma], [gamma, beta]]`.
#[inline]
fn jacobi_rotation(alpha: f64, beta: f64, gamma: f64) -> (f64, f64) {
    let zeta = (beta - alpha) / (2.0 * gamma);
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, c * t)
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Unit vector orthogonal to every vector in `basis` (which must be orthonormal
/// and span less than the full space). Picks the coordinate axis with the largest
/// residual after two rounds of Gram-Schmidt.
fn complement_vector(p: usize, basis: &[&[f64]]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for axis in 0..p {
        let mut cand = vec![0.0; p];
        cand[axis] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj: f64 = cand.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                for (x, y) in cand.iter_mut().zip(b.iter()) {
                    *x -= proj * y;
                }
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, cand));
        }
    }
    let (norm, mut v) = best.expect("p >= 1");
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_orthonormality_error(m: &Matrix) -> f64 {
        let g = m.t_matmul(m);
        g.max_abs_diff(&Matrix::identity(g.rows()))
    }

    fn lcg_matrix(rows: usize, cols: usize, mut state: u64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_is_sorted() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let s = svd(&m).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 1.0]);
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn tall_and_wide_factorizations_reconstruct() {
        for (r, c) in [(7, 3), (3, 7), (5, 5), (1, 6), (6, 1)] {
            let m = lcg_matrix(r, c, (r * 31 + c) as u64);
            let s = svd(&m).unwrap();
            let k = r.min(c);
            assert_eq!(s.singular_values.len(), k);
            assert_eq!(s.left_vectors.shape(), (r, k));
            assert_eq!(s.right_vectors.shape(), (c, k));
            let scale = s.singular_values[0];
            assert!(s.reconstruct().max_abs_diff(&m) <= 1e-10 * scale);
            assert!(max_orthonormality_error(&s.left_vectors) < 1e-10);
            assert!(max_orthonormality_error(&s.right_vectors) < 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_input_still_gets_orthonormal_factors() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [0.3, -0.7, 2.0];
        let m = Matrix::from_fn(4, 3, |r, c| u[r] * v[c]);
        let s = svd(&m).unwrap();
        assert!(s.singular_values[1] < 1e-14 * s.singular_values[0]);
        assert!(max_orthonormality_error(&s.left_vectors) < 1e-10);
        assert!(max_orthonormality_error(&s.right_vectors) < 1e-10);
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn zero_matrix_is_handled() {
        let s = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        assert!(max_orthonormality_error(&s.left_vectors) < 1e-12);
    }

    #[test]
    fn values_only_path_agrees_with_full_svd() {
        let m = lcg_matrix(9, 20, 5);
        let full = svd(&m).unwrap().singular_values;
        let only = singular_values(&m).unwrap();
        for (a, b) in full.iter().zip(&only) {
            assert!((a - b).abs() < 1e-13 * full[0]);
        }
    }

    #[test]
    fn is_deterministic() {
        let m = lcg_matrix(6, 4, 99);
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(a.singular_values, b.singular_values);
        assert_eq!(a.left_vectors, b.left_vectors);
    }
}
