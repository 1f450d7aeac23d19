//! Dense linear algebra: the matrix carrier, SVD, numerical rank and condition numbers.

mod matrix;
mod svd;

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub use matrix::{gemm, Matrix};
pub use svd::{singular_values, svd, SvdResult, MAX_SWEEPS};

use crate::error::{Error, Result};

/// Relative tolerance used to decide numerical rank, scaled by `σ₁ · max(rows, cols)`.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Condition number, or an explicit flag when the matrix is numerically rank deficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

impl Kappa {
    pub fn is_finite(self) -> bool {
        matches!(self, Kappa::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Kappa::Finite(v) => Some(v),
            Kappa::Infinite => None,
        }
    }

    /// `f64::INFINITY` for the rank-deficient flag.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Finite(v) => write!(f, "{v}"),
            Kappa::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Kappa::Finite(v) => s.serialize_f64(*v),
            Kappa::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct KappaVisitor;
        impl Visitor<'_> for KappaVisitor {
            type Value = Kappa;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Kappa, E> {
                Ok(Kappa::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Kappa, E> {
                Ok(Kappa::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Kappa, E> {
                Ok(Kappa::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Kappa, E> {
                match v {
                    "inf" => Ok(Kappa::Infinite),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(KappaVisitor)
    }
}

fn rank_threshold(m: &Matrix, sigma_max: f64, rank_tol: f64) -> f64 {
    rank_tol * sigma_max * m.rows().max(m.cols()) as f64
}

fn check_tol(rank_tol: f64) -> Result<()> {
    if !(rank_tol.is_finite() && rank_tol > 0.0) {
        return Err(Error::validation(format!(
            "rank_tol must be positive and finite, got {rank_tol}"
        )));
    }
    Ok(())
}

/// `σ₁ / σ_k` with `k = min(rows, cols)`, or [`Kappa::Infinite`] when
/// `σ_k <= rank_tol · σ₁ · max(rows, cols)` (including the zero matrix).
pub fn condition_number(m: &Matrix, rank_tol: f64) -> Result<Kappa> {
    check_tol(rank_tol)?;
    let sigma = singular_values(m)?;
    Ok(kappa_from_spectrum(m, &sigma, rank_tol))
}

pub(crate) fn kappa_from_spectrum(m: &Matrix, sigma: &[f64], rank_tol: f64) -> Kappa {
    let (largest, smallest) = (sigma[0], sigma[sigma.len() - 1]);
    if smallest > rank_threshold(m, largest, rank_tol) {
        Kappa::Finite((largest / smallest).max(1.0))
    } else {
        Kappa::Infinite
    }
}

/// Number of singular values above `rank_tol · σ₁ · max(rows, cols)`.
pub fn numerical_rank(m: &Matrix, rank_tol: f64) -> Result<usize> {
    check_tol(rank_tol)?;
    let sigma = singular_values(m)?;
    let threshold = rank_threshold(m, sigma[0], rank_tol);
    Ok(sigma.iter().filter(|&&s| s > threshold).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_perfectly_conditioned() {
        let k = condition_number(&Matrix::identity(5), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k, Kappa::Finite(1.0));
    }

    #[test]
    fn diagonal_ratio() {
        let k = condition_number(&Matrix::from_diag(&[4.0, 2.0]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k, Kappa::Finite(2.0));
    }

    #[test]
    fn zero_matrix_is_flagged_not_an_error() {
        let z = Matrix::zeros(3, 3);
        assert_eq!(condition_number(&z, DEFAULT_RANK_TOL).unwrap(), Kappa::Infinite);
        assert_eq!(numerical_rank(&z, DEFAULT_RANK_TOL).unwrap(), 0);
    }

    #[test]
    fn rank_of_identity_and_outer_product() {
        assert_eq!(numerical_rank(&Matrix::identity(4), DEFAULT_RANK_TOL).unwrap(), 4);
        let a = [0.3, -1.2, 0.8, 2.0, -0.1, 0.7, 1.5, -0.4];
        let b = [1.1, 0.2, -0.9, 0.4, 0.6, -1.3, 0.05, 0.9];
        let outer = Matrix::from_fn(8, 8, |r, c| a[r] * b[c]);
        assert_eq!(numerical_rank(&outer, DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(condition_number(&outer, DEFAULT_RANK_TOL).unwrap(), Kappa::Infinite);
    }

    #[test]
    fn tolerance_must_be_positive() {
        let m = Matrix::identity(2);
        assert!(numerical_rank(&m, 0.0).is_err());
        assert!(condition_number(&m, f64::NAN).is_err());
    }

    #[test]
    fn kappa_json_round_trip() {
        let ks = vec![Kappa::Finite(1.5), Kappa::Infinite];
        let text = serde_json::to_string(&ks).unwrap();
        assert_eq!(text, r#"[1.5,"inf"]"#);
        let back: Vec<Kappa> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ks);
    }
}
