//! Dense tensors, a reverse-mode gradient tape, AdamW and a
//! finite-difference gradient checker.

mod adamw;
mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Norm guard for every normalization.
pub const NORM_EPS: f64 = 1e-12;

/// `v / ‖v‖₂`.
pub fn normalize(v: &Tensor) -> Result<Tensor> {
    let n = kernels::norm(v.data());
    if n <= NORM_EPS {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(kernels::scale(v, 1.0 / n))
}

/// Cosine similarity of two equal-length vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let (na, nb) = (kernels::norm(a.data()), kernels::norm(b.data()));
    if na <= NORM_EPS {
        return Err(Error::DegenerateVector { norm: na });
    }
    if nb <= NORM_EPS {
        return Err(Error::DegenerateVector { norm: nb });
    }
    Ok((kernels::dot(a.data(), b.data()) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn log_softmax(logits: &Tensor) -> Tensor {
    kernels::log_softmax_rows(logits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(d: &[f64]) -> Tensor {
        Tensor::vector(d.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&v(&[1.0, 0.0, 0.0])).unwrap().data(), &[1.0, 0.0, 0.0]);
        let n = normalize(&v(&[3.0, 4.0])).unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-15);
        assert!((n.data()[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            normalize(&v(&[0.0, 0.0])),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.6, 0.8]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), -1.0);
        assert!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn log_softmax_examples() {
        let out = log_softmax(&v(&[0.0, 0.0]));
        for &x in out.data() {
            assert!((x + std::f64::consts::LN_2).abs() < 1e-15);
        }
        let out = log_softmax(&v(&[1000.0, 0.0]));
        assert!(out.data()[0].abs() < 1e-12);
        assert!((out.data()[1] + 1000.0).abs() < 1e-9);
        assert!(out.is_finite());
    }

    #[test]
    fn log_softmax_reference_values() {
        // ln(e + 1 + e^-1) = 1.40760596444438030448 (mpmath, 50 digits)
        let lse = 1.407_605_964_444_380_3_f64;
        let out = log_softmax(&v(&[1.0, 0.0, -1.0]));
        let expected = [1.0 - lse, -lse, -1.0 - lse];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
        let total: f64 = out.data().iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_unit_norm_over_wide_range() {
        for exp in -6..=6 {
            let s = 10f64.powi(exp);
            let n = normalize(&v(&[s * 0.3, -s * 1.7, s * 2.2])).unwrap();
            let len = kernels::norm(n.data());
            assert!((len - 1.0).abs() < 1e-9);
        }
    }
}
