//! The ambient Euclidean space: translation vector and, on `ℂⁿ = ℝ²ⁿ`,
//! the complex structure.
//!
//! Complex coordinates are interleaved as `(x₁, y₁, …, x_n, y_n)` with
//! `J∂x_k = ∂y_k` and `J∂y_k = −∂x_k`. The symplectic form is
//! `ω(U, V) = ⟨JU, V⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::JetVec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientStructure {
    dim: usize,
    translation: Vec<f64>,
}

impl AmbientStructure {
    pub fn new(translation: Vec<f64>) -> Result<Self> {
        if translation.is_empty() {
            return Err(Error::InvalidSpec("ambient dimension must be positive".into()));
        }
        if translation.iter().all(|&t| t == 0.0) || translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSpec("translation vector T must be finite and nonzero".into()));
        }
        Ok(AmbientStructure { dim: translation.len(), translation })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn is_complex(&self) -> bool {
        self.dim % 2 == 0
    }
}

/// `J` on an interleaved real vector.
pub fn apply_j(v: &[f64]) -> Vec<f64> {
    debug_assert!(v.len() % 2 == 0);
    let mut out = vec![0.0; v.len()];
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

pub fn apply_j_jet(v: &JetVec) -> JetVec {
    debug_assert!(v.dim() % 2 == 0);
    let mut out = v.clone();
    for k in 0..v.dim() / 2 {
        out.0[2 * k] = -v.0[2 * k + 1];
        out.0[2 * k + 1] = v.0[2 * k];
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `ω(U, V) = ⟨JU, V⟩`.
pub fn omega(u: &[f64], v: &[f64]) -> f64 {
    dot(&apply_j(u), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn j_maps_dx_to_dy() {
        assert_eq!(apply_j(&[1.0, 0.0, 0.0, 0.0]), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(apply_j(&[0.0, 0.0, 0.0, 1.0]), vec![0.0, 0.0, -1.0, 0.0]);
        assert_eq!(omega(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn rejects_zero_translation() {
        assert!(AmbientStructure::new(vec![0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn complex_structure_identities(
            u in prop::collection::vec(-10.0f64..10.0, 6),
            v in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            let jju = apply_j(&apply_j(&u));
            for (a, b) in jju.iter().zip(&u) {
                prop_assert_eq!(*a, -*b);
            }
            prop_assert!((dot(&apply_j(&u), &apply_j(&v)) - dot(&u, &v)).abs() <= 1e-12 * (1.0 + norm(&u) * norm(&v)));
            prop_assert!((omega(&u, &v) + omega(&v, &u)).abs() <= 1e-12 * (1.0 + norm(&u) * norm(&v)));
        }
    }
}
