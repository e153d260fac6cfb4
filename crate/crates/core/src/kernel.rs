//! Positive-definite kernels over state-action tuples.
//!
//! The working kernel is a product of a Gaussian RBF over the continuous
//! state and a Kronecker delta over the discrete action,
//! `k([s,a],[s',a']) = exp(-h‖s-s'‖²) · [a = a']`, so that values lie in
//! [0, 1] with k(x, x) = 1.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A state-action tuple, the input point of all kernel evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAction {
    pub state: Vec<f64>,
    pub action: usize,
}

impl StateAction {
    pub fn new(state: Vec<f64>, action: usize) -> Self {
        StateAction { state, action }
    }
}

/// Kernel family selector. Enumerated rather than pluggable so that configs
/// serialize exactly and experiments replay bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    GaussianRbfProduct,
}

/// Kernel parameters: the RBF exponent coefficient `h` (inverse
/// lengthscale; the reference setting is h = 5, i.e. h⁻¹ = 0.2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub h: f64,
}

impl KernelSpec {
    pub fn gaussian_rbf_product(h: f64) -> Self {
        assert!(h > 0.0, "inverse lengthscale h must be positive");
        KernelSpec { kind: KernelKind::GaussianRbfProduct, h }
    }

    /// Evaluates k(x, y). Symmetric, bounded in [0, 1], equal to 1 iff
    /// the two tuples coincide.
    pub fn eval(&self, x: &StateAction, y: &StateAction) -> Result<f64> {
        if x.state.len() != y.state.len() {
            return Err(Error::DimensionMismatch {
                expected: x.state.len(),
                got: y.state.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Same as [`eval`](Self::eval) without the dimension check; used on
    /// hot paths where inputs were validated at ingestion.
    #[inline]
    pub fn eval_unchecked(&self, x: &StateAction, y: &StateAction) -> f64 {
        match self.kind {
            KernelKind::GaussianRbfProduct => {
                if x.action != y.action {
                    return 0.0;
                }
                // single pass over the coordinates, no temporary buffer
                let mut sq = 0.0;
                for (a, b) in x.state.iter().zip(y.state.iter()) {
                    let d = a - b;
                    sq += d * d;
                }
                (-self.h * sq).exp()
            }
        }
    }

    /// The m×1 feature vector k_m(x) of a query against an ordered list of
    /// centers; component i is k(centers[i], x).
    pub fn eval_vector(&self, centers: &[StateAction], x: &StateAction) -> Result<DVector<f64>> {
        if centers.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        for c in centers {
            if c.state.len() != x.state.len() {
                return Err(Error::DimensionMismatch {
                    expected: c.state.len(),
                    got: x.state.len(),
                });
            }
        }
        Ok(DVector::from_iterator(
            centers.len(),
            centers.iter().map(|c| self.eval_unchecked(c, x)),
        ))
    }
}
