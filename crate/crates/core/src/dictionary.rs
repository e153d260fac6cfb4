//! The growing dictionary of basis-function centers (the BV set).
//!
//! The dictionary owns the ordered centers, the maintained inverse Gram
//! matrix K_mm⁻¹ and the novelty test: a candidate's squared residual δ
//! from projecting it onto the span of the current centers in the kernel
//! feature space. Candidates join only while novel (δ strictly above TOL1);
//! centers are never removed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, StateAction};
use crate::linalg::{bordered_inverse, rebuild_drift, SquareInverse};

/// Growth events between consecutive debug-mode rebuild checks.
const REBUILD_PERIOD: usize = 1000;
const REBUILD_DRIFT_LIMIT: f64 = 1e-6;

/// Projection of a query point onto the span of the dictionary:
/// coefficients `a = K_mm⁻¹ k_m(x)` and residual `δ = k(x,x) − k_m(x)ᵀa`,
/// clamped at zero against rounding.
#[derive(Debug, Clone)]
pub struct Projection {
    pub a: DVector<f64>,
    pub delta: f64,
    /// k_m(x) against the current centers; reused by the evaluator.
    pub k_vec: DVector<f64>,
}

/// True iff the candidate is novel enough to enter the dictionary.
/// The tie δ = TOL1 counts as not novel.
pub fn is_novel(proj: &Projection, tol1: f64) -> bool {
    proj.delta > tol1
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    centers: Vec<StateAction>,
    /// Number of transitions processed when each center was inserted;
    /// 0 for the seed centers. Strictly increasing after the seeds.
    insertion_steps: Vec<usize>,
    kmm_inv: SquareInverse,
    grows_since_check: usize,
}

impl Dictionary {
    /// Seeds the dictionary with its first center.
    pub fn seeded(spec: &KernelSpec, x0: StateAction) -> Result<Self> {
        let k00 = spec.eval(&x0, &x0)?;
        if k00.abs() <= FLOOR_ABS {
            return Err(Error::SingularGrowth { delta: k00, floor: FLOOR_ABS });
        }
        Ok(Dictionary {
            centers: vec![x0],
            insertion_steps: vec![0],
            kmm_inv: SquareInverse::from_inverse(DMatrix::from_element(1, 1, 1.0 / k00)),
            grows_since_check: 0,
        })
    }

    /// Builds a fixed dictionary from explicit centers (dense Gram
    /// inversion); used for runs with growth disabled.
    pub fn from_centers(
        spec: &KernelSpec,
        centers: Vec<StateAction>,
    ) -> Result<Self> {
        let steps = vec![0; centers.len()];
        Dictionary::restore(spec, centers, steps)
    }

    /// Rebuilds a dictionary from checkpointed centers and their recorded
    /// insertion steps.
    pub fn restore(
        spec: &KernelSpec,
        centers: Vec<StateAction>,
        insertion_steps: Vec<usize>,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if centers.len() != insertion_steps.len() {
            return Err(Error::Snapshot(
                "centers and insertion steps disagree in length".into(),
            ));
        }
        let gram = gram_matrix(spec, &centers)?;
        let kmm_inv = SquareInverse::from_matrix(&gram)?;
        Ok(Dictionary { centers, insertion_steps, kmm_inv, grows_since_check: 0 })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[StateAction] {
        &self.centers
    }

    pub fn insertion_steps(&self) -> &[usize] {
        &self.insertion_steps
    }

    pub fn kmm_inv(&self) -> &SquareInverse {
        &self.kmm_inv
    }

    /// k_m(x) against the current centers.
    pub fn kernel_vector(&self, spec: &KernelSpec, x: &StateAction) -> Result<DVector<f64>> {
        spec.eval_vector(&self.centers, x)
    }

    /// Projects a query onto the span of the dictionary.
    pub fn project(&self, spec: &KernelSpec, x: &StateAction) -> Result<Projection> {
        let k_vec = self.kernel_vector(spec, x)?;
        let a = self.kmm_inv.mul_vec(&k_vec);
        let k_self = spec.eval(x, x)?;
        let delta = (k_self - k_vec.dot(&a)).max(0.0);
        Ok(Projection { a, delta, k_vec })
    }

    /// Adds a center, updating K_mm⁻¹ by the bordered-inverse formula with
    /// pivot δ. The projection must correspond to `x` against the current
    /// centers.
    pub fn grow(
        &mut self,
        spec: &KernelSpec,
        x: StateAction,
        proj: &Projection,
        step: usize,
    ) -> Result<()> {
        let floor = self.kmm_inv.default_floor();
        let grown = bordered_inverse(&self.kmm_inv, &proj.a, &proj.a, proj.delta, floor)?;
        self.kmm_inv = grown;
        self.centers.push(x);
        self.insertion_steps.push(step);
        self.grows_since_check += 1;
        #[cfg(debug_assertions)]
        if self.grows_since_check >= REBUILD_PERIOD {
            self.grows_since_check = 0;
            let drift = self.rebuild_drift(spec).unwrap_or(f64::INFINITY);
            debug_assert!(
                drift < REBUILD_DRIFT_LIMIT,
                "K_mm inverse drifted to {drift:.3e}"
            );
        }
        #[cfg(not(debug_assertions))]
        let _ = spec;
        Ok(())
    }

    /// Exact Gram matrix of the current centers.
    pub fn gram(&self, spec: &KernelSpec) -> Result<DMatrix<f64>> {
        gram_matrix(spec, &self.centers)
    }

    /// Max-norm drift of the maintained inverse against the exact Gram.
    pub fn rebuild_drift(&self, spec: &KernelSpec) -> Result<f64> {
        Ok(rebuild_drift(&self.kmm_inv, &self.gram(spec)?))
    }

    /// CSV dump of the centers: one row per center with its insertion step,
    /// action id and state coordinates.
    pub fn to_csv(&self) -> String {
        let dim = self.centers.first().map_or(0, |c| c.state.len());
        let mut out = String::from("center_index,insertion_step,action");
        for d in 0..dim {
            out.push_str(&format!(",s{d}"));
        }
        out.push('\n');
        for (i, (c, step)) in self.centers.iter().zip(&self.insertion_steps).enumerate() {
            out.push_str(&format!("{i},{step},{}", c.action));
            for v in &c.state {
                out.push_str(&format!(",{v:.12}"));
            }
            out.push('\n');
        }
        out
    }
}

const FLOOR_ABS: f64 = 1e-12;

fn gram_matrix(spec: &KernelSpec, centers: &[StateAction]) -> Result<DMatrix<f64>> {
    let m = centers.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = spec.eval(&centers[i], &centers[j])?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}
