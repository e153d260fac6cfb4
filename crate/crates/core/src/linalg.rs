//! Rank-1 inverse propagation.
//!
//! Two identities carry the whole recursion: the Sherman–Morrison update
//! for `(B + u vᵀ)⁻¹` (asymmetric form included, since the LSTD cross
//! product matrix is not symmetric) and the partitioned-inverse formula for
//! a matrix bordered by one row and one column. Both divide by a pivot
//! scalar; updates whose pivot magnitude falls below a floor are refused so
//! the caller can skip the step instead of amplifying rounding error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative scale of the default singularity floor.
pub const FLOOR_SCALE: f64 = 1e-12;

/// A maintained m×m matrix inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareInverse {
    inv: DMatrix<f64>,
}

impl SquareInverse {
    /// Wraps an already-inverted matrix.
    pub fn from_inverse(inv: DMatrix<f64>) -> Self {
        assert_eq!(inv.nrows(), inv.ncols(), "inverse must be square");
        SquareInverse { inv }
    }

    /// Dense inversion of a source matrix; used at seed time and by
    /// rebuild checks, never on the per-step path.
    pub fn from_matrix(source: &DMatrix<f64>) -> Result<Self> {
        source
            .clone()
            .try_inverse()
            .map(SquareInverse::from_inverse)
            .ok_or(Error::OracleSingular)
    }

    pub fn dim(&self) -> usize {
        self.inv.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inv
    }

    /// Default pivot floor: 1e-12 · (1 + |trace|) of the maintained inverse.
    pub fn default_floor(&self) -> f64 {
        FLOOR_SCALE * (1.0 + self.inv.trace().abs())
    }

    /// Multiplies the maintained inverse by a vector.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inv * v
    }

    /// Multiplies the transpose of the maintained inverse by a vector
    /// (i.e. (vᵀ B⁻¹)ᵀ).
    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.inv.tr_mul(v)
    }

    /// Forces exact symmetry; BRM/LSPE inverses are symmetric by
    /// construction up to rounding.
    pub fn symmetrize(&mut self) {
        let t = self.inv.transpose();
        self.inv += &t;
        self.inv *= 0.5;
    }
}

/// Intermediates of a Sherman–Morrison update, kept so the evaluator can
/// reuse them for its growing-step scalars.
pub struct SmParts {
    pub updated: SquareInverse,
    /// B⁻¹ u (the old inverse applied to the column factor).
    pub inv_u: DVector<f64>,
    /// B⁻ᵀ v (the old inverse transposed applied to the row factor).
    pub inv_t_v: DVector<f64>,
    /// 1 + vᵀ B⁻¹ u.
    pub denominator: f64,
}

/// Inverse of `B + u vᵀ` given B⁻¹, with all intermediates exposed.
pub fn sm_update_parts(
    b_inv: &SquareInverse,
    u: &DVector<f64>,
    v: &DVector<f64>,
    floor: f64,
) -> Result<SmParts> {
    assert_eq!(u.len(), b_inv.dim(), "column factor dimension");
    assert_eq!(v.len(), b_inv.dim(), "row factor dimension");
    let inv_u = b_inv.mul_vec(u);
    let inv_t_v = b_inv.tr_mul_vec(v);
    let denominator = 1.0 + v.dot(&inv_u);
    if denominator.abs() <= floor {
        return Err(Error::SingularUpdate { denominator, floor });
    }
    let mut inv = b_inv.as_matrix().clone();
    // inv -= (B⁻¹u)(vᵀB⁻¹)/denominator
    inv.ger(-1.0 / denominator, &inv_u, &inv_t_v, 1.0);
    Ok(SmParts {
        updated: SquareInverse::from_inverse(inv),
        inv_u,
        inv_t_v,
        denominator,
    })
}

/// Sherman–Morrison: the inverse of `B + u vᵀ`.
///
/// Fails with [`Error::SingularUpdate`] when |1 + vᵀB⁻¹u| is at or below
/// `floor`; the caller must skip the step or rebuild.
pub fn sm_update(
    b_inv: &SquareInverse,
    u: &DVector<f64>,
    v: &DVector<f64>,
    floor: f64,
) -> Result<SquareInverse> {
    sm_update_parts(b_inv, u, v, floor).map(|p| p.updated)
}

/// Partitioned inverse of `[[B, col], [rowᵀ, *]]` assembled from already
/// computed pieces: `col_part = B⁻¹·col`, `row_part = B⁻ᵀ·row` and the
/// Schur pivot `delta_b`. Symmetric borders pass the same vector twice.
pub fn bordered_inverse(
    b_inv: &SquareInverse,
    col_part: &DVector<f64>,
    row_part: &DVector<f64>,
    delta_b: f64,
    floor: f64,
) -> Result<SquareInverse> {
    let m = b_inv.dim();
    assert_eq!(col_part.len(), m);
    assert_eq!(row_part.len(), m);
    if delta_b.abs() <= floor {
        return Err(Error::SingularGrowth { delta: delta_b, floor });
    }
    let mut out = DMatrix::zeros(m + 1, m + 1);
    out.view_mut((0, 0), (m, m)).copy_from(b_inv.as_matrix());
    // stack [-col_part; 1] and [-row_part; 1], add their outer product / Δ_b
    let u = DVector::from_fn(m + 1, |i, _| if i < m { -col_part[i] } else { 1.0 });
    let v = DVector::from_fn(m + 1, |i, _| if i < m { -row_part[i] } else { 1.0 });
    out.ger(1.0 / delta_b, &u, &v, 1.0);
    Ok(SquareInverse::from_inverse(out))
}

/// Inverse of the symmetric bordered matrix `[[B, b], [bᵀ, b*]]`, returning
/// the updated inverse together with the pivot Δ_b = b* − bᵀB⁻¹b.
pub fn grow_inverse(
    b_inv: &SquareInverse,
    b: &DVector<f64>,
    b_star: f64,
    floor: f64,
) -> Result<(SquareInverse, f64)> {
    let inv_b = b_inv.mul_vec(b);
    let delta_b = b_star - b.dot(&inv_b);
    let grown = bordered_inverse(b_inv, &inv_b, &inv_b, delta_b, floor)?;
    Ok((grown, delta_b))
}

/// Max-norm of `maintained·source − I`; the drift measure used by the
/// periodic rebuild checks.
pub fn rebuild_drift(maintained: &SquareInverse, source: &DMatrix<f64>) -> f64 {
    let product = maintained.as_matrix() * source;
    let n = product.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((product[(i, j)] - target).abs());
        }
    }
    worst
}
