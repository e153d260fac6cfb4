//! The three recursive policy-evaluation engines: BRM, LSTD(λ), LSPE(λ).
//!
//! Each engine maintains the inverse of its m×m cross-product matrix and
//! updates it by rank-1 identities: a Sherman–Morrison row update per
//! observed transition (the normal step) and a partitioned-inverse border
//! when a basis function joins the dictionary (the growing step). The
//! growing-step scalars use the sparse structure of the appended column, so
//! both steps cost O(m²) regardless of how many transitions were seen.
//!
//! Cross-product matrices per method, with K/H/Z the data matrices built
//! from dictionary feature rows and Λ the eligibility weighting:
//!
//! * BRM:  P = HᵀH + σ²K_mm,  w = P⁻¹Hᵀr
//! * LSTD: P = ZᵀH + σ²K_mm,  w = P⁻¹Zᵀr          (P not symmetric)
//! * LSPE: P = KᵀK + σ²K_mm,  w ← w + ηP⁻¹(b − Aw), A = ZᵀH, b = Zᵀr

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, Projection};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, StateAction};
use crate::linalg::{bordered_inverse, sm_update_parts, SquareInverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Brm,
    Lstd,
    Lspe,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Brm => "brm",
            Method::Lstd => "lstd",
            Method::Lspe => "lspe",
        }
    }
}

/// Scalar hyper-parameters shared by the engines. `eta_decay_c = 0` keeps
/// the LSPE step size constant at `eta`; a positive value switches to the
/// diminishing schedule η_t = c/(c + t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub gamma: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub eta_decay_c: f64,
}

impl Hyper {
    pub fn eta_at(&self, t: usize) -> f64 {
        if self.eta_decay_c > 0.0 {
            self.eta_decay_c / (self.eta_decay_c + t as f64)
        } else {
            self.eta
        }
    }
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { gamma: 0.99, lambda: 0.5, sigma2: 0.1, eta: 0.5, eta_decay_c: 0.0 }
    }
}

/// One sample of the (adapted) infinite trajectory. `gamma_eff` equals the
/// run discount for ordinary steps and 0 for the zero-reward transition
/// bridging an episode end to the next start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: StateAction,
    pub reward: f64,
    pub x_next: StateAction,
    pub gamma_eff: f64,
}

/// Per-transition kernel quantities shared by all methods:
/// h = k_t − γ_eff·k_next and h* = k*_t − γ_eff·k*_next.
#[derive(Debug, Clone)]
pub struct StepVectors {
    pub k_t: DVector<f64>,
    pub k_next: DVector<f64>,
    pub h: DVector<f64>,
    pub k_star_t: f64,
    pub k_star_next: f64,
    pub h_star: f64,
}

impl StepVectors {
    pub fn compute(spec: &KernelSpec, dict: &Dictionary, tr: &Transition) -> Result<Self> {
        let k_t = dict.kernel_vector(spec, &tr.x)?;
        let k_next = dict.kernel_vector(spec, &tr.x_next)?;
        let h = &k_t - &k_next * tr.gamma_eff;
        let k_star_t = spec.eval(&tr.x, &tr.x_next)?;
        let k_star_next = spec.eval(&tr.x_next, &tr.x_next)?;
        let h_star = k_star_t - tr.gamma_eff * k_star_next;
        Ok(StepVectors { k_t, k_next, h, k_star_t, k_star_next, h_star })
    }
}

/// Intermediates of the most recent normal step, cached because the growing
/// step at the same transition reuses the pre-update state they encode.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub vectors: StepVectors,
    /// Δ, the Sherman–Morrison denominator of the normal step.
    pub delta: f64,
    /// ϱ = r − hᵀw, with w the pre-step weights.
    pub rho: f64,
    /// P_tm⁻¹ applied to the method's update vector (h, z or k_t).
    gain_vec: DVector<f64>,
    /// P_tm⁻ᵀ h (LSTD only; equals `gain_vec` for the symmetric methods).
    row_vec: Option<DVector<f64>>,
    z_prev: Option<DVector<f64>>,
    b_prev: Option<DVector<f64>>,
    a_prev: Option<DMatrix<f64>>,
    w_prev: DVector<f64>,
    eta_t: f64,
    gamma_eff: f64,
}

/// Outcome of the supervised usefulness test for a growth candidate.
#[derive(Debug, Clone, Copy)]
pub struct Usefulness {
    pub kappa: f64,
    pub delta_b: f64,
    /// Reduction of the regularized cost if the candidate is admitted;
    /// compared against TOL2.
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluatorState {
    method: Method,
    hyper: Hyper,
    w: DVector<f64>,
    p_inv: SquareInverse,
    xi: f64,
    z: DVector<f64>,
    b: DVector<f64>,
    a_mat: DMatrix<f64>,
    t: usize,
}

impl EvaluatorState {
    /// Initializes on a seeded dictionary: P = σ²K_mm (so that the inverse
    /// is σ⁻²·K_mm⁻¹, available without a dense inversion), w = z = b = 0,
    /// A = 0, ξ = 0.
    pub fn init(method: Method, hyper: Hyper, dict: &Dictionary) -> Self {
        let m = dict.len();
        let p_inv = SquareInverse::from_inverse(dict.kmm_inv().as_matrix() / hyper.sigma2);
        EvaluatorState {
            method,
            hyper,
            w: DVector::zeros(m),
            p_inv,
            xi: 0.0,
            z: DVector::zeros(m),
            b: DVector::zeros(m),
            a_mat: if method == Method::Lspe {
                DMatrix::zeros(m, m)
            } else {
                DMatrix::zeros(0, 0)
            },
            t: 0,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn p_inv(&self) -> &SquareInverse {
        &self.p_inv
    }

    pub fn trace(&self) -> &DVector<f64> {
        &self.z
    }

    /// Regularized cost ξ. Exact recursion for BRM; for LSPE it tracks the
    /// cumulative supervised reductions (relative to its starting level).
    pub fn cost(&self) -> f64 {
        self.xi
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Q̃(x) = k_m(x)ᵀw.
    pub fn predict(&self, dict: &Dictionary, spec: &KernelSpec, x: &StateAction) -> Result<f64> {
        let k = dict.kernel_vector(spec, x)?;
        Ok(k.dot(&self.w))
    }

    /// Processes one transition on the fixed basis. On a singular rank-1
    /// update the state is left untouched and the error is returned so the
    /// caller can count the skip.
    pub fn normal_step(&mut self, tr: &Transition, vectors: StepVectors) -> Result<StepContext> {
        assert_eq!(vectors.k_t.len(), self.dim(), "step vectors sized to state");
        let floor = self.p_inv.default_floor();
        let rho = tr.reward - vectors.h.dot(&self.w);
        let eta_t = self.hyper.eta_at(self.t);

        match self.method {
            Method::Brm => {
                let parts = sm_update_parts(&self.p_inv, &vectors.h, &vectors.h, floor)?;
                let ctx = StepContext {
                    delta: parts.denominator,
                    rho,
                    gain_vec: parts.inv_u.clone(),
                    row_vec: None,
                    z_prev: None,
                    b_prev: None,
                    a_prev: None,
                    w_prev: self.w.clone(),
                    eta_t,
                    gamma_eff: tr.gamma_eff,
                    vectors,
                };
                self.w += &ctx.gain_vec * (rho / ctx.delta);
                self.xi += rho * rho / ctx.delta;
                self.p_inv = parts.updated;
                self.p_inv.symmetrize();
                self.t += 1;
                Ok(ctx)
            }
            Method::Lstd => {
                let z_prev = self.z.clone();
                let decay = tr.gamma_eff * self.hyper.lambda;
                let z_new = &z_prev * decay + &vectors.k_t;
                let parts = sm_update_parts(&self.p_inv, &z_new, &vectors.h, floor)?;
                let ctx = StepContext {
                    delta: parts.denominator,
                    rho,
                    gain_vec: parts.inv_u.clone(),
                    row_vec: Some(parts.inv_t_v.clone()),
                    z_prev: Some(z_prev),
                    b_prev: Some(self.b.clone()),
                    a_prev: None,
                    w_prev: self.w.clone(),
                    eta_t,
                    gamma_eff: tr.gamma_eff,
                    vectors,
                };
                self.w += &ctx.gain_vec * (rho / ctx.delta);
                self.b += &z_new * tr.reward;
                self.z = z_new;
                self.p_inv = parts.updated;
                self.t += 1;
                Ok(ctx)
            }
            Method::Lspe => {
                let z_prev = self.z.clone();
                let decay = tr.gamma_eff * self.hyper.lambda;
                let z_new = &z_prev * decay + &vectors.k_t;
                let parts = sm_update_parts(&self.p_inv, &vectors.k_t, &vectors.k_t, floor)?;
                let ctx = StepContext {
                    delta: parts.denominator,
                    rho,
                    gain_vec: parts.inv_u.clone(),
                    row_vec: None,
                    z_prev: Some(z_prev),
                    b_prev: Some(self.b.clone()),
                    a_prev: Some(self.a_mat.clone()),
                    w_prev: self.w.clone(),
                    eta_t,
                    gamma_eff: tr.gamma_eff,
                    vectors,
                };
                self.a_mat.ger(1.0, &z_new, &ctx.vectors.h, 1.0);
                self.b += &z_new * tr.reward;
                self.z = z_new;
                self.p_inv = parts.updated;
                self.p_inv.symmetrize();
                let residual = &self.b - &self.a_mat * &self.w;
                self.w += self.p_inv.mul_vec(&residual) * eta_t;
                self.t += 1;
                Ok(ctx)
            }
        }
    }

    /// Cost reduction obtained by admitting the candidate projected in
    /// `proj`, evaluated after the normal step recorded in `ctx`.
    ///
    /// BRM reads the reduction off its own growing-step scalars; LSPE uses
    /// its quadratic-objective form; LSTD, which has no explicit objective,
    /// evaluates the BRM reduction formula on its own maintained inverse.
    pub fn usefulness(&self, ctx: &StepContext, proj: &Projection) -> Result<Usefulness> {
        let sigma2 = self.hyper.sigma2;
        let floor = self.p_inv.default_floor();
        match self.method {
            Method::Brm => {
                let delta_h = ctx.vectors.h_star - ctx.vectors.h.dot(&proj.a);
                let delta_b = delta_h * delta_h / ctx.delta + sigma2 * proj.delta;
                if delta_b.abs() <= floor {
                    return Err(Error::SingularGrowth { delta: delta_b, floor });
                }
                let kappa = delta_h * ctx.rho / (ctx.delta * delta_b);
                Ok(Usefulness { kappa, delta_b, gain: kappa * kappa * delta_b })
            }
            Method::Lstd => {
                // associated BRM formulation: same scalars with this
                // method's inverse standing in for the BRM one
                let row_vec = ctx.row_vec.as_ref().expect("lstd context");
                let delta_assoc = 1.0 + ctx.vectors.h.dot(row_vec);
                if delta_assoc.abs() <= floor {
                    return Err(Error::SingularGrowth { delta: delta_assoc, floor });
                }
                let delta_h = ctx.vectors.h_star - ctx.vectors.h.dot(&proj.a);
                let delta_b = delta_h * delta_h / delta_assoc + sigma2 * proj.delta;
                if delta_b.abs() <= floor {
                    return Err(Error::SingularGrowth { delta: delta_b, floor });
                }
                let kappa = delta_h * ctx.rho / (delta_assoc * delta_b);
                Ok(Usefulness { kappa, delta_b, gain: kappa * kappa * delta_b })
            }
            Method::Lspe => {
                let (delta_b, w_b, z_star) = self.lspe_border(ctx, proj)?;
                let (c, d) = self.lspe_cd(ctx, proj, z_star);
                let num = c - w_b.dot(&d);
                let gain = num * num / delta_b;
                Ok(Usefulness { kappa: ctx.eta_t * num / delta_b, delta_b, gain })
            }
        }
    }

    /// Augments every maintained quantity for the basis function centered
    /// on `tr.x_next`, using the growing-step shortcuts. Must be called
    /// with the context of the normal step for the same transition and
    /// before the dictionary itself grows. The state is untouched on error.
    pub fn grow_step(
        &mut self,
        ctx: &StepContext,
        proj: &Projection,
        tr: &Transition,
    ) -> Result<()> {
        let sigma2 = self.hyper.sigma2;
        let floor = self.p_inv.default_floor();
        match self.method {
            Method::Brm => {
                let delta_h = ctx.vectors.h_star - ctx.vectors.h.dot(&proj.a);
                let delta_b = delta_h * delta_h / ctx.delta + sigma2 * proj.delta;
                let w_b = &proj.a + &ctx.gain_vec * (delta_h / ctx.delta);
                let grown = bordered_inverse(&self.p_inv, &w_b, &w_b, delta_b, floor)?;
                let kappa = delta_h * ctx.rho / (ctx.delta * delta_b);
                self.p_inv = grown;
                self.p_inv.symmetrize();
                self.w = append_scaled(&self.w, &w_b, kappa);
                self.xi -= kappa * kappa * delta_b;
                self.resize_aux();
                Ok(())
            }
            Method::Lstd => {
                let z_prev = ctx.z_prev.as_ref().expect("lstd context");
                let b_prev = ctx.b_prev.as_ref().expect("lstd context");
                let row_vec = ctx.row_vec.as_ref().expect("lstd context");
                let decay = ctx.gamma_eff * self.hyper.lambda;
                let z_star = decay * z_prev.dot(&proj.a) + ctx.vectors.k_star_t;
                let delta_1 = ctx.vectors.h_star - proj.a.dot(&ctx.vectors.h);
                let delta_2 = z_star - proj.a.dot(&self.z);
                let delta_b = delta_1 * delta_2 / ctx.delta + sigma2 * proj.delta;
                let w_b1 = &proj.a + &ctx.gain_vec * (delta_1 / ctx.delta);
                let w_b2 = &proj.a + row_vec * (delta_2 / ctx.delta);
                let grown = bordered_inverse(&self.p_inv, &w_b1, &w_b2, delta_b, floor)?;
                let kappa = delta_2 * ctx.rho / (ctx.delta * delta_b);
                self.p_inv = grown;
                self.w = append_scaled(&self.w, &w_b1, kappa);
                let b_tail = proj.a.dot(b_prev) + z_star * tr.reward;
                self.b = append(&self.b, b_tail);
                self.z = append(&self.z, z_star);
                Ok(())
            }
            Method::Lspe => {
                let (delta_b, w_b, z_star) = self.lspe_border(ctx, proj)?;
                let grown = bordered_inverse(&self.p_inv, &w_b, &w_b, delta_b, floor)?;
                let (c, d) = self.lspe_cd(ctx, proj, z_star);
                let num = c - w_b.dot(&d);
                let kappa = ctx.eta_t * num / delta_b;
                let a_prev = ctx.a_prev.as_ref().expect("lspe context");
                let b_prev = ctx.b_prev.as_ref().expect("lspe context");

                let m = self.dim();
                let mut a_new = DMatrix::zeros(m + 1, m + 1);
                a_new.view_mut((0, 0), (m, m)).copy_from(&self.a_mat);
                let col = a_prev * &proj.a + &self.z * ctx.vectors.h_star;
                let row = a_prev.tr_mul(&proj.a) + &ctx.vectors.h * z_star;
                for i in 0..m {
                    a_new[(i, m)] = col[i];
                    a_new[(m, i)] = row[i];
                }
                a_new[(m, m)] =
                    proj.a.dot(&(a_prev * &proj.a)) + z_star * ctx.vectors.h_star;

                self.p_inv = grown;
                self.p_inv.symmetrize();
                self.w = append_scaled(&self.w, &w_b, kappa);
                self.b = append(&self.b, proj.a.dot(b_prev) + z_star * tr.reward);
                self.z = append(&self.z, z_star);
                self.a_mat = a_new;
                self.xi -= num * num / delta_b;
                Ok(())
            }
        }
    }

    fn lspe_border(
        &self,
        ctx: &StepContext,
        proj: &Projection,
    ) -> Result<(f64, DVector<f64>, f64)> {
        let floor = self.p_inv.default_floor();
        let delta_k = ctx.vectors.k_star_t - ctx.vectors.k_t.dot(&proj.a);
        let delta_b = delta_k * delta_k / ctx.delta + self.hyper.sigma2 * proj.delta;
        if delta_b.abs() <= floor {
            return Err(Error::SingularGrowth { delta: delta_b, floor });
        }
        let w_b = &proj.a + &ctx.gain_vec * (delta_k / ctx.delta);
        let z_prev = ctx.z_prev.as_ref().expect("lspe context");
        let z_star =
            ctx.gamma_eff * self.hyper.lambda * z_prev.dot(&proj.a) + ctx.vectors.k_star_t;
        Ok((delta_b, w_b, z_star))
    }

    /// c = aᵀ(b_tm − A_tm w_tm) + z*·ϱ and d = b_{t+1,m} − A_{t+1,m} w_tm,
    /// the two ingredients of the LSPE cost-reduction term.
    fn lspe_cd(
        &self,
        ctx: &StepContext,
        proj: &Projection,
        z_star: f64,
    ) -> (f64, DVector<f64>) {
        let a_prev = ctx.a_prev.as_ref().expect("lspe context");
        let b_prev = ctx.b_prev.as_ref().expect("lspe context");
        let resid_prev = b_prev - a_prev * &ctx.w_prev;
        let c = proj.a.dot(&resid_prev) + z_star * ctx.rho;
        let d = &self.b - &self.a_mat * &ctx.w_prev;
        (c, d)
    }

    fn resize_aux(&mut self) {
        let m = self.w.len();
        if self.z.len() + 1 == m {
            self.z = append(&self.z, 0.0);
        }
        if self.b.len() + 1 == m {
            self.b = append(&self.b, 0.0);
        }
    }
}

fn append(v: &DVector<f64>, tail: f64) -> DVector<f64> {
    DVector::from_fn(v.len() + 1, |i, _| if i < v.len() { v[i] } else { tail })
}

/// `[v; 0] + scale·[−w_b; 1]`.
fn append_scaled(v: &DVector<f64>, w_b: &DVector<f64>, scale: f64) -> DVector<f64> {
    DVector::from_fn(v.len() + 1, |i, _| {
        if i < v.len() {
            v[i] - scale * w_b[i]
        } else {
            scale
        }
    })
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// Versioned checkpoint holding everything a frozen actor network needs:
/// the dictionary contents and the weight vector, plus identifying scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub method: Method,
    pub hyper: Hyper,
    pub kernel: KernelSpec,
    pub centers: Vec<StateAction>,
    pub insertion_steps: Vec<usize>,
    pub w: Vec<f64>,
    pub xi: f64,
    pub t: usize,
}

impl Snapshot {
    pub fn capture(state: &EvaluatorState, dict: &Dictionary, spec: &KernelSpec) -> Self {
        Snapshot {
            version: SNAPSHOT_VERSION,
            method: state.method,
            hyper: state.hyper,
            kernel: *spec,
            centers: dict.centers().to_vec(),
            insertion_steps: dict.insertion_steps().to_vec(),
            w: state.w.iter().copied().collect(),
            xi: state.xi,
            t: state.t,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        if snap.w.len() != snap.centers.len() {
            return Err(Error::Snapshot(
                "weight vector and centers disagree in length".into(),
            ));
        }
        Ok(snap)
    }

    pub fn restore_dictionary(&self) -> Result<Dictionary> {
        Dictionary::restore(&self.kernel, self.centers.clone(), self.insertion_steps.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> KernelSpec {
        KernelSpec::gaussian_rbf_product(5.0)
    }

    fn xa(state: &[f64], action: usize) -> StateAction {
        StateAction::new(state.to_vec(), action)
    }

    /// State whose kernel against [0.0] is exactly 0.5.
    fn half_kernel_state() -> Vec<f64> {
        vec![(0.5f64.ln() / -5.0).sqrt()]
    }

    fn hyper(gamma: f64, lambda: f64, sigma2: f64) -> Hyper {
        Hyper { gamma, lambda, sigma2, eta: 0.5, eta_decay_c: 0.0 }
    }

    fn step(
        state: &mut EvaluatorState,
        dict: &Dictionary,
        tr: &Transition,
    ) -> StepContext {
        let vectors = StepVectors::compute(&spec(), dict, tr).unwrap();
        state.normal_step(tr, vectors).unwrap()
    }

    #[test]
    fn brm_scalar_normal_step_by_hand() {
        // m = 1, σ² = 1 → P⁻¹ = 1. γ_eff = 0, x = x_next = center:
        // h = (1), Δ = 2, ϱ = 1, w' = 0.5, ξ' = 0.5, P⁻¹' = 0.5.
        let x0 = xa(&[0.0], 0);
        let dict = Dictionary::seeded(&spec(), x0.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Brm, hyper(0.9, 0.0, 1.0), &dict);
        let tr = Transition { x: x0.clone(), reward: 1.0, x_next: x0, gamma_eff: 0.0 };
        let ctx = step(&mut st, &dict, &tr);
        assert!((ctx.delta - 2.0).abs() < 1e-15);
        assert!((ctx.rho - 1.0).abs() < 1e-15);
        assert!((st.weights()[0] - 0.5).abs() < 1e-15);
        assert!((st.cost() - 0.5).abs() < 1e-15);
        assert!((st.p_inv().as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_zero_weights_is_a_fixed_point() {
        let centers = vec![xa(&[0.0], 0), xa(&half_kernel_state(), 0)];
        let dict = Dictionary::from_centers(&spec(), centers.clone()).unwrap();
        for method in [Method::Brm, Method::Lstd, Method::Lspe] {
            let mut st = EvaluatorState::init(method, hyper(0.9, 0.5, 0.1), &dict);
            for i in 0..10 {
                let tr = Transition {
                    x: centers[i % 2].clone(),
                    reward: 0.0,
                    x_next: centers[(i + 1) % 2].clone(),
                    gamma_eff: 0.9,
                };
                step(&mut st, &dict, &tr);
            }
            assert_eq!(st.weights().amax(), 0.0, "{method:?} drifted from zero");
        }
    }

    #[test]
    fn terminal_transition_resets_the_trace_to_k_t() {
        let centers = vec![xa(&[0.0], 0), xa(&half_kernel_state(), 0)];
        let dict = Dictionary::from_centers(&spec(), centers.clone()).unwrap();
        for method in [Method::Lstd, Method::Lspe] {
            let mut st = EvaluatorState::init(method, hyper(0.9, 0.5, 0.1), &dict);
            for i in 0..5 {
                let tr = Transition {
                    x: centers[i % 2].clone(),
                    reward: 0.3,
                    x_next: centers[(i + 1) % 2].clone(),
                    gamma_eff: 0.9,
                };
                step(&mut st, &dict, &tr);
            }
            let terminal = Transition {
                x: centers[1].clone(),
                reward: 0.0,
                x_next: centers[0].clone(),
                gamma_eff: 0.0,
            };
            let vectors = StepVectors::compute(&spec(), &dict, &terminal).unwrap();
            let k_t = vectors.k_t.clone();
            st.normal_step(&terminal, vectors).unwrap();
            assert!((st.trace() - &k_t).amax() < 1e-15, "{method:?} trace");
        }
    }

    #[test]
    fn brm_growing_step_by_hand() {
        // Seed {x0}, σ² = 1, γ = 0.5, one transition x0 → x1 with
        // k(x0,x1) = 0.5, r = 1. Normal step: Δ = 25/16, w = 0.48,
        // ξ = 0.64. Growing on x1: Δ_b = 21/25, κ = −2/7,
        // w = [4/7, −2/7], ξ = 4/7. Verified against the dense solve of
        // (HᵀH + σ²K_mm)w = Hᵀr with H = [0.75, 0].
        let x0 = xa(&[0.0], 0);
        let x1 = xa(&half_kernel_state(), 0);
        let dict = Dictionary::seeded(&spec(), x0.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Brm, hyper(0.5, 0.0, 1.0), &dict);
        let tr = Transition { x: x0, reward: 1.0, x_next: x1.clone(), gamma_eff: 0.5 };
        let proj = dict.project(&spec(), &x1).unwrap();
        let ctx = step(&mut st, &dict, &tr);
        assert!((st.weights()[0] - 0.48).abs() < 1e-15);
        assert!((st.cost() - 0.64).abs() < 1e-15);

        let useful = st.usefulness(&ctx, &proj).unwrap();
        assert!((useful.delta_b - 0.84).abs() < 1e-12);
        assert!((useful.kappa - (-2.0 / 7.0)).abs() < 1e-12);

        st.grow_step(&ctx, &proj, &tr).unwrap();
        assert!((st.weights()[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((st.weights()[1] - (-2.0 / 7.0)).abs() < 1e-12);
        assert!((st.cost() - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_candidate_has_zero_usefulness() {
        // ϱ = 0 → κ = 0 → gain = 0 for BRM
        let x0 = xa(&[0.0], 0);
        let x1 = xa(&half_kernel_state(), 0);
        let dict = Dictionary::seeded(&spec(), x0.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Brm, hyper(0.5, 0.0, 1.0), &dict);
        let tr = Transition { x: x0, reward: 0.0, x_next: x1.clone(), gamma_eff: 0.5 };
        let proj = dict.project(&spec(), &x1).unwrap();
        let ctx = step(&mut st, &dict, &tr);
        assert_eq!(ctx.rho, 0.0);
        let useful = st.usefulness(&ctx, &proj).unwrap();
        assert_eq!(useful.gain, 0.0);
    }

    #[test]
    fn decoupled_growth_appends_a_zero_weight() {
        // γ_eff = 0 and x at a center makes δ_h vanish while δ > 0, so the
        // new weight must be exactly zero and old predictions unchanged.
        let x0 = xa(&[0.0], 0);
        let x1 = xa(&half_kernel_state(), 0);
        let mut dict = Dictionary::seeded(&spec(), x0.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Brm, hyper(0.9, 0.0, 0.5), &dict);
        let warm = Transition {
            x: x0.clone(),
            reward: 1.0,
            x_next: x0.clone(),
            gamma_eff: 0.0,
        };
        step(&mut st, &dict, &warm);

        let tr = Transition { x: x0.clone(), reward: 0.7, x_next: x1.clone(), gamma_eff: 0.0 };
        let proj = dict.project(&spec(), &x1).unwrap();
        let ctx = step(&mut st, &dict, &tr);
        let pre_grow = st.predict(&dict, &spec(), &x0).unwrap();
        st.grow_step(&ctx, &proj, &tr).unwrap();
        dict.grow(&spec(), x1, &proj, 2).unwrap();
        assert_eq!(st.weights()[1], 0.0);
        let post_grow = st.predict(&dict, &spec(), &x0).unwrap();
        assert!((post_grow - pre_grow).abs() < 1e-15);
    }

    #[test]
    fn lstd_incremental_weights_satisfy_the_fixed_point_system() {
        // w must equal P⁻¹b at every step of the incremental recursion
        let centers = vec![xa(&[0.0], 0), xa(&half_kernel_state(), 0)];
        let dict = Dictionary::from_centers(&spec(), centers.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Lstd, hyper(0.9, 0.5, 0.1), &dict);
        let rewards = [1.0, -0.5, 0.25, 2.0, 0.0, 1.5];
        for (i, &r) in rewards.iter().enumerate() {
            let tr = Transition {
                x: centers[i % 2].clone(),
                reward: r,
                x_next: centers[(i + 1) % 2].clone(),
                gamma_eff: if i == 3 { 0.0 } else { 0.9 },
            };
            step(&mut st, &dict, &tr);
            let direct = st.p_inv().mul_vec(&st.b);
            assert!((&direct - st.weights()).amax() < 1e-12, "step {i}");
        }
    }

    #[test]
    fn predict_is_the_feature_dot_product() {
        let x0 = xa(&[0.25], 1);
        let dict = Dictionary::seeded(&spec(), x0.clone()).unwrap();
        let mut st = EvaluatorState::init(Method::Lspe, hyper(0.9, 0.5, 0.1), &dict);
        assert_eq!(st.predict(&dict, &spec(), &xa(&[0.7], 0)).unwrap(), 0.0);
        st.w[0] = 2.0;
        assert!((st.predict(&dict, &spec(), &x0).unwrap() - 2.0).abs() < 1e-15);
        let q = xa(&[0.3], 1);
        let k = dict.kernel_vector(&spec(), &q).unwrap();
        let expect = k.dot(st.weights());
        assert!((st.predict(&dict, &spec(), &q).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let x0 = xa(&[0.0, 0.5], 0);
        let dict = Dictionary::seeded(&spec(), x0).unwrap();
        let mut st = EvaluatorState::init(Method::Lstd, hyper(0.99, 0.5, 0.1), &dict);
        st.w[0] = 1.25;
        let snap = Snapshot::capture(&st, &dict, &spec());
        let text = snap.to_json();
        let back = Snapshot::from_json(&text).unwrap();
        assert_eq!(back.w, vec![1.25]);
        assert_eq!(back.method, Method::Lstd);
        let restored = back.restore_dictionary().unwrap();
        assert_eq!(restored.len(), 1);
    }
}
