//! Independent, non-recursive reference implementations.
//!
//! Everything here solves the same problems as the recursive engines but by
//! materializing the data matrices and factorizing densely, never by rank-1
//! inverse propagation and never through the growing-step shortcut scalars.
//! The pair of solution paths is the correctness argument for the engines.
//!
//! Matrix reconstruction follows the sparse online approximation: when a
//! basis function joins after row j, its column reads `row_i · a` for past
//! rows i < j (with `a` the projection coefficients of the new center on
//! the old ones) and the exact kernel value on row j, the row that
//! triggered the growth. Rows observed later use exact kernel evaluations
//! against the enlarged dictionary.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evaluator::{Hyper, Method, Transition};
use crate::kernel::{KernelSpec, StateAction};

/// Desk-scale cap on oracle reconstructions; Λ is materialized as a dense
/// t×t matrix.
const MAX_ORACLE_ROWS: usize = 5000;

/// Everything needed to replay a learner run through the dense path.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    /// Centers present before the first recorded transition.
    pub seed_centers: Vec<StateAction>,
    pub transitions: Vec<Transition>,
    /// (rows observed when added, center); strictly increasing in the
    /// first component, at most one insertion per row.
    pub insertions: Vec<(usize, StateAction)>,
}

/// A tabular MDP: transition tensor P(s'|s,a) with rows summing to one and
/// reward tensor R(s'|s,a).
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Indexed [s][a][s'].
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("finite MDP requires 0 <= gamma < 1"));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let total: f64 = self.p[s][a].iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!(
                        "transition row ({s},{a}) sums to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }
}

/// The data matrices of one reconstruction.
struct Effective {
    k_rows: Vec<Vec<f64>>,
    h_rows: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    /// Per-row trace decay λ·γ_eff (the episode-boundary convention:
    /// a zero-discount transition zeroes the decay of its own row).
    decays: Vec<f64>,
    kmm: DMatrix<f64>,
}

fn gram(spec: &KernelSpec, centers: &[StateAction]) -> Result<DMatrix<f64>> {
    let m = centers.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = spec.eval(&centers[i], &centers[j])?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn features(spec: &KernelSpec, centers: &[StateAction], x: &StateAction) -> Result<Vec<f64>> {
    centers.iter().map(|c| spec.eval(c, x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn build_effective(log: &TrajectoryLog, spec: &KernelSpec, lambda: f64) -> Result<Effective> {
    assert!(
        log.transitions.len() <= MAX_ORACLE_ROWS,
        "oracle reconstruction capped at {MAX_ORACLE_ROWS} rows"
    );
    let mut centers = log.seed_centers.clone();
    if centers.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let mut kmm = gram(spec, &centers)?;
    let mut eff = Effective {
        k_rows: Vec::with_capacity(log.transitions.len()),
        h_rows: Vec::with_capacity(log.transitions.len()),
        rewards: Vec::with_capacity(log.transitions.len()),
        decays: Vec::with_capacity(log.transitions.len()),
        kmm: kmm.clone(),
    };
    let mut next_insertion = 0usize;

    for (j, tr) in log.transitions.iter().enumerate() {
        let k_t = features(spec, &centers, &tr.x)?;
        let k_next = features(spec, &centers, &tr.x_next)?;
        let h: Vec<f64> = k_t
            .iter()
            .zip(&k_next)
            .map(|(a, b)| a - tr.gamma_eff * b)
            .collect();
        eff.k_rows.push(k_t);
        eff.h_rows.push(h);
        eff.rewards.push(tr.reward);
        eff.decays.push(lambda * tr.gamma_eff);

        while next_insertion < log.insertions.len()
            && log.insertions[next_insertion].0 == j + 1
        {
            let center = log.insertions[next_insertion].1.clone();
            let k_vec = DVector::from_vec(features(spec, &centers, &center)?);
            let a = kmm
                .clone()
                .lu()
                .solve(&k_vec)
                .ok_or(Error::OracleSingular)?;
            let a_slice: Vec<f64> = a.iter().copied().collect();
            for i in 0..j {
                let approx_k = dot(&eff.k_rows[i], &a_slice);
                let approx_h = dot(&eff.h_rows[i], &a_slice);
                eff.k_rows[i].push(approx_k);
                eff.h_rows[i].push(approx_h);
            }
            // the triggering row carries exact kernel values
            let exact_k = spec.eval(&tr.x, &center)?;
            let exact_h = exact_k - tr.gamma_eff * spec.eval(&tr.x_next, &center)?;
            eff.k_rows[j].push(exact_k);
            eff.h_rows[j].push(exact_h);
            centers.push(center);
            kmm = gram(spec, &centers)?;
            next_insertion += 1;
        }
    }
    if next_insertion != log.insertions.len() {
        return Err(Error::config(
            "insertion log references rows beyond the trajectory",
        ));
    }
    eff.kmm = kmm;
    Ok(eff)
}

fn to_matrix(rows: &[Vec<f64>], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j])
}

/// The eligibility weighting Λ with per-row decays; entry (i, j) for j ≥ i
/// is the product of the decays of rows i+1..=j.
fn lambda_matrix(decays: &[f64]) -> DMatrix<f64> {
    let t = decays.len();
    let mut out = DMatrix::zeros(t, t);
    for i in 0..t {
        out[(i, i)] = 1.0;
        let mut acc = 1.0;
        for j in (i + 1)..t {
            acc *= decays[j];
            out[(i, j)] = acc;
        }
    }
    out
}

/// Closed-form batch weights for BRM/LSTD, or the step-by-step dense
/// iterate for LSPE, on the reconstructed data matrices.
pub fn batch_solve(
    method: Method,
    log: &TrajectoryLog,
    spec: &KernelSpec,
    hyper: &Hyper,
) -> Result<DVector<f64>> {
    let eff = build_effective(log, spec, hyper.lambda)?;
    let m = eff.kmm.nrows();
    let t = eff.k_rows.len();
    if t == 0 {
        return Ok(DVector::zeros(m));
    }
    match method {
        Method::Brm => {
            let h = to_matrix(&eff.h_rows, m);
            let r = DVector::from_vec(eff.rewards.clone());
            let p = h.tr_mul(&h) + &eff.kmm * hyper.sigma2;
            let rhs = h.tr_mul(&r);
            p.lu().solve(&rhs).ok_or(Error::OracleSingular)
        }
        Method::Lstd => {
            let k = to_matrix(&eff.k_rows, m);
            let h = to_matrix(&eff.h_rows, m);
            let r = DVector::from_vec(eff.rewards.clone());
            let z = lambda_matrix(&eff.decays).tr_mul(&k);
            let p = z.tr_mul(&h) + &eff.kmm * hyper.sigma2;
            let rhs = z.tr_mul(&r);
            p.lu().solve(&rhs).ok_or(Error::OracleSingular)
        }
        Method::Lspe => lspe_iterate(log, &eff, hyper),
    }
}

/// Replays the LSPE iterate densely: at every row the current P, A, b are
/// assembled from scratch-accumulated definitions and the step solved by LU
/// factorization; at an insertion the iterate is embedded with a zero tail
/// and the step computed on the enlarged basis.
fn lspe_iterate(log: &TrajectoryLog, eff: &Effective, hyper: &Hyper) -> Result<DVector<f64>> {
    let t = eff.k_rows.len();
    let m_seed = log.seed_centers.len();

    // number of columns active after each row's insertions
    let mut cols_at = vec![m_seed; t];
    {
        let mut m = m_seed;
        let mut ins = 0;
        for (j, c) in cols_at.iter_mut().enumerate() {
            while ins < log.insertions.len() && log.insertions[ins].0 == j + 1 {
                m += 1;
                ins += 1;
            }
            *c = m;
        }
    }

    let mut w = DVector::zeros(m_seed);
    let mut z = DVector::zeros(m_seed);
    let mut p_data = DMatrix::zeros(m_seed, m_seed);
    let mut a_mat = DMatrix::zeros(m_seed, m_seed);
    let mut b = DVector::zeros(m_seed);
    let mut m_cur = m_seed;

    for j in 0..t {
        let m_next = cols_at[j];
        if m_next > m_cur {
            // rebuild every accumulator from its definition on the wider
            // basis, then embed the iterate with a zero tail
            m_cur = m_next;
            p_data = DMatrix::zeros(m_cur, m_cur);
            a_mat = DMatrix::zeros(m_cur, m_cur);
            b = DVector::zeros(m_cur);
            z = DVector::zeros(m_cur);
            for i in 0..=j {
                let k_i = DVector::from_fn(m_cur, |c, _| eff.k_rows[i][c]);
                let h_i = DVector::from_fn(m_cur, |c, _| eff.h_rows[i][c]);
                z = z * eff.decays[i] + &k_i;
                p_data.ger(1.0, &k_i, &k_i, 1.0);
                a_mat.ger(1.0, &z, &h_i, 1.0);
                b += &z * eff.rewards[i];
            }
            w = DVector::from_fn(m_cur, |c, _| if c < w.len() { w[c] } else { 0.0 });
        } else {
            let k_j = DVector::from_fn(m_cur, |c, _| eff.k_rows[j][c]);
            let h_j = DVector::from_fn(m_cur, |c, _| eff.h_rows[j][c]);
            z = z * eff.decays[j] + &k_j;
            p_data.ger(1.0, &k_j, &k_j, 1.0);
            a_mat.ger(1.0, &z, &h_j, 1.0);
            b += &z * eff.rewards[j];
        }

        // leading principal block of the final Gram = Gram of the first
        // m_cur centers (insertion order)
        let kmm_cur = eff.kmm.view((0, 0), (m_cur, m_cur)).into_owned();
        let p_full = &p_data + kmm_cur * hyper.sigma2;
        let resid = &b - &a_mat * &w;
        let step = p_full.lu().solve(&resid).ok_or(Error::OracleSingular)?;
        w += step * hyper.eta_at(j);
    }
    Ok(w)
}

/// The BRM objective ‖r − H w‖² + σ² wᵀK_mm w on the reconstructed
/// matrices, the direct counterpart of the recursive cost ξ.
pub fn brm_cost(
    log: &TrajectoryLog,
    spec: &KernelSpec,
    hyper: &Hyper,
    w: &DVector<f64>,
) -> Result<f64> {
    let eff = build_effective(log, spec, hyper.lambda)?;
    let m = eff.kmm.nrows();
    let h = to_matrix(&eff.h_rows, m);
    let r = DVector::from_vec(eff.rewards.clone());
    let resid = &r - &h * w;
    Ok(resid.dot(&resid) + hyper.sigma2 * w.dot(&(&eff.kmm * w)))
}

/// Q^π of a finite MDP under a deterministic policy, by the dense linear
/// solve of the Bellman fixed point over all state-action pairs.
pub fn exact_q(mdp: &FiniteMdp, policy: &[usize]) -> Result<DVector<f64>> {
    mdp.validate()?;
    if policy.len() != mdp.n_states {
        return Err(Error::config("policy must cover every state"));
    }
    let n = mdp.n_states * mdp.n_actions;
    let mut system = DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.pair_index(s, a);
            for s2 in 0..mdp.n_states {
                let prob = mdp.p[s][a][s2];
                if prob == 0.0 {
                    continue;
                }
                rhs[row] += prob * mdp.r[s][a][s2];
                let col = mdp.pair_index(s2, policy[s2]);
                system[(row, col)] -= mdp.gamma * prob;
            }
        }
    }
    let q = system.lu().solve(&rhs).ok_or(Error::OracleSingular)?;
    debug_assert!(bellman_residual(mdp, policy, &q) <= 1e-10);
    Ok(q)
}

/// ‖Q − T_π Q‖∞.
pub fn bellman_residual(mdp: &FiniteMdp, policy: &[usize], q: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let mut backed = 0.0;
            for s2 in 0..mdp.n_states {
                let prob = mdp.p[s][a][s2];
                backed += prob
                    * (mdp.r[s][a][s2] + mdp.gamma * q[mdp.pair_index(s2, policy[s2])]);
            }
            worst = worst.max((q[mdp.pair_index(s, a)] - backed).abs());
        }
    }
    worst
}

/// Exact policy iteration; returns the optimal deterministic policy and its
/// Q table. Ties break toward the lowest action id.
pub fn policy_iteration(mdp: &FiniteMdp) -> Result<(Vec<usize>, DVector<f64>)> {
    let mut policy = vec![0usize; mdp.n_states];
    for _ in 0..200 {
        let q = exact_q(mdp, &policy)?;
        let mut improved = policy.clone();
        for (s, slot) in improved.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_q = q[mdp.pair_index(s, 0)];
            for a in 1..mdp.n_actions {
                let qa = q[mdp.pair_index(s, a)];
                if qa > best_q + 1e-12 {
                    best = a;
                    best_q = qa;
                }
            }
            *slot = best;
        }
        if improved == policy {
            return Ok((policy, q));
        }
        policy = improved;
    }
    Err(Error::config("policy iteration failed to converge"))
}

/// Weights of the full regularization-network problem, w = (K + σ²I)⁻¹ y.
pub fn full_rn_solve(
    points: &[StateAction],
    targets: &[f64],
    spec: &KernelSpec,
    sigma2: f64,
) -> Result<DVector<f64>> {
    assert!(points.len() <= 500, "full RN solve is a desk-scale oracle");
    if points.len() != targets.len() {
        return Err(Error::config("points and targets disagree in length"));
    }
    let k = gram(spec, points)?;
    let system = &k + DMatrix::identity(points.len(), points.len()) * sigma2;
    let y = DVector::from_vec(targets.to_vec());
    system.lu().solve(&y).ok_or(Error::OracleSingular)
}

/// Seeded sample of `n` points in the unit square (two actions) with a
/// minimum pairwise separation, so Gram matrices stay well conditioned.
/// Used by the SR-identity checks, whose m = t identity inverts the full
/// Gram.
pub fn separated_points(n: usize, seed: u64) -> Vec<StateAction> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<StateAction> = Vec::with_capacity(n);
    while pts.len() < n {
        let cand = StateAction::new(
            vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            rng.random_range(0..2usize),
        );
        let ok = pts.iter().all(|p| {
            p.action != cand.action || {
                let dx = p.state[0] - cand.state[0];
                let dy = p.state[1] - cand.state[1];
                dx * dx + dy * dy > 0.12 * 0.12
            }
        });
        if ok {
            pts.push(cand);
        }
    }
    pts
}

/// Subset-of-regressors weights (K_tmᵀK_tm + σ²K_mm)⁻¹ K_tmᵀ y.
pub fn sr_solve(
    points: &[StateAction],
    targets: &[f64],
    dict_centers: &[StateAction],
    spec: &KernelSpec,
    sigma2: f64,
) -> Result<DVector<f64>> {
    if points.len() != targets.len() {
        return Err(Error::config("points and targets disagree in length"));
    }
    let t = points.len();
    let m = dict_centers.len();
    let mut ktm = DMatrix::zeros(t, m);
    for i in 0..t {
        for j in 0..m {
            ktm[(i, j)] = spec.eval(&points[i], &dict_centers[j])?;
        }
    }
    let kmm = gram(spec, dict_centers)?;
    let p = ktm.tr_mul(&ktm) + kmm * sigma2;
    let y = DVector::from_vec(targets.to_vec());
    let rhs = ktm.tr_mul(&y);
    p.lu().solve(&rhs).ok_or(Error::OracleSingular)
}
