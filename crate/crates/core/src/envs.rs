//! Desk-scale benchmark environments and the episodic-to-infinite
//! trajectory adapter.
//!
//! Episode ends are bridged by a zero-reward transition with zero
//! effective discount from the terminal tuple to the next episode's start,
//! turning the episodic stream into one infinite trajectory the evaluators
//! can consume without special cases.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evaluator::Transition;
use crate::kernel::StateAction;
use crate::oracle::FiniteMdp;

pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Environment {
    fn reset(&mut self) -> Vec<f64>;
    /// Panics if called after a terminal step without an intervening reset.
    fn step(&mut self, action: usize) -> Step;
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
}

/// A walk on n states embedded as s/(n−1) in [0,1]. Actions move left or
/// right, slipping to the opposite direction with probability `slip`;
/// reaching the right end pays +1 and ends the episode. Episodes start at
/// the left end and are cut off (reward 0) at `max_episode_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub n: usize,
    pub slip: f64,
    pub max_episode_steps: usize,
}

impl ChainParams {
    pub fn deterministic(n: usize) -> Self {
        ChainParams { n, slip: 0.0, max_episode_steps: 200 }
    }

    pub fn stochastic(n: usize, slip: f64) -> Self {
        ChainParams { n, slip, max_episode_steps: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("chain needs at least 2 states"));
        }
        if !(0.0..0.5).contains(&self.slip) {
            return Err(Error::config("chain slip must lie in [0, 0.5)"));
        }
        Ok(())
    }

    pub fn embed(&self, s: usize) -> Vec<f64> {
        vec![s as f64 / (self.n - 1) as f64]
    }
}

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;

pub struct ChainEnv {
    params: ChainParams,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
    done: bool,
}

impl ChainEnv {
    pub fn new(params: ChainParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(ChainEnv {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: 0,
            steps: 0,
            done: true,
        })
    }

    pub fn params(&self) -> ChainParams {
        self.params
    }

    pub fn state_index(&self) -> usize {
        self.state
    }
}

impl Environment for ChainEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        self.done = false;
        self.params.embed(self.state)
    }

    fn step(&mut self, action: usize) -> Step {
        assert!(!self.done, "step after terminal without reset");
        assert!(action < 2, "chain has two actions");
        let slipped = self.rng.random_range(0.0..1.0) < self.params.slip;
        let go_right = (action == CHAIN_RIGHT) != slipped;
        self.state = if go_right {
            (self.state + 1).min(self.params.n - 1)
        } else {
            self.state.saturating_sub(1)
        };
        self.steps += 1;
        let reached_goal = self.state == self.params.n - 1;
        let truncated = self.steps >= self.params.max_episode_steps;
        self.done = reached_goal || truncated;
        Step {
            state: self.params.embed(self.state),
            reward: if reached_goal { 1.0 } else { 0.0 },
            terminal: self.done,
        }
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn n_actions(&self) -> usize {
        2
    }
}

/// Exact tabular model of the chain simulator's sampling distribution
/// (without the step cap). The right end is absorbing with zero reward.
pub fn as_finite_mdp(params: &ChainParams, gamma: f64) -> Result<FiniteMdp> {
    params.validate()?;
    let n = params.n;
    let goal = n - 1;
    let mut p = vec![vec![vec![0.0; n]; 2]; n];
    let mut r = vec![vec![vec![0.0; n]; 2]; n];
    for s in 0..n {
        for a in 0..2 {
            if s == goal {
                p[s][a][s] = 1.0;
                continue;
            }
            let right_dest = (s + 1).min(goal);
            let left_dest = s.saturating_sub(1);
            let p_right = if a == CHAIN_RIGHT { 1.0 - params.slip } else { params.slip };
            p[s][a][right_dest] += p_right;
            p[s][a][left_dest] += 1.0 - p_right;
            if right_dest == goal {
                r[s][a][goal] = 1.0;
            }
        }
    }
    Ok(FiniteMdp { n_states: n, n_actions: 2, p, r, gamma })
}

/// Navigation on the unit square: four compass actions of fixed stride with
/// Gaussian actuation noise, positions clipped to the square. Every step
/// costs −1; the episode ends inside the goal disc or at the step cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyNavParams {
    pub noise_std: f64,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub stride: f64,
    pub max_episode_steps: usize,
    pub start: [f64; 2],
}

impl Default for NoisyNavParams {
    fn default() -> Self {
        NoisyNavParams {
            noise_std: 0.02,
            goal_center: [0.85, 0.85],
            goal_radius: 0.15,
            stride: 0.1,
            max_episode_steps: 200,
            start: [0.1, 0.1],
        }
    }
}

impl NoisyNavParams {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std <= 0.0 {
            return Err(Error::config("nav noise std must be positive"));
        }
        if self.goal_radius <= 0.0 || self.stride <= 0.0 {
            return Err(Error::config("nav goal radius and stride must be positive"));
        }
        Ok(())
    }
}

pub struct NoisyNav2D {
    params: NoisyNavParams,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    steps: usize,
    done: bool,
}

const COMPASS: [[f64; 2]; 4] = [[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]];

impl NoisyNav2D {
    pub fn new(params: NoisyNavParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(NoisyNav2D {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: params.start,
            steps: 0,
            done: true,
        })
    }

    fn at_goal(&self) -> bool {
        let dx = self.pos[0] - self.params.goal_center[0];
        let dy = self.pos[1] - self.params.goal_center[1];
        (dx * dx + dy * dy).sqrt() <= self.params.goal_radius
    }

    fn gaussian(&mut self) -> f64 {
        // Box–Muller
        let u1: f64 = self.rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

impl Environment for NoisyNav2D {
    fn reset(&mut self) -> Vec<f64> {
        self.pos = self.params.start;
        self.steps = 0;
        self.done = false;
        self.pos.to_vec()
    }

    fn step(&mut self, action: usize) -> Step {
        assert!(!self.done, "step after terminal without reset");
        assert!(action < 4, "nav has four compass actions");
        for (axis, delta) in COMPASS[action].iter().enumerate() {
            let noise = self.gaussian() * self.params.noise_std;
            self.pos[axis] =
                (self.pos[axis] + delta * self.params.stride + noise).clamp(0.0, 1.0);
        }
        self.steps += 1;
        self.done = self.at_goal() || self.steps >= self.params.max_episode_steps;
        Step { state: self.pos.to_vec(), reward: -1.0, terminal: self.done }
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        4
    }
}

/// Turns an episodic environment into the infinite transition stream: the
/// terminal tuple is connected to the next episode's first tuple by a
/// zero-reward transition with `gamma_eff = 0`.
pub struct EpisodeAdapter<E: Environment> {
    env: E,
    current: Option<StateAction>,
    pending_restart: bool,
    episodes_completed: usize,
}

impl<E: Environment> EpisodeAdapter<E> {
    pub fn new(env: E) -> Self {
        EpisodeAdapter { env, current: None, pending_restart: false, episodes_completed: 0 }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn episodes_completed(&self) -> usize {
        self.episodes_completed
    }

    /// Emits the next transition of the adapted infinite trajectory,
    /// choosing actions through `select`.
    pub fn next_transition(
        &mut self,
        gamma: f64,
        select: &mut dyn FnMut(&[f64]) -> usize,
    ) -> Transition {
        if self.current.is_none() {
            let s0 = self.env.reset();
            let a0 = select(&s0);
            self.current = Some(StateAction::new(s0, a0));
        }
        let x = self.current.clone().expect("started");
        if self.pending_restart {
            let s0 = self.env.reset();
            let a0 = select(&s0);
            let x_next = StateAction::new(s0, a0);
            self.current = Some(x_next.clone());
            self.pending_restart = false;
            self.episodes_completed += 1;
            return Transition { x, reward: 0.0, x_next, gamma_eff: 0.0 };
        }
        let step = self.env.step(x.action);
        let a_next = select(&step.state);
        let x_next = StateAction::new(step.state, a_next);
        self.current = Some(x_next.clone());
        self.pending_restart = step.terminal;
        Transition { x, reward: step.reward, x_next, gamma_eff: gamma }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_chain_has_binary_tabular_rows() {
        let params = ChainParams::deterministic(5);
        let mdp = as_finite_mdp(&params, 0.9).unwrap();
        mdp.validate().unwrap();
        for s in 0..5 {
            for a in 0..2 {
                for s2 in 0..5 {
                    let v = mdp.p[s][a][s2];
                    assert!(v == 0.0 || v == 1.0, "P[{s}][{a}][{s2}] = {v}");
                }
            }
        }
    }

    #[test]
    fn slip_mass_splits_between_intended_and_opposite() {
        let params = ChainParams::stochastic(5, 0.2);
        let mdp = as_finite_mdp(&params, 0.9).unwrap();
        // interior state, action right: 0.8 right / 0.2 left
        assert!((mdp.p[2][CHAIN_RIGHT][3] - 0.8).abs() < 1e-12);
        assert!((mdp.p[2][CHAIN_RIGHT][1] - 0.2).abs() < 1e-12);
        // left wall: slipping while pushing right keeps you at 0
        assert!((mdp.p[0][CHAIN_RIGHT][1] - 0.8).abs() < 1e-12);
        assert!((mdp.p[0][CHAIN_RIGHT][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn chain_simulator_frequencies_match_the_tabular_model() {
        // 10⁵ draws of (state 2, action right) under slip 0.2; the observed
        // right-move count must sit within 3σ of the binomial mean
        let params = ChainParams::stochastic(5, 0.2);
        let mut env = ChainEnv::new(params, 12345).unwrap();
        let n = 100_000;
        let mut rights = 0usize;
        for _ in 0..n {
            env.reset();
            env.state = 2;
            let before = env.state;
            env.step(CHAIN_RIGHT);
            if env.state > before {
                rights += 1;
            }
        }
        let p = 0.8;
        let mean = p * n as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((rights as f64 - mean).abs() < 3.0 * sd, "{rights} of {n}");
    }

    #[test]
    fn identical_seeds_reproduce_identical_trajectories() {
        let params = ChainParams::stochastic(6, 0.3);
        let mut a = ChainEnv::new(params, 99).unwrap();
        let mut b = ChainEnv::new(params, 99).unwrap();
        a.reset();
        b.reset();
        for i in 0..500 {
            let action = i % 2;
            let sa = a.step(action);
            let sb = b.step(action);
            assert_eq!(sa.state, sb.state);
            assert_eq!(sa.terminal, sb.terminal);
            if sa.terminal {
                a.reset();
                b.reset();
            }
        }
    }

    #[test]
    fn visit_frequencies_match_the_stationary_distribution() {
        // fixed always-right policy with restarts; compare empirical state
        // visits against the stationary distribution of the induced chain
        let params = ChainParams::stochastic(5, 0.2);
        let mdp = as_finite_mdp(&params, 0.9).unwrap();
        // induced chain over the nonterminal states: arrival at the goal
        // restarts at 0 without being counted (the simulator resets there)
        let n = params.n - 1;
        let mut pi = nalgebra::DMatrix::zeros(n, n);
        for s in 0..n {
            for s2 in 0..params.n {
                let p = mdp.p[s][CHAIN_RIGHT][s2];
                let dest = if s2 == params.n - 1 { 0 } else { s2 };
                pi[(s, dest)] += p;
            }
        }
        let mut dist = nalgebra::DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..10_000 {
            dist = pi.tr_mul(&dist);
        }

        let mut env = ChainEnv::new(params, 4242).unwrap();
        let mut counts = vec![0usize; n];
        let mut s = env.reset();
        let total = 200_000usize;
        for _ in 0..total {
            counts[(s[0] * (params.n - 1) as f64).round() as usize] += 1;
            let step = env.step(CHAIN_RIGHT);
            s = if step.terminal { env.reset() } else { step.state };
        }
        for s in 0..n {
            let expect = dist[s] * total as f64;
            let sd = (total as f64 * dist[s] * (1.0 - dist[s])).sqrt();
            assert!(
                (counts[s] as f64 - expect).abs() < 3.0 * sd.max(1.0),
                "state {s}: {} vs {expect:.0}",
                counts[s]
            );
        }
    }

    #[test]
    fn adapter_bridges_episodes_with_zero_discount_transitions() {
        let params = ChainParams::deterministic(3);
        let env = ChainEnv::new(params, 7).unwrap();
        let mut adapter = EpisodeAdapter::new(env);
        let mut select = |_: &[f64]| CHAIN_RIGHT;
        // two right moves reach the end of a 3-chain
        let t1 = adapter.next_transition(0.9, &mut select);
        assert_eq!(t1.gamma_eff, 0.9);
        let t2 = adapter.next_transition(0.9, &mut select);
        assert_eq!(t2.gamma_eff, 0.9);
        assert_eq!(t2.reward, 1.0);
        // the bridge transition: zero reward, zero discount, restart target
        let t3 = adapter.next_transition(0.9, &mut select);
        assert_eq!(t3.gamma_eff, 0.0);
        assert_eq!(t3.reward, 0.0);
        assert_eq!(t3.x.state, vec![1.0]);
        assert_eq!(t3.x_next.state, vec![0.0]);
        assert_eq!(adapter.episodes_completed(), 1);
    }

    #[test]
    fn adapter_counts_one_bridge_per_episode() {
        let params = ChainParams::stochastic(4, 0.1);
        let env = ChainEnv::new(params, 11).unwrap();
        let mut adapter = EpisodeAdapter::new(env);
        let mut select = |_: &[f64]| CHAIN_RIGHT;
        let mut bridges = 0;
        for _ in 0..5_000 {
            if adapter.next_transition(0.9, &mut select).gamma_eff == 0.0 {
                bridges += 1;
            }
        }
        assert_eq!(bridges, adapter.episodes_completed());
        assert!(bridges > 100, "expected many completed episodes");
    }

    #[test]
    fn nav_terminates_at_the_goal_or_the_cap() {
        let params = NoisyNavParams::default();
        let mut env = NoisyNav2D::new(params, 3).unwrap();
        env.reset();
        let mut steps = 0;
        loop {
            // walk diagonally toward the goal corner
            let step = env.step(if steps % 2 == 0 { 0 } else { 1 });
            steps += 1;
            assert_eq!(step.reward, -1.0);
            assert!(step.state.iter().all(|v| (0.0..=1.0).contains(v)));
            if step.terminal {
                break;
            }
        }
        assert!(steps <= params.max_episode_steps);
    }
}
