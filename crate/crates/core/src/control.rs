//! Approximate policy iteration: greedy/ε-greedy action selection over the
//! predicted Q-values, optimistic policy iteration (the live evaluator is
//! the policy), and the actor–critic loop that re-evaluates an ever-growing
//! replayed transition list in small batches and copies the critic to the
//! actor after each full pass.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Architecture, ExperimentConfig};
use crate::envs::{Environment, EpisodeAdapter, Step};
use crate::error::{Error, Result};
use crate::evaluator::{Snapshot, Transition};
use crate::kernel::{KernelSpec, StateAction};
use crate::learner::{Learner, LearnerConfig};

impl Environment for Box<dyn Environment> {
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Step {
        (**self).step(action)
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
}

/// Index of the largest Q-value; ties break toward the lowest action id.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: with probability ε a uniform draw over all actions (the
/// greedy one included), otherwise the greedy choice.
pub fn select_action(q: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        greedy_action(q)
    }
}

/// An immutable value-function copy: the actor side of the actor–critic
/// pair, also used for snapshot export.
#[derive(Debug, Clone)]
pub struct FrozenNetwork {
    spec: KernelSpec,
    centers: Vec<StateAction>,
    w: DVector<f64>,
}

impl FrozenNetwork {
    /// Copies the critic's dictionary and weights; `None` until the critic
    /// has seeded.
    pub fn capture(learner: &Learner) -> Option<Self> {
        let dict = learner.dictionary()?;
        let eval = learner.evaluator()?;
        Some(FrozenNetwork {
            spec: *learner.kernel(),
            centers: dict.centers().to_vec(),
            w: eval.weights().clone(),
        })
    }

    pub fn from_snapshot(snap: &Snapshot) -> Self {
        FrozenNetwork {
            spec: snap.kernel,
            centers: snap.centers.clone(),
            w: DVector::from_vec(snap.w.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn q_value(&self, state: &[f64], action: usize) -> f64 {
        let x = StateAction::new(state.to_vec(), action);
        self.centers
            .iter()
            .zip(self.w.iter())
            .map(|(c, wi)| self.spec.eval_unchecked(c, &x) * wi)
            .sum()
    }

    pub fn q_values(&self, state: &[f64], n_actions: usize) -> Vec<f64> {
        (0..n_actions).map(|a| self.q_value(state, a)).collect()
    }

    pub fn greedy(&self, state: &[f64], n_actions: usize) -> usize {
        greedy_action(&self.q_values(state, n_actions))
    }
}

/// One raw environment step, as stored in the replay list.
#[derive(Debug, Clone)]
pub struct ReplayRecord {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Append-only list of observed steps plus the cursor state of the current
/// evaluation pass.
#[derive(Debug, Default)]
pub struct ReplayStore {
    records: Vec<ReplayRecord>,
    cursor: usize,
    pending_bridge: bool,
}

impl ReplayStore {
    pub fn push(&mut self, record: ReplayRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn records(&self) -> &[ReplayRecord] {
        &self.records
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
        self.pending_bridge = false;
    }

    /// True when the current pass has consumed every stored record.
    pub fn pass_complete(&self) -> bool {
        self.cursor >= self.records.len()
    }

    /// Derives the next transition of the pass under the policy `pi`
    /// (actions of successor states are recomputed, so the same stored
    /// records evaluate whatever policy the current actor encodes).
    pub fn next_transition(
        &mut self,
        gamma: f64,
        pi: &mut dyn FnMut(&[f64]) -> usize,
    ) -> Option<Transition> {
        if self.pending_bridge {
            // the bridge needs the next episode's first record
            let start_state = self.records.get(self.cursor)?.state.clone();
            let terminal_state = self.records[self.cursor - 1].next_state.clone();
            self.pending_bridge = false;
            let x = StateAction::new(terminal_state.clone(), pi(&terminal_state));
            let x_next = StateAction::new(start_state.clone(), pi(&start_state));
            return Some(Transition { x, reward: 0.0, x_next, gamma_eff: 0.0 });
        }
        let rec = self.records.get(self.cursor)?.clone();
        self.cursor += 1;
        if rec.terminal {
            self.pending_bridge = true;
        }
        let x = StateAction::new(rec.state.clone(), rec.action);
        let x_next = StateAction::new(rec.next_state.clone(), pi(&rec.next_state));
        Some(Transition { x, reward: rec.reward, x_next, gamma_eff: gamma })
    }
}

/// One completed episode of a run, the row format of the learning curves.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode_index: usize,
    pub transitions_seen: usize,
    pub episode_return: f64,
    pub length: usize,
    pub dict_size: usize,
    pub cost_xi: f64,
    pub ms_per_step: f64,
}

#[derive(Debug, Default)]
pub struct RunLog {
    pub episodes: Vec<EpisodeRecord>,
    pub total_transitions: usize,
    pub steps_skipped: usize,
    pub improvements: usize,
}

pub struct RunOutcome {
    pub log: RunLog,
    pub learner: Learner,
    pub actor: Option<FrozenNetwork>,
}

fn learner_config(cfg: &ExperimentConfig) -> LearnerConfig {
    LearnerConfig {
        method: cfg.method,
        hyper: cfg.hyper(),
        kernel: cfg.kernel(),
        tol1: cfg.tol1,
        tol2: cfg.tol2,
        fixed_dictionary: false,
        record: false,
    }
}

struct EpisodeTracker {
    ret: f64,
    length: usize,
    started: Instant,
    index: usize,
    record_wallclock: bool,
}

impl EpisodeTracker {
    fn new(record_wallclock: bool) -> Self {
        EpisodeTracker {
            ret: 0.0,
            length: 0,
            started: Instant::now(),
            index: 0,
            record_wallclock,
        }
    }

    fn observe(&mut self, reward: f64) {
        self.ret += reward;
        self.length += 1;
    }

    fn finish(&mut self, transitions_seen: usize, dict_size: usize, xi: f64) -> EpisodeRecord {
        let elapsed_ms = if self.record_wallclock {
            self.started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let record = EpisodeRecord {
            episode_index: self.index,
            transitions_seen,
            episode_return: self.ret,
            length: self.length,
            dict_size,
            cost_xi: xi,
            ms_per_step: if self.length > 0 { elapsed_ms / self.length as f64 } else { 0.0 },
        };
        self.index += 1;
        self.ret = 0.0;
        self.length = 0;
        self.started = Instant::now();
        record
    }
}

/// Optimistic policy iteration: ε-greedy actions from the live evaluator,
/// every transition processed as it happens.
pub fn run_opi(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    if cfg.architecture != Architecture::Opi {
        return Err(Error::config("run_opi requires architecture = opi"));
    }
    let env = cfg.build_env(env_seed(seed))?;
    let n_actions = env.n_actions();
    let mut adapter = EpisodeAdapter::new(env);
    let mut learner = Learner::new(learner_config(cfg));
    let mut rng = policy_rng(seed);
    let mut log = RunLog::default();
    let mut tracker = EpisodeTracker::new(cfg.record_wallclock);

    for _ in 0..cfg.max_transitions {
        let tr = {
            let learner_ref = &learner;
            let rng_ref = &mut rng;
            adapter.next_transition(cfg.gamma, &mut |s: &[f64]| {
                if !learner_ref.is_seeded() {
                    rng_ref.random_range(0..n_actions)
                } else {
                    let q = learner_ref.q_values(s, n_actions);
                    select_action(&q, cfg.epsilon, rng_ref)
                }
            })
        };
        let episode_over = tr.gamma_eff == 0.0;
        tracker.observe(tr.reward);
        learner.process(tr)?;
        log.total_transitions += 1;
        if episode_over {
            // the bridge itself is not part of the episode length
            tracker.length -= 1;
            log.episodes.push(tracker.finish(
                log.total_transitions,
                learner.dictionary_size(),
                learner.cost(),
            ));
        }
    }
    log.steps_skipped = learner.steps_skipped();
    let actor = FrozenNetwork::capture(&learner);
    Ok(RunOutcome { log, learner, actor })
}

/// Actor–critic with experience replay: the frozen actor drives behavior
/// while the critic consumes the replay list in batches; whenever a pass
/// over the list completes, the critic (weights and dictionary) becomes
/// the new actor and evaluation restarts under the new policy.
pub fn run_actor_critic(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    if cfg.architecture != Architecture::ActorCritic {
        return Err(Error::config("run_actor_critic requires architecture = actor-critic"));
    }
    let mut env = cfg.build_env(env_seed(seed))?;
    let n_actions = env.n_actions();
    let mut critic = Learner::new(learner_config(cfg));
    let mut actor: Option<FrozenNetwork> = None;
    let mut replay = ReplayStore::default();
    let mut rng = policy_rng(seed);
    let mut log = RunLog::default();
    let mut tracker = EpisodeTracker::new(cfg.record_wallclock);

    let mut state = env.reset();
    for _ in 0..cfg.max_transitions {
        let action = match &actor {
            Some(net) => select_action(&net.q_values(&state, n_actions), cfg.epsilon, &mut rng),
            None => rng.random_range(0..n_actions),
        };
        let out = env.step(action);
        replay.push(ReplayRecord {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.state.clone(),
            terminal: out.terminal,
        });
        log.total_transitions += 1;
        tracker.observe(out.reward);
        if out.terminal {
            log.episodes.push(tracker.finish(
                log.total_transitions,
                critic.dictionary_size(),
                critic.cost(),
            ));
            state = env.reset();
        } else {
            state = out.state;
        }

        // critic work: up to batch_size replayed transitions per step
        // (batch_size = 0 drains the whole list)
        let budget = if cfg.batch_size == 0 { usize::MAX } else { cfg.batch_size };
        for _ in 0..budget {
            let tr = {
                let actor_ref = &actor;
                let critic_ref = &critic;
                replay.next_transition(cfg.gamma, &mut |s: &[f64]| match actor_ref {
                    Some(net) => net.greedy(s, n_actions),
                    None => greedy_action(&critic_ref.q_values(s, n_actions)),
                })
            };
            match tr {
                Some(tr) => critic.process(tr)?,
                None => break,
            }
        }
        if replay.pass_complete() && !replay.is_empty() {
            actor = FrozenNetwork::capture(&critic).or(actor);
            critic.reset_evaluator_state();
            replay.rewind();
            log.improvements += 1;
        }
    }
    log.steps_skipped = critic.steps_skipped();
    let actor = actor.or_else(|| FrozenNetwork::capture(&critic));
    Ok(RunOutcome { log, learner: critic, actor })
}

// distinct deterministic seed derivations for the env and policy sources
fn env_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)
}

fn policy_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xd134_2543_de82_ef95).wrapping_add(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvChoice;
    use crate::evaluator::Method;

    #[test]
    fn greedy_prefers_the_lowest_id_on_ties() {
        assert_eq!(greedy_action(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(greedy_action(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(greedy_action(&[-1.0, 2.0, 1.0]), 1);
    }

    #[test]
    fn greedy_choice_is_scale_invariant() {
        let q = [0.2, 1.4, -0.3, 1.1];
        let scaled: Vec<f64> = q.iter().map(|v| v * 37.5).collect();
        assert_eq!(greedy_action(&q), greedy_action(&scaled));
    }

    #[test]
    fn epsilon_one_draws_uniformly() {
        let mut rng = policy_rng(0);
        let q = [5.0, 0.0, 0.0, 0.0];
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&q, 1.0, &mut rng)] += 1;
        }
        let mean = n as f64 / 4.0;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for (a, &c) in counts.iter().enumerate() {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "action {a}: {c}");
        }
    }

    #[test]
    fn small_epsilon_explores_at_the_expected_rate() {
        // non-greedy frequency ≈ ε(n−1)/n within 3σ
        let mut rng = policy_rng(1);
        let q = [5.0, 0.0, 0.0];
        let n = 100_000;
        let eps = 0.01;
        let mut non_greedy = 0usize;
        for _ in 0..n {
            if select_action(&q, eps, &mut rng) != 0 {
                non_greedy += 1;
            }
        }
        let p = eps * 2.0 / 3.0;
        let mean = p * n as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((non_greedy as f64 - mean).abs() < 3.0 * sd, "{non_greedy}");
    }

    #[test]
    fn dominant_action_is_always_chosen_when_greedy() {
        let mut rng = policy_rng(2);
        let q = [0.0, 3.0];
        for _ in 0..100 {
            assert_eq!(select_action(&q, 0.0, &mut rng), 1);
        }
    }

    fn tiny_chain_config(method: Method, architecture: Architecture) -> ExperimentConfig {
        ExperimentConfig {
            method,
            architecture,
            env: EnvChoice::ChainStoch,
            chain_n: 4,
            chain_slip: 0.2,
            max_transitions: 2_000,
            epsilon: 0.2,
            record_wallclock: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn opi_runs_and_completes_episodes() {
        let cfg = tiny_chain_config(Method::Lspe, Architecture::Opi);
        let outcome = run_opi(&cfg, 1).unwrap();
        assert_eq!(outcome.log.total_transitions, 2_000);
        assert!(!outcome.log.episodes.is_empty());
        assert!(outcome.learner.dictionary_size() >= 2);
        // every completed episode on the chain ends with the goal reward
        // or a zero-reward cutoff
        for ep in &outcome.log.episodes {
            assert!(ep.episode_return == 1.0 || ep.episode_return == 0.0);
        }
    }

    #[test]
    fn zero_reward_env_keeps_weights_at_zero_under_opi() {
        // a chain too long to ever finish within the cap behaves as a
        // zero-reward environment
        let cfg = ExperimentConfig {
            method: Method::Lspe,
            architecture: Architecture::Opi,
            env: EnvChoice::ChainDet,
            chain_n: 50,
            max_episode_steps: 10,
            max_transitions: 500,
            epsilon: 0.5,
            tol2: 0.0,
            record_wallclock: false,
            ..ExperimentConfig::default()
        };
        let outcome = run_opi(&cfg, 3).unwrap();
        let eval = outcome.learner.evaluator().unwrap();
        assert_eq!(eval.weights().amax(), 0.0);
    }

    #[test]
    fn opi_on_the_deterministic_chain_reaches_near_optimal_return() {
        use crate::envs::{as_finite_mdp, ChainEnv, ChainParams, Environment};
        use crate::oracle::policy_iteration;
        // LSPE with optimistic policy iteration, 2e4 transitions; the
        // settled mean episode return must come within 5% of the return
        // of the tabular-optimal policy (rolled out on the same env)
        let cfg = ExperimentConfig {
            method: Method::Lspe,
            architecture: Architecture::Opi,
            env: EnvChoice::ChainDet,
            chain_n: 5,
            max_transitions: 20_000,
            epsilon: 0.4,
            h: 25.0,
            tol2: 0.0,
            record_wallclock: false,
            ..ExperimentConfig::default()
        };
        let outcome = run_opi(&cfg, 2).unwrap();
        let episodes = &outcome.log.episodes;
        let tail = &episodes[episodes.len() - episodes.len() / 4..];
        let settled: f64 =
            tail.iter().map(|e| e.episode_return).sum::<f64>() / tail.len() as f64;

        let params = ChainParams::deterministic(5);
        let mdp = as_finite_mdp(&params, cfg.gamma).unwrap();
        let (optimal, _) = policy_iteration(&mdp).unwrap();
        let mut env = ChainEnv::new(params, 0).unwrap();
        let mut s = env.reset();
        let mut optimal_return = 0.0;
        loop {
            let step = env.step(optimal[(s[0] * 4.0).round() as usize]);
            optimal_return += step.reward;
            if step.terminal {
                break;
            }
            s = step.state;
        }
        assert!(
            (settled - optimal_return).abs() <= 0.05 * optimal_return.abs(),
            "settled {settled} vs optimal {optimal_return}"
        );
    }

    #[test]
    fn actor_critic_improves_and_reuses_the_replay_prefix() {
        let cfg = tiny_chain_config(Method::Lstd, Architecture::ActorCritic);
        let outcome = run_actor_critic(&cfg, 5).unwrap();
        assert!(outcome.log.improvements > 1, "no actor copies happened");
        assert!(outcome.actor.is_some());
    }

    #[test]
    fn frozen_actor_predictions_are_bit_stable() {
        let cfg = tiny_chain_config(Method::Lstd, Architecture::ActorCritic);
        let outcome = run_actor_critic(&cfg, 6).unwrap();
        let actor = outcome.actor.unwrap();
        let probe = vec![0.4];
        let first = actor.q_values(&probe, 2);
        for _ in 0..5 {
            let again = actor.q_values(&probe, 2);
            assert_eq!(first, again);
        }
    }

    #[test]
    fn replay_bridges_episode_boundaries_once() {
        let mut store = ReplayStore::default();
        store.push(ReplayRecord {
            state: vec![0.0],
            action: 1,
            reward: 1.0,
            next_state: vec![1.0],
            terminal: true,
        });
        store.push(ReplayRecord {
            state: vec![0.0],
            action: 0,
            reward: 0.0,
            next_state: vec![0.5],
            terminal: false,
        });
        let mut pi = |_: &[f64]| 0usize;
        let t1 = store.next_transition(0.9, &mut pi).unwrap();
        assert_eq!(t1.gamma_eff, 0.9);
        assert_eq!(t1.reward, 1.0);
        let bridge = store.next_transition(0.9, &mut pi).unwrap();
        assert_eq!(bridge.gamma_eff, 0.0);
        assert_eq!(bridge.x.state, vec![1.0]);
        assert_eq!(bridge.x_next.state, vec![0.0]);
        let t2 = store.next_transition(0.9, &mut pi).unwrap();
        assert_eq!(t2.gamma_eff, 0.9);
        assert!(store.next_transition(0.9, &mut pi).is_none());
        assert!(store.pass_complete());
    }
}
