//! Per-transition orchestration: dictionary seeding, the normal step, the
//! two-part growth decision and optional trajectory recording.
//!
//! The dictionary seeds from the first two distinct state-action tuples
//! observed. Transitions arriving before the seed is complete are buffered
//! and replayed once it is, so no sample is lost in the degenerate case
//! where early tuples coincide.

use crate::dictionary::{is_novel, Dictionary};
use crate::error::{Error, Result};
use crate::evaluator::{EvaluatorState, Hyper, Method, StepVectors, Transition};
use crate::kernel::{KernelSpec, StateAction};
use crate::oracle::TrajectoryLog;

/// Distinctness floor for the second seed center.
const SEED_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub method: Method,
    pub hyper: Hyper,
    pub kernel: KernelSpec,
    pub tol1: f64,
    /// TOL2 = 0 disables the supervised test (unsupervised selection).
    pub tol2: f64,
    /// Freeze the dictionary: no growth beyond the provided centers.
    pub fixed_dictionary: bool,
    /// Keep a full trajectory log for oracle cross-checks.
    pub record: bool,
}

#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    dict: Option<Dictionary>,
    eval: Option<EvaluatorState>,
    pending: Vec<Transition>,
    log: TrajectoryLog,
    processed: usize,
    skipped: usize,
    grown: usize,
}

impl Learner {
    pub fn new(cfg: LearnerConfig) -> Self {
        Learner {
            cfg,
            dict: None,
            eval: None,
            pending: Vec::new(),
            log: TrajectoryLog::default(),
            processed: 0,
            skipped: 0,
            grown: 0,
        }
    }

    /// Starts from an explicit dictionary (typically with
    /// `fixed_dictionary` set); the evaluator initializes immediately.
    pub fn with_dictionary(cfg: LearnerConfig, dict: Dictionary) -> Self {
        let eval = EvaluatorState::init(cfg.method, cfg.hyper, &dict);
        let log = TrajectoryLog {
            seed_centers: dict.centers().to_vec(),
            ..TrajectoryLog::default()
        };
        Learner {
            cfg,
            dict: Some(dict),
            eval: Some(eval),
            pending: Vec::new(),
            log,
            processed: 0,
            skipped: 0,
            grown: 0,
        }
    }

    pub fn is_seeded(&self) -> bool {
        self.eval.is_some()
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        self.dict.as_ref()
    }

    pub fn evaluator(&self) -> Option<&EvaluatorState> {
        self.eval.as_ref()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.cfg.kernel
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn transitions_processed(&self) -> usize {
        self.processed
    }

    pub fn steps_skipped(&self) -> usize {
        self.skipped
    }

    pub fn dictionary_size(&self) -> usize {
        self.dict.as_ref().map_or(0, Dictionary::len)
    }

    pub fn cost(&self) -> f64 {
        self.eval.as_ref().map_or(0.0, EvaluatorState::cost)
    }

    /// Q̃(s, a) for every action; zero before the dictionary is seeded.
    pub fn q_values(&self, state: &[f64], n_actions: usize) -> Vec<f64> {
        match (&self.dict, &self.eval) {
            (Some(dict), Some(eval)) => (0..n_actions)
                .map(|a| {
                    let x = StateAction::new(state.to_vec(), a);
                    eval.predict(dict, &self.cfg.kernel, &x).unwrap_or(0.0)
                })
                .collect(),
            _ => vec![0.0; n_actions],
        }
    }

    /// Reinitializes the least-squares state on the current dictionary,
    /// keeping the dictionary itself; the actor-critic calls this between
    /// evaluation passes because each pass solves for a different policy.
    pub fn reset_evaluator_state(&mut self) {
        if let (Some(dict), true) = (&self.dict, self.eval.is_some()) {
            self.eval = Some(EvaluatorState::init(self.cfg.method, self.cfg.hyper, dict));
        }
    }

    /// Feeds one transition through seeding, the normal step and the
    /// growth decision.
    pub fn process(&mut self, tr: Transition) -> Result<()> {
        if tr.x.state.len() != tr.x_next.state.len() {
            return Err(Error::DimensionMismatch {
                expected: tr.x.state.len(),
                got: tr.x_next.state.len(),
            });
        }
        if self.eval.is_none() {
            self.try_seed(tr)?;
            return Ok(());
        }
        self.process_seeded(tr)
    }

    fn try_seed(&mut self, tr: Transition) -> Result<()> {
        let spec = self.cfg.kernel;
        match &mut self.dict {
            None => {
                let dict = Dictionary::seeded(&spec, tr.x.clone())?;
                self.log.seed_centers.push(tr.x.clone());
                self.dict = Some(dict);
                // fall through to test x_next as the second seed
                self.try_second_seed(tr)
            }
            Some(_) => self.try_second_seed(tr),
        }
    }

    fn try_second_seed(&mut self, tr: Transition) -> Result<()> {
        let spec = self.cfg.kernel;
        let dict = self.dict.as_mut().expect("first seed present");
        let proj = dict.project(&spec, &tr.x_next)?;
        if proj.delta > SEED_FLOOR {
            dict.grow(&spec, tr.x_next.clone(), &proj, 0)?;
            self.log.seed_centers.push(tr.x_next.clone());
            self.eval = Some(EvaluatorState::init(self.cfg.method, self.cfg.hyper, dict));
            self.pending.push(tr);
            let pending = std::mem::take(&mut self.pending);
            for buffered in pending {
                self.process_seeded(buffered)?;
            }
        } else {
            self.pending.push(tr);
        }
        Ok(())
    }

    fn process_seeded(&mut self, tr: Transition) -> Result<()> {
        let spec = self.cfg.kernel;
        let tol1 = self.cfg.tol1;
        let tol2 = self.cfg.tol2;
        let dict = self.dict.as_mut().expect("seeded");
        let eval = self.eval.as_mut().expect("seeded");

        let vectors = StepVectors::compute(&spec, dict, &tr)?;
        let proj = dict.project(&spec, &tr.x_next)?;
        let ctx = match eval.normal_step(&tr, vectors) {
            Ok(ctx) => ctx,
            Err(Error::SingularUpdate { .. }) => {
                self.skipped += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        self.processed += 1;
        if self.cfg.record {
            self.log.transitions.push(tr.clone());
        }

        if self.cfg.fixed_dictionary || !is_novel(&proj, tol1) {
            return Ok(());
        }
        // the dictionary's own pivot floor must clear before the evaluator
        // commits to growing, so the two structures stay in lockstep
        if proj.delta <= dict.kmm_inv().default_floor().max(SEED_FLOOR) {
            return Ok(());
        }
        if tol2 > 0.0 {
            match eval.usefulness(&ctx, &proj) {
                Ok(u) if u.gain > tol2 => {}
                _ => return Ok(()),
            }
        }
        match eval.grow_step(&ctx, &proj, &tr) {
            Ok(()) => {
                dict.grow(&spec, tr.x_next.clone(), &proj, self.processed)?;
                self.grown += 1;
                if self.cfg.record {
                    self.log
                        .insertions
                        .push((self.processed, tr.x_next.clone()));
                }
                Ok(())
            }
            Err(Error::SingularGrowth { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }
}
