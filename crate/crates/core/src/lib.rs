//! Online kernel-based least-squares policy evaluation with growing
//! regularization networks.
//!
//! The crate implements three recursive policy-evaluation engines (BRM,
//! LSTD(λ), LSPE(λ)) over a shared sparse kernel representation: a growing
//! dictionary of basis-function centers selected online by a novelty test
//! plus an optional supervised usefulness test. All per-step work is O(m²)
//! in the dictionary size m, independent of the number of observed
//! transitions.
//!
//! Every recursive quantity has an independent dense counterpart in
//! [`oracle`], used by the test suite and the `verify` harness to confirm
//! batch equivalence, cost-recursion consistency and exact-MDP agreement.

pub mod config;
pub mod control;
pub mod dictionary;
pub mod envs;
pub mod error;
pub mod evaluator;
pub mod kernel;
pub mod learner;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod verification;

pub use config::ExperimentConfig;
pub use dictionary::{Dictionary, Projection};
pub use error::{Error, Result};
pub use evaluator::{EvaluatorState, Hyper, Method, Transition};
pub use kernel::{KernelSpec, StateAction};
pub use learner::Learner;
