//! Experiment configuration: a flat key = value text format with `#`
//! comments. Every key has a default, so an empty file runs the reference
//! parameter set (γ = 0.99, λ = 0.5, σ² = 0.1, η = 0.5, ε = 0.01,
//! h⁻¹ = 0.2, TOL1 = 0.1, TOL2 = 0.01, batches of 20, 5 seeds).

use crate::envs::{ChainEnv, ChainParams, Environment, NoisyNav2D, NoisyNavParams};
use crate::error::{Error, Result};
use crate::evaluator::{Hyper, Method};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Opi,
    ActorCritic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvChoice {
    ChainDet,
    ChainStoch,
    NoisyNav,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub method: Method,
    pub architecture: Architecture,
    pub env: EnvChoice,
    pub chain_n: usize,
    pub chain_slip: f64,
    pub max_episode_steps: usize,
    pub nav: NoisyNavParams,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub eta_decay_c: f64,
    pub epsilon: f64,
    pub h: f64,
    pub tol1: f64,
    pub tol2: f64,
    pub batch_size: usize,
    pub max_transitions: usize,
    pub seeds: Vec<u64>,
    pub output: String,
    pub return_window: usize,
    pub record_wallclock: bool,
    pub save_snapshot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Lspe,
            architecture: Architecture::Opi,
            env: EnvChoice::ChainStoch,
            chain_n: 5,
            chain_slip: 0.2,
            max_episode_steps: 200,
            nav: NoisyNavParams::default(),
            gamma: 0.99,
            lambda: 0.5,
            sigma2: 0.1,
            eta: 0.5,
            eta_decay_c: 0.0,
            epsilon: 0.01,
            h: 5.0,
            tol1: 0.1,
            tol2: 0.01,
            batch_size: 20,
            max_transitions: 20_000,
            seeds: vec![1, 2, 3, 4, 5],
            output: "out".into(),
            return_window: 100,
            record_wallclock: true,
            save_snapshot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn hyper(&self) -> Hyper {
        Hyper {
            gamma: self.gamma,
            lambda: self.lambda,
            sigma2: self.sigma2,
            eta: self.eta,
            eta_decay_c: self.eta_decay_c,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian_rbf_product(self.h)
    }

    pub fn chain_params(&self) -> ChainParams {
        ChainParams {
            n: self.chain_n,
            slip: if self.env == EnvChoice::ChainDet { 0.0 } else { self.chain_slip },
            max_episode_steps: self.max_episode_steps,
        }
    }

    pub fn env_is_deterministic(&self) -> bool {
        match self.env {
            EnvChoice::ChainDet => true,
            EnvChoice::ChainStoch => self.chain_slip == 0.0,
            EnvChoice::NoisyNav => false,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self.env {
            EnvChoice::ChainDet | EnvChoice::ChainStoch => 2,
            EnvChoice::NoisyNav => 4,
        }
    }

    pub fn build_env(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self.env {
            EnvChoice::ChainDet | EnvChoice::ChainStoch => {
                Box::new(ChainEnv::new(self.chain_params(), seed)?)
            }
            EnvChoice::NoisyNav => {
                let mut params = self.nav;
                params.max_episode_steps = self.max_episode_steps;
                Box::new(NoisyNav2D::new(params, seed)?)
            }
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config_at(line_no, "expected key = value"))?;
            cfg.apply(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |msg: String| Error::config_at(line, msg);
        match key {
            "method" => {
                self.method = match value {
                    "brm" => Method::Brm,
                    "lstd" => Method::Lstd,
                    "lspe" => Method::Lspe,
                    other => return Err(bad(format!("unknown method '{other}'"))),
                }
            }
            "architecture" => {
                self.architecture = match value {
                    "opi" => Architecture::Opi,
                    "actor-critic" => Architecture::ActorCritic,
                    other => return Err(bad(format!("unknown architecture '{other}'"))),
                }
            }
            "env" => {
                self.env = match value {
                    "chain-det" => EnvChoice::ChainDet,
                    "chain-stoch" => EnvChoice::ChainStoch,
                    "noisy-nav" => EnvChoice::NoisyNav,
                    other => return Err(bad(format!("unknown env '{other}'"))),
                }
            }
            "chain_n" => self.chain_n = parse_num(value, line)?,
            "chain_slip" => self.chain_slip = parse_num(value, line)?,
            "max_episode_steps" => self.max_episode_steps = parse_num(value, line)?,
            "nav_noise_std" => self.nav.noise_std = parse_num(value, line)?,
            "nav_goal_radius" => self.nav.goal_radius = parse_num(value, line)?,
            "nav_stride" => self.nav.stride = parse_num(value, line)?,
            "gamma" => self.gamma = parse_num(value, line)?,
            "lambda" => self.lambda = parse_num(value, line)?,
            "sigma2" => self.sigma2 = parse_num(value, line)?,
            "eta" => self.eta = parse_num(value, line)?,
            "eta_decay_c" => self.eta_decay_c = parse_num(value, line)?,
            "epsilon" => self.epsilon = parse_num(value, line)?,
            "h" => self.h = parse_num(value, line)?,
            "tol1" => self.tol1 = parse_num(value, line)?,
            "tol2" => self.tol2 = parse_num(value, line)?,
            "batch_size" => self.batch_size = parse_num(value, line)?,
            "max_transitions" => self.max_transitions = parse_num(value, line)?,
            "return_window" => self.return_window = parse_num(value, line)?,
            "record_wallclock" => self.record_wallclock = parse_bool(value, line)?,
            "save_snapshot" => self.save_snapshot = parse_bool(value, line)?,
            "output" => self.output = value.to_string(),
            "seeds" => {
                let seeds: std::result::Result<Vec<u64>, _> =
                    value.split(',').map(|s| s.trim().parse::<u64>()).collect();
                self.seeds = seeds.map_err(|e| bad(format!("bad seed list: {e}")))?;
                if self.seeds.is_empty() {
                    return Err(bad("seed list is empty".into()));
                }
            }
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        if self.sigma2 <= 0.0 {
            return Err(Error::config("sigma2 must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config("eta must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon must lie in [0, 1]"));
        }
        if self.h <= 0.0 {
            return Err(Error::config("kernel h must be positive"));
        }
        if self.tol1 < 0.0 || self.tol2 < 0.0 {
            return Err(Error::config("tolerances must be nonnegative"));
        }
        if self.method == Method::Brm && !self.env_is_deterministic() {
            return Err(Error::config(
                "brm requires a deterministic environment (stochastic transitions bias it)",
            ));
        }
        if self.architecture == Architecture::ActorCritic && self.method != Method::Lstd {
            return Err(Error::config("actor-critic runs pair with lstd"));
        }
        if self.architecture == Architecture::Opi && self.method == Method::Lstd {
            return Err(Error::config(
                "lstd cannot drive optimistic policy iteration; use actor-critic",
            ));
        }
        self.chain_params().validate()?;
        self.nav.validate()?;
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::config_at(line, format!("bad number '{value}': {e}")))
}

fn parse_bool(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(Error::config_at(line, format!("bad flag '{other}'"))),
    }
}
