//! Learning-curve CSV rendering and the seeded multi-run experiment
//! driver. Rendering lives here (not in the CLI) so the byte-level
//! determinism of the artifacts is testable end to end.

use crate::config::{Architecture, ExperimentConfig};
use crate::control::{run_actor_critic, run_opi, RunOutcome};
use crate::error::Result;

pub const PER_SEED_HEADER: &str =
    "transitions_seen,episode_index,episode_return,mean_return_window,dict_size,cost_xi,wallclock_ms_per_step";

pub const AGGREGATE_HEADER: &str =
    "bucket_end_transitions,n_seeds,mean_return,std_return,mean_dict_size,std_dict_size";

/// Number of transition buckets in the aggregate curve.
const AGGREGATE_BUCKETS: usize = 50;

pub struct ExperimentArtifacts {
    /// (seed, csv text), in config order.
    pub per_seed: Vec<(u64, String)>,
    pub aggregate: String,
    pub outcomes: Vec<RunOutcome>,
}

/// Runs one seed of the configured experiment.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    match cfg.architecture {
        Architecture::Opi => run_opi(cfg, seed),
        Architecture::ActorCritic => run_actor_critic(cfg, seed),
    }
}

/// Runs every configured seed, dispatching up to `max_workers` in
/// parallel, and renders the CSV artifacts. Results are assembled in seed
/// order regardless of completion order.
pub fn run_experiment(cfg: &ExperimentConfig, max_workers: usize) -> Result<ExperimentArtifacts> {
    let workers = max_workers.max(1);
    let mut outcomes: Vec<Option<Result<RunOutcome>>> =
        (0..cfg.seeds.len()).map(|_| None).collect();
    for chunk in cfg.seeds.chunks(workers).zip(chunk_indices(cfg.seeds.len(), workers)) {
        let (seeds, indices) = chunk;
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| scope.spawn(move || run_seed(cfg, seed)))
                .collect();
            for (slot, handle) in indices.clone().zip(handles) {
                outcomes[slot] = Some(handle.join().expect("seed worker panicked"));
            }
        });
    }
    let outcomes: Result<Vec<RunOutcome>> =
        outcomes.into_iter().map(|o| o.expect("all seeds ran")).collect();
    let outcomes = outcomes?;

    let per_seed: Vec<(u64, String)> = cfg
        .seeds
        .iter()
        .zip(&outcomes)
        .map(|(&seed, outcome)| (seed, per_seed_csv(outcome, cfg.return_window)))
        .collect();
    let aggregate = aggregate_csv(cfg, &outcomes);
    Ok(ExperimentArtifacts { per_seed, aggregate, outcomes })
}

fn chunk_indices(
    total: usize,
    chunk: usize,
) -> impl Iterator<Item = std::ops::Range<usize>> + Clone {
    (0..total.div_ceil(chunk)).map(move |i| i * chunk..((i + 1) * chunk).min(total))
}

/// One row per completed episode, with a trailing mean over the last
/// `window` episode returns.
pub fn per_seed_csv(outcome: &RunOutcome, window: usize) -> String {
    let mut out = String::from(PER_SEED_HEADER);
    out.push('\n');
    let episodes = &outcome.log.episodes;
    for (i, ep) in episodes.iter().enumerate() {
        let lo = (i + 1).saturating_sub(window.max(1));
        let window_slice = &episodes[lo..=i];
        let mean: f64 =
            window_slice.iter().map(|e| e.episode_return).sum::<f64>() / window_slice.len() as f64;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{:.6},{:.3}\n",
            ep.transitions_seen,
            ep.episode_index,
            ep.episode_return,
            mean,
            ep.dict_size,
            ep.cost_xi,
            ep.ms_per_step,
        ));
    }
    out
}

/// Mean ± std across seeds of the per-bucket mean episode return and
/// dictionary size; buckets partition [0, max_transitions]. Buckets where
/// no seed finished an episode are skipped.
pub fn aggregate_csv(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    if cfg.max_transitions == 0 {
        return out;
    }
    let bucket_width = (cfg.max_transitions as f64 / AGGREGATE_BUCKETS as f64).ceil() as usize;
    for b in 0..AGGREGATE_BUCKETS {
        let lo = b * bucket_width;
        let hi = ((b + 1) * bucket_width).min(cfg.max_transitions);
        if lo >= hi {
            break;
        }
        let mut seed_returns = Vec::new();
        let mut seed_dicts = Vec::new();
        for outcome in outcomes {
            let eps: Vec<_> = outcome
                .log
                .episodes
                .iter()
                .filter(|e| e.transitions_seen > lo && e.transitions_seen <= hi)
                .collect();
            if eps.is_empty() {
                continue;
            }
            seed_returns
                .push(eps.iter().map(|e| e.episode_return).sum::<f64>() / eps.len() as f64);
            seed_dicts
                .push(eps.iter().map(|e| e.dict_size as f64).sum::<f64>() / eps.len() as f64);
        }
        if seed_returns.is_empty() {
            continue;
        }
        let (mean_ret, std_ret) = mean_std(&seed_returns);
        let (mean_dict, std_dict) = mean_std(&seed_dicts);
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            hi,
            seed_returns.len(),
            mean_ret,
            std_ret,
            mean_dict,
            std_dict,
        ));
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
