//! One optimization run: shared first query, optional warm-up, then `T`
//! batches, each decided in full before any of its points is evaluated.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{batch_entropy, RecommendationRule, RegretTrace};
use crate::error::{Error, Result};
use crate::gp::{GridPosterior, KernelParams};
use crate::objectives::Objective;
use crate::strategy::{two_stage_init, BatchSelector, StrategyConfig};

/// Constant prior mean of the GP.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMean {
    /// The noisy value of the shared first query.
    #[default]
    FirstObservation,
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub strategy: StrategyConfig,
    pub kernel: KernelParams,
    pub iterations: usize,
    pub prior_mean: PriorMean,
    pub recommendation: RecommendationRule,
    /// Record the entropy of each batch's k-DPP when it is enumerable.
    pub entropies: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: RegretTrace,
    pub first_index: usize,
    /// Milliseconds spent on each outer iteration.
    pub wall_time_ms: Vec<f64>,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream addressed by `path` under `root`. Each component is
/// folded in with one SplitMix64 step, so distinct paths give unrelated
/// streams regardless of the order in which they are requested.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Tag of the stream that draws the shared first query.
pub const FIRST_POINT_STREAM: u64 = 0x0066_6972_7374;

/// Uniformly random grid index for replicate `seed`, identical for every
/// strategy.
pub fn shared_first_point(domain_size: usize, root: u64, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root, &[FIRST_POINT_STREAM, seed]));
    rng.random_range(0..domain_size)
}

pub fn run_optimization<R: Rng + ?Sized>(
    objective: &Objective,
    cfg: &RunConfig,
    seed: u64,
    first_index: usize,
    rng: &mut R,
) -> Result<RunOutcome> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("iterations", "must be at least 1"));
    }
    let grid = objective.grid();
    if first_index >= grid.len() {
        return Err(Error::invalid("first_index", "outside the grid"));
    }
    let selector = BatchSelector::new(cfg.strategy.clone())?;
    let mut trace = RegretTrace::new(
        cfg.strategy.algorithm,
        seed,
        cfg.strategy.batch_size,
        objective.optimum_value(),
        cfg.recommendation,
    );

    let y0 = objective.observe_at(first_index, rng);
    let offset = match cfg.prior_mean {
        PriorMean::FirstObservation => y0,
        PriorMean::Constant(c) => c,
    };
    let mut posterior = GridPosterior::new(
        std::sync::Arc::clone(grid),
        cfg.kernel.clone(),
        cfg.strategy.noise_variance,
    )?
    .observe(first_index, y0 - offset)?;
    trace.add_history(&[first_index], &[y0]);

    let (warm, init_obs) =
        two_stage_init(&posterior, &cfg.strategy, |i| objective.observe_at(i, rng) - offset)?;
    posterior = warm;
    let (idx, ys): (Vec<usize>, Vec<f64>) = init_obs.into_iter().map(|(i, y)| (i, y + offset)).unzip();
    trace.add_history(&idx, &ys);

    let mut wall_time_ms = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let start = Instant::now();
        let decision = selector.select(&posterior, t, rng)?;
        let entropy = match (&decision.kernel, cfg.entropies) {
            (Some(k), true) if decision.indices.len() > 1 => {
                batch_entropy(k, decision.indices.len() - 1)
            }
            _ => None,
        };
        let observed: Vec<f64> = decision
            .indices
            .iter()
            .map(|&i| objective.observe_at(i, rng))
            .collect();
        for (&i, &y) in decision.indices.iter().zip(&observed) {
            posterior = posterior.observe(i, y - offset)?;
        }
        let true_values: Vec<f64> = decision.indices.iter().map(|&i| objective.value_at(i)).collect();
        trace.record(
            &decision,
            &true_values,
            &observed,
            posterior.means()?,
            |i| objective.value_at(i),
            entropy,
        );
        wall_time_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(RunOutcome {
        trace,
        first_index,
        wall_time_ms,
    })
}
