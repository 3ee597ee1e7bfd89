//! Batch selectors.
//!
//! Two families are implemented:
//!
//! * **BUCB / B-EST** pick all `B` points sequentially by a UCB-style
//!   argmax. The mean is frozen at the last real observation; between picks
//!   only the variance is updated by hallucination, and the confidence width
//!   is inflated by the regret multiplier `C'`.
//! * **(UCB|EST)-DPP-(MAX|SAMPLE)** pick the first point by UCB/EST, restrict
//!   the rest to the relevance region, and choose the remaining `B - 1`
//!   points from the `(B-1)`-DPP whose kernel is
//!   `K = I + σ⁻² k_{t,1}(p_i, p_j)` over the region, `k_{t,1}` being the
//!   posterior covariance after hallucinating the first point. MAX takes the
//!   greedy determinant maximizer, SAMPLE draws from the k-DPP.
//!
//! Greedy DPP maximization on that kernel is the same procedure as pure
//! exploration (repeatedly take the largest hallucinated variance in the
//! region), since each greedy gain `det(K_{S+i}) / det(K_S)` equals
//! `1 + σ⁻² σ²(x_i | S)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    argmax_ucb, beta_est, beta_ucb, ConfidenceParams, MaxEstimator, Rule, UcbMaxEstimator,
};
use crate::dpp::{self, DppKernel, KernelView};
use crate::error::{Error, Result};
use crate::gp::GridPosterior;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "bucb")]
    Bucb,
    #[serde(rename = "b-est")]
    BEst,
    #[serde(rename = "ucb-dpp-max")]
    UcbDppMax,
    #[serde(rename = "est-dpp-max")]
    EstDppMax,
    #[serde(rename = "ucb-dpp-sample")]
    UcbDppSample,
    #[serde(rename = "est-dpp-sample")]
    EstDppSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DppMode {
    Max,
    Sample,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bucb,
        Algorithm::BEst,
        Algorithm::UcbDppMax,
        Algorithm::EstDppMax,
        Algorithm::UcbDppSample,
        Algorithm::EstDppSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bucb => "bucb",
            Algorithm::BEst => "b-est",
            Algorithm::UcbDppMax => "ucb-dpp-max",
            Algorithm::EstDppMax => "est-dpp-max",
            Algorithm::UcbDppSample => "ucb-dpp-sample",
            Algorithm::EstDppSample => "est-dpp-sample",
        }
    }

    pub fn rule(self) -> Rule {
        match self {
            Algorithm::Bucb | Algorithm::UcbDppMax | Algorithm::UcbDppSample => Rule::Ucb,
            Algorithm::BEst | Algorithm::EstDppMax | Algorithm::EstDppSample => Rule::Est,
        }
    }

    /// `None` for the BUCB family.
    pub fn dpp_mode(self) -> Option<DppMode> {
        match self {
            Algorithm::Bucb | Algorithm::BEst => None,
            Algorithm::UcbDppMax | Algorithm::EstDppMax => Some(DppMode::Max),
            Algorithm::UcbDppSample | Algorithm::EstDppSample => Some(DppMode::Sample),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("algorithm", format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Exact spectral sampling up to `exact_threshold` candidates, MCMC above.
    #[default]
    Auto,
    Exact,
    Mcmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default)]
    pub kind: SamplerKind,
    #[serde(default = "default_exact_threshold")]
    pub exact_threshold: usize,
    /// Chain length per sample; `None` uses `⌈10 m k ln m⌉`.
    #[serde(default)]
    pub mcmc_steps: Option<usize>,
}

fn default_exact_threshold() -> usize {
    200
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Auto,
            exact_threshold: default_exact_threshold(),
            mcmc_steps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub delta: f64,
    /// GP observation noise `σ²`.
    pub noise_variance: f64,
    /// `C'`, the BUCB confidence inflation.
    pub regret_multiplier: f64,
    /// `T_init`, size of the uncertainty-sampling warm-up batch.
    pub init_budget: usize,
    pub sampler: SamplerConfig,
}

impl StrategyConfig {
    pub fn new(algorithm: Algorithm, batch_size: usize, noise_variance: f64) -> Self {
        StrategyConfig {
            algorithm,
            batch_size,
            delta: 0.1,
            noise_variance,
            regret_multiplier: 1.0,
            init_budget: 0,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::invalid(
                "noise_variance",
                format!("must be positive, got {}", self.noise_variance),
            ));
        }
        if !(self.regret_multiplier >= 1.0) || !self.regret_multiplier.is_finite() {
            return Err(Error::invalid(
                "regret_multiplier",
                format!("must be ≥ 1, got {}", self.regret_multiplier),
            ));
        }
        Ok(())
    }
}

/// One batch and the quantities that produced it.
#[derive(Clone, Debug)]
pub struct BatchDecision {
    /// Grid indices in selection order; the first is the acquisition point.
    pub indices: Vec<usize>,
    /// Relevance region (grid indices, ascending) for the DPP family.
    pub region: Option<Vec<usize>>,
    /// `β` of the first pick, including the `C'²` factor for BUCB.
    pub beta: f64,
    /// Unscaled schedule value at every inner step (one entry for the DPP
    /// family, `B` entries for BUCB).
    pub schedule_betas: Vec<f64>,
    /// The DPP kernel when it was materialized.
    pub kernel: Option<DppKernel>,
    /// `σ_{t-1,b}(x_{t,b})`: deviation of each pick given the earlier picks
    /// of the same batch.
    pub conditional_std: Vec<f64>,
    /// The region was too small and the batch was completed by global
    /// variance-greedy picks.
    pub used_fallback: bool,
}

/// `⌊(t - 1) / B⌋ · B`, the number of evaluations whose values are known at
/// inner step `t`.
pub fn fb_map(t: usize, batch_size: usize) -> usize {
    assert!(t >= 1, "inner steps are counted from 1");
    assert!(batch_size >= 1, "batch size must be positive");
    (t - 1) / batch_size * batch_size
}

/// Strategy with its `m̂` supplier.
#[derive(Clone, Debug)]
pub struct BatchSelector {
    cfg: StrategyConfig,
    estimator: Arc<dyn MaxEstimator>,
}

impl BatchSelector {
    pub fn new(cfg: StrategyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BatchSelector {
            cfg,
            estimator: Arc::new(UcbMaxEstimator),
        })
    }

    pub fn with_max_estimator(mut self, estimator: Arc<dyn MaxEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    /// Selects the batch for outer iteration `iteration` (from 1).
    pub fn select<R: Rng + ?Sized>(
        &self,
        posterior: &GridPosterior,
        iteration: usize,
        rng: &mut R,
    ) -> Result<BatchDecision> {
        let mean = posterior.means()?;
        self.select_with_mean(posterior, mean, iteration, rng)
    }

    /// Same as [`select`](Self::select) with an explicit (frozen) mean.
    pub fn select_with_mean<R: Rng + ?Sized>(
        &self,
        posterior: &GridPosterior,
        mean: &[f64],
        iteration: usize,
        rng: &mut R,
    ) -> Result<BatchDecision> {
        let rule = self.cfg.algorithm.rule();
        match self.cfg.algorithm.dpp_mode() {
            None => select_batch_bucb_with_mean(
                posterior,
                mean,
                &self.cfg,
                rule,
                iteration,
                self.estimator.as_ref(),
            ),
            Some(mode) => select_batch_dpp_with_mean(
                posterior,
                mean,
                &self.cfg,
                rule,
                mode,
                iteration,
                self.estimator.as_ref(),
                rng,
            ),
        }
    }
}

/// BUCB / B-EST batch for outer iteration `iteration`.
pub fn select_batch_bucb(
    posterior: &GridPosterior,
    cfg: &StrategyConfig,
    rule: Rule,
    iteration: usize,
) -> Result<BatchDecision> {
    let mean = posterior.means()?;
    select_batch_bucb_with_mean(posterior, mean, cfg, rule, iteration, &UcbMaxEstimator)
}

pub fn select_batch_bucb_with_mean(
    posterior: &GridPosterior,
    frozen_mean: &[f64],
    cfg: &StrategyConfig,
    rule: Rule,
    iteration: usize,
    estimator: &dyn MaxEstimator,
) -> Result<BatchDecision> {
    cfg.validate()?;
    let b = cfg.batch_size;
    let signal_std = posterior.params().signal_std();
    let base = ConfidenceParams::new(cfg.delta, posterior.grid().len(), 1)?;
    let mut state = posterior.clone();
    let mut indices = Vec::with_capacity(b);
    let mut conditional_std = Vec::with_capacity(b);
    let mut schedule_betas = Vec::with_capacity(b);
    let mut first_beta = 0.0;
    for step in 0..b {
        let t = (iteration - 1) * b + step + 1;
        let p = base.at(t);
        let std = state.stds();
        let raw = match rule {
            Rule::Ucb => beta_ucb(&p),
            Rule::Est => {
                let mhat = estimator.estimate(frozen_mean, &std, &p, signal_std);
                beta_est(frozen_mean, &std, mhat)?
            }
        };
        let sqrt_beta = cfg.regret_multiplier * raw.max(0.0).sqrt();
        if step == 0 {
            first_beta = sqrt_beta * sqrt_beta;
        }
        let idx = argmax_ucb(frozen_mean, &std, sqrt_beta);
        schedule_betas.push(raw);
        conditional_std.push(std[idx]);
        indices.push(idx);
        if step + 1 < b {
            state = state.hallucinate(idx)?;
        }
    }
    Ok(BatchDecision {
        indices,
        region: None,
        beta: first_beta,
        schedule_betas,
        kernel: None,
        conditional_std,
        used_fallback: false,
    })
}

/// Picks `count` points by repeatedly taking the largest hallucinated
/// variance among `candidates` (ascending grid indices; ties go to the
/// lowest). Returns the picks and the state after hallucinating them.
pub fn variance_greedy(
    posterior: &GridPosterior,
    candidates: &[usize],
    count: usize,
) -> Result<(Vec<usize>, GridPosterior)> {
    let mut state = posterior.clone();
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(count);
    for _ in 0..count.min(candidates.len()) {
        let mut best = usize::MAX;
        let mut best_var = f64::NEG_INFINITY;
        for (pos, &c) in candidates.iter().enumerate() {
            if !taken[pos] && state.variance(c) > best_var {
                best_var = state.variance(c);
                best = pos;
            }
        }
        taken[best] = true;
        picks.push(candidates[best]);
        state = state.hallucinate(candidates[best])?;
    }
    Ok((picks, state))
}

/// Uncertainty-sampling warm-up: `T_init` variance-greedy picks (with
/// hallucination in between), all evaluated afterwards and folded into the
/// posterior that seeds the batch loop.
pub fn two_stage_init<F>(
    posterior: &GridPosterior,
    cfg: &StrategyConfig,
    mut evaluate: F,
) -> Result<(GridPosterior, Vec<(usize, f64)>)>
where
    F: FnMut(usize) -> f64,
{
    if cfg.init_budget == 0 {
        return Ok((posterior.clone(), Vec::new()));
    }
    let all: Vec<usize> = (0..posterior.grid().len()).collect();
    let mut picks = Vec::with_capacity(cfg.init_budget);
    let mut state = posterior.clone();
    // the budget may exceed |X|; keep cycling through the grid in that case
    while picks.len() < cfg.init_budget {
        let (p, s) = variance_greedy(&state, &all, cfg.init_budget - picks.len())?;
        picks.extend(p);
        state = s;
    }
    let observations: Vec<(usize, f64)> = picks.iter().map(|&i| (i, evaluate(i))).collect();
    let mut updated = posterior.clone();
    for &(i, y) in &observations {
        updated = updated.observe(i, y)?;
    }
    Ok((updated, observations))
}

/// `R⁺ = {x : μ(x) + 2√β_next σ(x) ≥ y•}` where `y• = max_x μ(x) - √β σ(x)`.
/// Returns ascending grid indices.
pub fn relevance_region(mean: &[f64], std: &[f64], beta: f64, beta_next: f64) -> Vec<usize> {
    let s = beta.max(0.0).sqrt();
    let s_next = beta_next.max(0.0).sqrt();
    let mut y_dot = f64::NEG_INFINITY;
    for (m, d) in mean.iter().zip(std) {
        let lcb = m - s * d;
        if lcb > y_dot {
            y_dot = lcb;
        }
    }
    mean.iter()
        .zip(std)
        .enumerate()
        .filter(|(_, (m, d))| *m + 2.0 * s_next * *d >= y_dot)
        .map(|(i, _)| i)
        .collect()
}

/// `K = I + σ⁻² k(p_i, p_j)` over `points`, with `k` the posterior
/// covariance of `posterior`, evaluated lazily.
pub struct PosteriorDppKernel<'a> {
    posterior: &'a GridPosterior,
    points: &'a [usize],
    inv_noise: f64,
    features: Vec<f64>,
    rank: usize,
}

impl<'a> PosteriorDppKernel<'a> {
    pub fn new(posterior: &'a GridPosterior, points: &'a [usize], noise_variance: f64) -> Self {
        let rank = posterior.num_observations();
        let mut features = Vec::with_capacity(points.len() * rank);
        for &p in points {
            features.extend(posterior.projection(p));
        }
        PosteriorDppKernel {
            posterior,
            points,
            inv_noise: 1.0 / noise_variance,
            features,
            rank,
        }
    }

    pub fn labels(&self) -> &[usize] {
        self.points
    }

    fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.rank..(i + 1) * self.rank]
    }

    pub fn to_dense(&self) -> DppKernel {
        let m = self.points.len();
        let mut matrix = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.entry(i, j);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        DppKernel::from_trusted(matrix, self.points.to_vec())
    }
}

impl KernelView for PosteriorDppKernel<'_> {
    fn size(&self) -> usize {
        self.points.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag(i);
        }
        let grid = self.posterior.grid();
        let prior = self
            .posterior
            .params()
            .eval_unchecked(grid.point(self.points[i]), grid.point(self.points[j]));
        self.inv_noise * (prior - linalg::dot(self.feature(i), self.feature(j)))
    }

    fn diag(&self, i: usize) -> f64 {
        1.0 + self.inv_noise * self.posterior.variance(self.points[i])
    }
}

/// Dense `K_{t,1}` over `region` for a posterior that already includes the
/// hallucinated first point.
pub fn build_dpp_kernel(
    state_after_first: &GridPosterior,
    region: &[usize],
    noise_variance: f64,
) -> DppKernel {
    PosteriorDppKernel::new(state_after_first, region, noise_variance).to_dense()
}

/// DPP-family batch for outer iteration `iteration`.
pub fn select_batch_dpp<R: Rng + ?Sized>(
    posterior: &GridPosterior,
    cfg: &StrategyConfig,
    rule: Rule,
    mode: DppMode,
    iteration: usize,
    rng: &mut R,
) -> Result<BatchDecision> {
    let mean = posterior.means()?;
    select_batch_dpp_with_mean(
        posterior,
        mean,
        cfg,
        rule,
        mode,
        iteration,
        &UcbMaxEstimator,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn select_batch_dpp_with_mean<R: Rng + ?Sized>(
    posterior: &GridPosterior,
    mean: &[f64],
    cfg: &StrategyConfig,
    rule: Rule,
    mode: DppMode,
    iteration: usize,
    estimator: &dyn MaxEstimator,
    rng: &mut R,
) -> Result<BatchDecision> {
    cfg.validate()?;
    let std = posterior.stds();
    let p = ConfidenceParams::new(cfg.delta, posterior.grid().len(), iteration)?;
    let beta = match rule {
        Rule::Ucb => beta_ucb(&p),
        Rule::Est => beta_est(
            mean,
            &std,
            estimator.estimate(mean, &std, &p, posterior.params().signal_std()),
        )?,
    };
    let first = argmax_ucb(mean, &std, beta.max(0.0).sqrt());
    let beta_next = match rule {
        Rule::Ucb => beta_ucb(&p.at(iteration + 1)),
        Rule::Est => beta,
    };
    let region = relevance_region(mean, &std, beta, beta_next);
    let after_first = posterior.hallucinate(first)?;

    let k = cfg.batch_size - 1;
    let candidates: Vec<usize> = region.iter().copied().filter(|&i| i != first).collect();
    let mut kernel = None;
    let mut used_fallback = false;
    let rest: Vec<usize> = if k == 0 {
        Vec::new()
    } else if candidates.len() >= k {
        let lazy = PosteriorDppKernel::new(&after_first, &candidates, cfg.noise_variance);
        let dense = match cfg.sampler.kind {
            SamplerKind::Exact => true,
            _ => candidates.len() <= cfg.sampler.exact_threshold,
        };
        if dense {
            kernel = Some(lazy.to_dense());
        }
        let view: &dyn KernelView = match &kernel {
            Some(d) => d,
            None => &lazy,
        };
        let positions = match mode {
            DppMode::Max => dpp::greedy_max_sequence(view, k),
            DppMode::Sample => sample_positions(view, kernel.as_ref(), k, &cfg.sampler, rng)
                .unwrap_or_else(|_| dpp::greedy_max_sequence(view, k)),
        };
        positions.into_iter().map(|i| candidates[i]).collect()
    } else {
        used_fallback = true;
        let (mut picks, state) = variance_greedy(&after_first, &candidates, candidates.len())?;
        let all: Vec<usize> = (0..posterior.grid().len()).collect();
        let mut chosen = vec![false; all.len()];
        chosen[first] = true;
        picks.iter().for_each(|&i| chosen[i] = true);
        let free: Vec<usize> = all.iter().copied().filter(|&i| !chosen[i]).collect();
        let pool = if free.len() >= k - picks.len() { free } else { all };
        let (more, _) = variance_greedy(&state, &pool, k - picks.len())?;
        picks.extend(more);
        picks
    };

    let mut indices = Vec::with_capacity(cfg.batch_size);
    indices.push(first);
    indices.extend(rest);
    let conditional_std = conditional_deviations(posterior, &indices)?;
    Ok(BatchDecision {
        indices,
        region: Some(region),
        beta,
        schedule_betas: vec![beta],
        kernel,
        conditional_std,
        used_fallback,
    })
}

fn sample_positions<R: Rng + ?Sized>(
    view: &dyn KernelView,
    dense: Option<&DppKernel>,
    k: usize,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let sample = match (sampler.kind, dense) {
        (SamplerKind::Mcmc, _) | (_, None) => {
            let steps = sampler
                .mcmc_steps
                .unwrap_or_else(|| dpp::default_mcmc_steps(view.size(), k));
            dpp::kdpp_sample_mcmc(view, k, steps, rng)?
        }
        (_, Some(d)) => dpp::kdpp_sample_exact(d, k, rng)?,
    };
    Ok(sample.into_inner())
}

/// Deviation of each point given the points before it in `indices`.
pub fn conditional_deviations(posterior: &GridPosterior, indices: &[usize]) -> Result<Vec<f64>> {
    let mut state = posterior.clone();
    let mut out = Vec::with_capacity(indices.len());
    for (n, &i) in indices.iter().enumerate() {
        out.push(state.variance(i).sqrt());
        if n + 1 < indices.len() {
            state = state.hallucinate(i)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{DomainGrid, KernelParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, spacing: f64) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new((0..n).map(|i| vec![i as f64 * spacing]).collect()).unwrap())
    }

    fn prior(grid: Arc<DomainGrid>) -> GridPosterior {
        GridPosterior::new(grid, KernelParams::new(1.0, vec![1.0]).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn fb_map_examples() {
        assert_eq!(fb_map(7, 5), 5);
        assert_eq!(fb_map(1, 3), 0);
        assert_eq!(fb_map(10, 5), 5);
        assert_eq!(fb_map(11, 5), 10);
        for t in [1, 6, 11] {
            assert_eq!(fb_map(t + 5, 5), fb_map(t, 5) + 5);
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("lp-ucb".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = StrategyConfig::new(Algorithm::Bucb, 2, 0.1);
        assert!(cfg.validate().is_ok());
        cfg.regret_multiplier = 0.5;
        assert!(cfg.validate().is_err());
        cfg.regret_multiplier = 1.0;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bucb_single_point_matches_scaled_ucb() {
        let grid = line(6, 0.7);
        let post = prior(Arc::clone(&grid)).observe(2, 1.0).unwrap();
        let mut cfg = StrategyConfig::new(Algorithm::Bucb, 1, 0.1);
        cfg.regret_multiplier = 1.7;
        let d = select_batch_bucb(&post, &cfg, Rule::Ucb, 3).unwrap();
        let p = ConfidenceParams::new(0.1, 6, 3).unwrap();
        let sqrt_beta = 1.7 * beta_ucb(&p).sqrt();
        let expected = argmax_ucb(post.means().unwrap(), &post.stds(), sqrt_beta);
        assert_eq!(d.indices, vec![expected]);
        assert!((d.beta - sqrt_beta * sqrt_beta).abs() < 1e-12);
    }

    #[test]
    fn bucb_two_point_symmetric_domain() {
        let grid = line(2, 3.0);
        let cfg = StrategyConfig::new(Algorithm::Bucb, 2, 0.1);
        let d = select_batch_bucb(&prior(grid), &cfg, Rule::Ucb, 1).unwrap();
        assert_eq!(d.indices, vec![0, 1]);
    }

    #[test]
    fn two_stage_init_spreads_points() {
        let grid = line(3, 1.0);
        let mut cfg = StrategyConfig::new(Algorithm::Bucb, 2, 0.1);
        let post = prior(grid);
        let (same, obs) = two_stage_init(&post, &cfg, |_| 0.0).unwrap();
        assert!(obs.is_empty());
        assert_eq!(same.num_observations(), 0);
        cfg.init_budget = 2;
        let (updated, obs) = two_stage_init(&post, &cfg, |i| i as f64).unwrap();
        let picks: Vec<usize> = obs.iter().map(|o| o.0).collect();
        assert_eq!(picks, vec![0, 2]);
        assert_eq!(updated.num_observations(), 2);
        let (_, obs2) = two_stage_init(&post, &cfg, |i| -(i as f64) * 10.0).unwrap();
        assert_eq!(obs2.iter().map(|o| o.0).collect::<Vec<_>>(), picks);
    }

    #[test]
    fn relevance_region_examples() {
        let beta: f64 = 4.0;
        let r = relevance_region(&[0.0; 4], &[1.0; 4], beta, 5.0);
        assert_eq!(r, vec![0, 1, 2, 3]);
        let r = relevance_region(&[0.0, 2.0, 2.0, 1.0], &[0.0; 4], beta, beta);
        assert_eq!(r, vec![1, 2]);
        // point 1 touches y• = 1 - 2·0 = 1 exactly: 0 + 2·1·0.5 = 1
        let r = relevance_region(&[1.0, 0.0], &[0.0, 0.5], 1.0, 1.0);
        assert_eq!(r, vec![0, 1]);
    }

    #[test]
    fn dpp_kernel_first_point_diagonal() {
        let grid = line(3, 5.0);
        let post = GridPosterior::new(grid, KernelParams::new(1.0, vec![1.0]).unwrap(), 1.0)
            .unwrap()
            .hallucinate(0)
            .unwrap();
        let k = build_dpp_kernel(&post, &[0], 1.0);
        assert!((k.matrix()[(0, 0)] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dpp_kernel_on_determined_region_is_identity() {
        let grid = line(2, 100.0);
        let mut post =
            GridPosterior::new(grid, KernelParams::new(1.0, vec![1.0]).unwrap(), 1e-8).unwrap();
        for _ in 0..3 {
            post = post.hallucinate(0).unwrap().hallucinate(1).unwrap();
        }
        let k = build_dpp_kernel(&post, &[0, 1], 1.0);
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((k.matrix()[(i, j)] - expected).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn forced_second_pick() {
        // a determined state where only one other point stays relevant
        let grid = line(5, 2.0);
        let mut post = prior(Arc::clone(&grid));
        for (i, y) in [(0, -5.0), (1, -5.0), (2, 3.0), (3, 3.0), (4, -5.0)] {
            for _ in 0..30 {
                post = post.observe(i, y).unwrap();
            }
        }
        let mean = post.means().unwrap();
        assert!(mean[2] > 2.9 && mean[3] > 2.9);
        for mode in [DppMode::Max, DppMode::Sample] {
            let cfg = StrategyConfig::new(Algorithm::UcbDppMax, 2, 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let d = select_batch_dpp(&post, &cfg, Rule::Ucb, mode, 4, &mut rng).unwrap();
            assert_eq!(d.region.as_deref(), Some(&[2, 3][..]));
            let mut got = d.indices.clone();
            got.sort();
            assert_eq!(got, vec![2, 3]);
            assert!(!d.used_fallback);
        }
    }

    #[test]
    fn tiny_region_falls_back_to_global_variance() {
        let grid = line(5, 2.0);
        let mut post = prior(Arc::clone(&grid));
        for (i, y) in [(0, -5.0), (1, -5.0), (2, 3.0), (3, 3.0), (4, -5.0)] {
            for _ in 0..30 {
                post = post.observe(i, y).unwrap();
            }
        }
        let cfg = StrategyConfig::new(Algorithm::UcbDppMax, 4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = select_batch_dpp(&post, &cfg, Rule::Ucb, DppMode::Max, 4, &mut rng).unwrap();
        assert!(d.used_fallback);
        let mut got = d.indices.clone();
        got.sort();
        got.dedup();
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn dpp_batch_points_are_distinct_and_in_region() {
        let grid = line(40, 0.3);
        let post = prior(Arc::clone(&grid)).observe(10, 1.0).unwrap().observe(30, -1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for alg in [
            Algorithm::UcbDppMax,
            Algorithm::EstDppMax,
            Algorithm::UcbDppSample,
            Algorithm::EstDppSample,
        ] {
            let cfg = StrategyConfig::new(alg, 5, 0.1);
            let sel = BatchSelector::new(cfg).unwrap();
            let d = sel.select(&post, 2, &mut rng).unwrap();
            assert_eq!(d.indices.len(), 5);
            let mut u = d.indices.clone();
            u.sort();
            u.dedup();
            assert_eq!(u.len(), 5);
            let region = d.region.as_ref().unwrap();
            assert!(d.indices[1..].iter().all(|i| region.binary_search(i).is_ok()));
        }
    }
}
