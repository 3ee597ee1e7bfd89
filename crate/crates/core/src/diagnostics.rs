//! Regret accounting, information gain and regret-bound monitors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::acquisition::{beta_ucb, zeta, ConfidenceParams, UnionBound};
use crate::dpp::{self, DppKernel};
use crate::error::{Error, Result};
use crate::gp::{DomainGrid, GridPosterior, KernelParams};
use crate::strategy::{Algorithm, BatchDecision, DppMode};
use crate::Rule;

/// Entropies are computed only when the k-DPP has at most this many subsets.
pub const ENTROPY_SUBSET_CAP: usize = 50_000;

fn check_psd(k: &DMatrix<f64>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    let scale = k.amax().max(1.0);
    if (k - k.transpose()).amax() > 1e-10 * scale {
        return Err(Error::invalid("kernel", "matrix is not symmetric"));
    }
    let low = SymmetricEigen::new(k.clone()).eigenvalues.min();
    if k.nrows() > 0 && low < -1e-8 * scale {
        return Err(Error::invalid(
            "kernel",
            format!("matrix is not positive semi-definite (eigenvalue {low:e})"),
        ));
    }
    Ok(())
}

/// `½ ln det(I + σ⁻² K_A)` through a Cholesky factor.
pub fn information_gain(k_a: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("noise_variance", "must be positive"));
    }
    check_psd(k_a)?;
    let n = k_a.nrows();
    let mut a = k_a / noise_variance;
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("I + K/σ² is not positive definite".into()))?;
    Ok(chol.l().diagonal().iter().map(|d| d.ln()).sum())
}

/// `½ Σ ln(1 + σ⁻² λ_i)` over the eigenvalues of `K_A`.
pub fn information_gain_spectral(k_a: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    check_psd(k_a)?;
    let eig = SymmetricEigen::new(k_a.clone()).eigenvalues;
    Ok(0.5
        * eig
            .iter()
            .map(|l| (1.0 + l.max(0.0) / noise_variance).ln())
            .sum::<f64>())
}

/// Greedy information gain after each of the first `t` picks: entry `n - 1`
/// is the gain of the greedy `n`-set, a lower bound on `γ_n` within a factor
/// `1 - 1/e`.
pub fn greedy_gamma_curve(
    grid: &std::sync::Arc<DomainGrid>,
    params: &KernelParams,
    noise_variance: f64,
    t: usize,
) -> Result<Vec<f64>> {
    if t > grid.len() {
        return Err(Error::invalid(
            "t",
            format!("{t} exceeds the domain size {}", grid.len()),
        ));
    }
    let mut state = GridPosterior::new(std::sync::Arc::clone(grid), params.clone(), noise_variance)?;
    let mut taken = vec![false; grid.len()];
    let mut curve = Vec::with_capacity(t);
    let mut total = 0.0;
    for _ in 0..t {
        let mut best = usize::MAX;
        let mut best_var = f64::NEG_INFINITY;
        for (i, &done) in taken.iter().enumerate() {
            if !done && state.variance(i) > best_var {
                best_var = state.variance(i);
                best = i;
            }
        }
        taken[best] = true;
        total += 0.5 * (1.0 + best_var / noise_variance).ln();
        curve.push(total);
        state = state.hallucinate(best)?;
    }
    Ok(curve)
}

pub fn greedy_gamma(
    grid: &std::sync::Arc<DomainGrid>,
    params: &KernelParams,
    noise_variance: f64,
    t: usize,
) -> Result<f64> {
    Ok(greedy_gamma_curve(grid, params, noise_variance, t)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// Prior Gram matrix of `grid` under `params`.
pub fn gram_matrix(grid: &DomainGrid, params: &KernelParams) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| params.eval_unchecked(grid.point(i), grid.point(j)))
}

/// Gram eigenvalues in decreasing order.
pub fn gram_spectrum(grid: &DomainGrid, params: &KernelParams) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(gram_matrix(grid, params))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// Entropy of the `k`-DPP on `kernel` when it is small enough to enumerate.
pub fn batch_entropy(kernel: &DppKernel, k: usize) -> Option<f64> {
    let m = kernel.matrix().nrows();
    if m > dpp::ENUMERATION_CAP || k > m || binomial(m, k) > ENTROPY_SUBSET_CAP as f64 {
        return None;
    }
    dpp::kdpp_entropy(kernel, k).ok()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// How the recommendation `x̃_t` is chosen among queried points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommendationRule {
    /// Queried point with the highest posterior mean.
    #[default]
    PosteriorMean,
    /// Queried point with the highest noisy observation.
    BestObserved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub indices: Vec<usize>,
    pub simple_regrets: Vec<f64>,
    pub cumulative_regret: f64,
    pub recommendation: usize,
    pub immediate_regret: f64,
    /// `β` of the first pick.
    pub beta: f64,
    pub schedule_betas: Vec<f64>,
    /// `σ_{t-1,b}(x_{t,b})` for each pick.
    pub conditional_std: Vec<f64>,
    /// Entropy of the `(B-1)`-DPP when it was computed.
    pub entropy: Option<f64>,
    pub used_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub batch_size: usize,
    pub rule: RecommendationRule,
    optimum: f64,
    queried: Vec<usize>,
    observed: Vec<f64>,
    records: Vec<IterationRecord>,
}

impl RegretTrace {
    /// Empty trace measuring regret against the grid maximum `optimum`.
    pub fn new(
        algorithm: Algorithm,
        seed: u64,
        batch_size: usize,
        optimum: f64,
        rule: RecommendationRule,
    ) -> Self {
        RegretTrace {
            algorithm,
            seed,
            batch_size,
            rule,
            optimum,
            queried: Vec::new(),
            observed: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    /// Every queried index in order, history first.
    pub fn queried(&self) -> &[usize] {
        &self.queried
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_regret)
    }

    pub fn final_immediate_regret(&self) -> Option<f64> {
        self.records.last().map(|r| r.immediate_regret)
    }

    /// Adds queries that precede the batch loop (the shared first point and
    /// any warm-up batch). They take part in recommendations but not in the
    /// cumulative regret.
    pub fn add_history(&mut self, indices: &[usize], observed: &[f64]) {
        assert_eq!(indices.len(), observed.len());
        self.queried.extend_from_slice(indices);
        self.observed.extend_from_slice(observed);
    }

    /// Appends one evaluated batch.
    ///
    /// `true_values` are the noiseless values at `decision.indices`,
    /// `observed` the noisy ones, `value_of` gives the noiseless value of any
    /// grid index, and `mean` is the posterior mean over the grid after the
    /// batch was observed.
    pub fn record(
        &mut self,
        decision: &BatchDecision,
        true_values: &[f64],
        observed: &[f64],
        mean: &[f64],
        value_of: impl Fn(usize) -> f64,
        entropy: Option<f64>,
    ) -> &IterationRecord {
        assert_eq!(decision.indices.len(), true_values.len());
        assert_eq!(decision.indices.len(), observed.len());
        let simple_regrets: Vec<f64> = true_values
            .iter()
            .map(|v| (self.optimum - v).max(0.0))
            .collect();
        let cumulative_regret = self.cumulative_regret() + simple_regrets.iter().sum::<f64>();
        self.queried.extend_from_slice(&decision.indices);
        self.observed.extend_from_slice(observed);

        let score = |pos: usize| match self.rule {
            RecommendationRule::PosteriorMean => mean[self.queried[pos]],
            RecommendationRule::BestObserved => self.observed[pos],
        };
        let mut best = 0;
        for pos in 1..self.queried.len() {
            if score(pos) > score(best) {
                best = pos;
            }
        }
        let recommendation = self.queried[best];
        let immediate_regret = (self.optimum - value_of(recommendation)).abs();
        self.records.push(IterationRecord {
            iteration: self.records.len() + 1,
            indices: decision.indices.clone(),
            simple_regrets,
            cumulative_regret,
            recommendation,
            immediate_regret,
            beta: decision.beta,
            schedule_betas: decision.schedule_betas.clone(),
            conditional_std: decision.conditional_std.clone(),
            entropy,
            used_fallback: decision.used_fallback,
        });
        self.records.last().unwrap()
    }
}

/// Run-level inputs of the bound formulas.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundConfig {
    pub delta: f64,
    pub noise_variance: f64,
    pub domain_size: usize,
    pub regret_multiplier: f64,
    pub init_budget: usize,
    /// `‖f‖_∞` over the grid.
    pub sup_norm: f64,
}

/// `C = 2 / ln(1 + σ⁻²)`.
pub fn constant_c(noise_variance: f64) -> f64 {
    2.0 / (1.0 + 1.0 / noise_variance).ln()
}

/// `C₁ = 36 / ln(1 + σ⁻²)`.
pub fn constant_c1(noise_variance: f64) -> f64 {
    36.0 / (1.0 + 1.0 / noise_variance).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub iteration: usize,
    pub evaluations: usize,
    pub realized_regret: f64,
    pub gamma: f64,
    /// Right-hand side of the regret bound on `R`; `NaN` when the
    /// squared form came out negative.
    pub rhs: f64,
    /// The squared right-hand side for the sampling bound, reported raw.
    pub rhs_squared: Option<f64>,
    pub within_bound: bool,
    pub negative_rhs: bool,
    pub entropy_sum: f64,
    /// Some entropy in the sum could not be computed and was left out, which
    /// only loosens the bound.
    pub entropies_partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub seed: u64,
    pub c: f64,
    pub c1: f64,
    pub rows: Vec<BoundRow>,
    /// Pairs `(t, b)` where `σ_{t,1}(x_{t+1,1}) > σ_{t-1,b}(x_{t,b})`.
    pub next_first_violations: usize,
    pub next_first_checks: usize,
    /// Iterations `T` where `Σ σ_{t-1,1}(x_{t,1}) > (1/B) Σ Σ σ_{t-1,b}(x_{t,b})`.
    pub telescoping_violations: usize,
}

/// Evaluates the applicable regret bound at every iteration of `trace`.
/// `gamma_curve[n - 1]` must estimate `γ_n` for `n` up to the number of
/// evaluations in the trace.
pub fn bound_report(trace: &RegretTrace, gamma_curve: &[f64], cfg: &BoundConfig) -> Result<BoundReport> {
    let b = trace.batch_size;
    let c = constant_c(cfg.noise_variance);
    let c1 = constant_c1(cfg.noise_variance);
    let base = ConfidenceParams::new(cfg.delta, cfg.domain_size, 1)?;
    let rule = trace.algorithm.rule();
    let mut rows = Vec::with_capacity(trace.records.len());
    let mut beta_star: f64 = 0.0;
    let mut entropy_sum = 0.0;
    let mut partial = false;
    for rec in &trace.records {
        let t = rec.iteration;
        let n = t * b;
        let gamma = *gamma_curve.get(n - 1).ok_or_else(|| {
            Error::invalid("gamma_curve", format!("no estimate for {n} evaluations"))
        })?;
        beta_star = rec.schedule_betas.iter().copied().fold(beta_star, f64::max);
        match rec.entropy {
            Some(h) => entropy_sum += h,
            None if b > 1 && trace.algorithm.dpp_mode() == Some(DppMode::Sample) => partial = true,
            None => {}
        }
        let (rhs, rhs_squared) = match trace.algorithm.dpp_mode() {
            None => {
                // sequential bound over all n evaluations, inflated by C'
                let seq = match rule {
                    Rule::Ucb => (c * n as f64 * beta_ucb(&base.at(n)) * gamma).sqrt(),
                    Rule::Est => {
                        (c * n as f64 * gamma).sqrt()
                            * (beta_star.sqrt() + zeta(n, cfg.delta, UnionBound::Sequential).sqrt())
                    }
                };
                let burn_in = 2.0 * cfg.sup_norm * cfg.init_budget as f64;
                (cfg.regret_multiplier * seq + burn_in, None)
            }
            Some(DppMode::Max) => {
                let rhs = match rule {
                    Rule::Ucb => (c1 * n as f64 * beta_ucb(&base.at(t)) * gamma).sqrt(),
                    Rule::Est => {
                        (c1 * n as f64 * gamma).sqrt()
                            * (beta_star.sqrt() + zeta(t, cfg.delta, UnionBound::Batched).sqrt())
                    }
                };
                (rhs, None)
            }
            Some(DppMode::Sample) => {
                let scale = match rule {
                    Rule::Ucb => beta_ucb(&base.at(t)),
                    Rule::Est => {
                        (beta_star.sqrt() + zeta(t, cfg.delta, UnionBound::Batched).sqrt()).powi(2)
                    }
                };
                let bracket = gamma - entropy_sum + b as f64 * (cfg.domain_size as f64).ln();
                let sq = 2.0 * n as f64 * c1 * scale * bracket;
                (if sq >= 0.0 { sq.sqrt() } else { f64::NAN }, Some(sq))
            }
        };
        let negative_rhs = rhs_squared.is_some_and(|s| s < 0.0);
        rows.push(BoundRow {
            iteration: t,
            evaluations: n,
            realized_regret: rec.cumulative_regret,
            gamma,
            rhs,
            rhs_squared,
            within_bound: !negative_rhs && rec.cumulative_regret <= rhs,
            negative_rhs,
            entropy_sum,
            entropies_partial: partial,
        });
    }

    let (next_first_violations, next_first_checks) = next_first_monitor(&trace.records);
    let telescoping_violations = telescoping_monitor(&trace.records, b);
    Ok(BoundReport {
        algorithm: trace.algorithm,
        batch_size: b,
        seed: trace.seed,
        c,
        c1,
        rows,
        next_first_violations,
        next_first_checks,
        telescoping_violations,
    })
}

/// Violations of `σ_{t,1}(x_{t+1,1}) ≤ σ_{t-1,b}(x_{t,b})` for `b ≥ 2`.
pub fn next_first_monitor(records: &[IterationRecord]) -> (usize, usize) {
    let mut violations = 0;
    let mut checks = 0;
    for pair in records.windows(2) {
        let next_first = pair[1].conditional_std[0];
        for &s in pair[0].conditional_std.iter().skip(1) {
            checks += 1;
            if next_first > s + 1e-12 {
                violations += 1;
            }
        }
    }
    (violations, checks)
}

/// Prefix lengths `T` where the first-point deviations exceed the average
/// batch deviation sum.
pub fn telescoping_monitor(records: &[IterationRecord], batch_size: usize) -> usize {
    let mut first = 0.0;
    let mut all = 0.0;
    let mut violations = 0;
    for rec in records {
        first += rec.conditional_std[0];
        all += rec.conditional_std.iter().sum::<f64>();
        if first > all / batch_size as f64 + 1e-12 {
            violations += 1;
        }
    }
    violations
}
