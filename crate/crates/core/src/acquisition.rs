//! Confidence bounds and the exploration schedules that drive them.
//!
//! Everything here works on the posterior mean and standard deviation
//! evaluated over the candidate grid, passed as parallel slices.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deviations at or below this are treated as exactly determined points.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// `m̂` sits this many signal standard deviations above the largest UCB.
pub const MHAT_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceParams {
    delta: f64,
    domain_size: usize,
    t: usize,
}

impl ConfidenceParams {
    pub fn new(delta: f64, domain_size: usize, t: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if domain_size == 0 {
            return Err(Error::invalid("domain_size", "must be at least 1"));
        }
        if t == 0 {
            return Err(Error::invalid("t", "iterations are counted from 1"));
        }
        Ok(ConfidenceParams {
            delta,
            domain_size,
            t,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Same parameters at iteration `t`.
    pub fn at(&self, t: usize) -> Self {
        assert!(t >= 1, "iterations are counted from 1");
        ConfidenceParams { t, ..*self }
    }
}

/// `β_t = 2 ln(|X| t² π² / 6δ)`.
pub fn beta_ucb(p: &ConfidenceParams) -> f64 {
    beta_ucb_raw(p.domain_size as f64, p.t as f64, p.delta)
}

// Unvalidated form, used by the degenerate-argument checks in tests.
pub(crate) fn beta_ucb_raw(domain_size: f64, t: f64, delta: f64) -> f64 {
    2.0 * (domain_size * t * t * PI * PI / (6.0 * delta)).ln()
}

/// Which union bound the EST deviation schedule `ζ_t` is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnionBound {
    /// Sequential EST: `ζ_t = 2 ln(π² t² / δ)`.
    Sequential,
    /// Batched EST, which also covers the pessimistic maximizer:
    /// `ζ_t = 2 ln(π² t² / 3δ)`.
    Batched,
}

pub fn zeta(t: usize, delta: f64, union: UnionBound) -> f64 {
    let t = t as f64;
    let denom = match union {
        UnionBound::Sequential => delta,
        UnionBound::Batched => 3.0 * delta,
    };
    2.0 * (PI * PI * t * t / denom).ln()
}

/// Acquisition rule for the first point of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    Ucb,
    Est,
}

/// Upper and lower confidence surfaces for one `β`.
#[derive(Clone, Debug)]
pub struct AcquisitionScores {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub beta: f64,
}

impl AcquisitionScores {
    pub fn new(mean: &[f64], std: &[f64], beta: f64) -> Self {
        let s = beta.max(0.0).sqrt();
        AcquisitionScores {
            upper: mean.iter().zip(std).map(|(m, d)| m + s * d).collect(),
            lower: mean.iter().zip(std).map(|(m, d)| m - s * d).collect(),
            mean: mean.to_vec(),
            std: std.to_vec(),
            beta,
        }
    }
}

/// Supplies the estimate `m̂` of the function maximum used by EST.
pub trait MaxEstimator: Send + Sync + fmt::Debug {
    fn estimate(&self, mean: &[f64], std: &[f64], p: &ConfidenceParams, signal_std: f64) -> f64;
}

/// `m̂ = max_x [μ(x) + √β_t σ(x)] + 1e-6·γ`, a high-probability upper bound
/// on the maximum that keeps every EST ratio strictly positive.
#[derive(Clone, Copy, Debug, Default)]
pub struct UcbMaxEstimator;

impl MaxEstimator for UcbMaxEstimator {
    fn estimate(&self, mean: &[f64], std: &[f64], p: &ConfidenceParams, signal_std: f64) -> f64 {
        est_mhat(mean, std, p, signal_std)
    }
}

pub fn est_mhat(mean: &[f64], std: &[f64], p: &ConfidenceParams, signal_std: f64) -> f64 {
    assert!(!mean.is_empty(), "empty grid");
    let s = beta_ucb(p).max(0.0).sqrt();
    let top = mean
        .iter()
        .zip(std)
        .map(|(m, d)| m + s * d)
        .fold(f64::NEG_INFINITY, f64::max);
    top + MHAT_GAP * signal_std
}

/// `β = [min_x (m̂ - μ(x)) / σ(x)]²` over points with `σ(x) > 1e-12`.
pub fn beta_est(mean: &[f64], std: &[f64], mhat: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (m, d) in mean.iter().zip(std) {
        if *d <= SIGMA_FLOOR {
            continue;
        }
        let r = (mhat - m) / d;
        if r < best {
            best = r;
        }
    }
    if best == f64::INFINITY {
        return Err(Error::DegeneratePosterior);
    }
    if best < 0.0 {
        return Err(Error::invalid(
            "mhat",
            format!("m̂ = {mhat} lies below the posterior mean of an undetermined point"),
        ));
    }
    Ok(best * best)
}

/// Index maximizing `μ + √β σ`; the lowest index wins ties.
pub fn argmax_ucb(mean: &[f64], std: &[f64], sqrt_beta: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (m, d)) in mean.iter().zip(std).enumerate() {
        let s = m + sqrt_beta * d;
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

/// The `β` a rule uses at the given posterior.
pub fn rule_beta(
    mean: &[f64],
    std: &[f64],
    rule: Rule,
    p: &ConfidenceParams,
    estimator: &dyn MaxEstimator,
    signal_std: f64,
) -> Result<f64> {
    match rule {
        Rule::Ucb => Ok(beta_ucb(p)),
        Rule::Est => beta_est(mean, std, estimator.estimate(mean, std, p, signal_std)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstPoint {
    pub index: usize,
    pub beta: f64,
}

/// UCB-style argmax with `β` from the UCB schedule or, for EST, the adaptive
/// `β` that makes the UCB argmax coincide with the EST choice.
pub fn select_first_point(
    mean: &[f64],
    std: &[f64],
    rule: Rule,
    p: &ConfidenceParams,
    signal_std: f64,
) -> Result<FirstPoint> {
    select_first_point_with(mean, std, rule, p, &UcbMaxEstimator, signal_std)
}

pub fn select_first_point_with(
    mean: &[f64],
    std: &[f64],
    rule: Rule,
    p: &ConfidenceParams,
    estimator: &dyn MaxEstimator,
    signal_std: f64,
) -> Result<FirstPoint> {
    let beta = rule_beta(mean, std, rule, p, estimator, signal_std)?;
    Ok(FirstPoint {
        index: argmax_ucb(mean, std, beta.max(0.0).sqrt()),
        beta,
    })
}
