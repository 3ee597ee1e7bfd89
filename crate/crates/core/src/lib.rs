//! Batch Bayesian optimization on discrete domains.
//!
//! A Gaussian-process posterior over a fixed candidate grid drives six batch
//! strategies: BUCB and B-EST, which hallucinate observations between picks,
//! and four determinantal-point-process variants that pick the first point
//! by UCB or EST and fill the rest of the batch from a k-DPP over the
//! relevance region, either greedily (MAX) or by sampling (SAMPLE).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod diagnostics;
pub mod dpp;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod objectives;
pub mod oracle;
pub mod runner;
pub mod strategy;

pub use acquisition::{ConfidenceParams, MaxEstimator, Rule, UcbMaxEstimator, UnionBound};
pub use diagnostics::{BoundReport, IterationRecord, RecommendationRule, RegretTrace};
pub use dpp::{DppKernel, KernelView, SubsetSample};
pub use error::{Error, Result};
pub use gp::{DomainGrid, GridPosterior, KernelParams, PosteriorState};
pub use objectives::{FunctionId, Objective, ObjectiveSpec};
pub use runner::{run_optimization, PriorMean, RunConfig, RunOutcome};
pub use strategy::{
    Algorithm, BatchDecision, BatchSelector, DppMode, SamplerConfig, SamplerKind, StrategyConfig,
};
