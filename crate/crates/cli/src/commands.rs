//! The work behind each CLI verb, callable without a process boundary.

use std::path::{Path, PathBuf};

use dppbo_core::acquisition::{beta_ucb, zeta, ConfidenceParams, UnionBound};
use dppbo_core::diagnostics::{
    bound_report, constant_c, constant_c1, gram_spectrum, greedy_gamma_curve, information_gain,
    BoundConfig,
};
use dppbo_core::dpp::{kdpp_prob, DppKernel, SubsetSample};
use dppbo_core::objectives::{cosines, make_grid};
use dppbo_core::oracle::continuous_maximum;
use dppbo_core::{DomainGrid, FunctionId, KernelParams, Objective, ObjectiveSpec};
use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::experiment::{Experiment, ResultTable};
use crate::output::{self, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Core(#[from] dppbo_core::Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

/// Files written by a sweep.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub results: PathBuf,
    pub medians: PathBuf,
    pub charts: Vec<PathBuf>,
    pub table: ResultTable,
}

/// Runs the sweep and writes `results.csv`, its median sibling and,
/// when `cfg.plots` is set, one chart per `(objective, B)`.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunArtifacts, CommandError> {
    let exp = Experiment::new(cfg.clone())?;
    log::info!(
        "{}: {} grid points, {} cells",
        exp.objective.function(),
        exp.objective.grid().len(),
        exp.cells().len()
    );
    let (runs, failures) = exp.run_cells(workers);
    let table = exp.table(&runs, failures);
    for f in &table.failures {
        log::error!(
            "cell {} B={} seed={} aborted: {}",
            f.cell.strategy,
            f.cell.batch_size,
            f.cell.seed,
            f.message
        );
    }
    let results = cfg.output_dir.join("results.csv");
    output::emit_csv(&table.rows, &results)?;
    let charts = if cfg.plots {
        output::emit_charts(&table.rows, &cfg.output_dir, cfg.log_scale)?
    } else {
        Vec::new()
    };
    Ok(RunArtifacts {
        medians: output::median_path(&results),
        results,
        charts,
        table,
    })
}

/// Largest grid used for the kernel spectrum report.
const SPECTRUM_POINTS: usize = 400;

/// Runs the sweep and writes `bounds.csv` with the regret-bound monitors of
/// every cell, plus `spectrum.csv` with the decreasing Gram eigenvalues of
/// (an evenly strided subset of) the grid.
pub fn bounds(cfg: &ExperimentConfig, workers: usize) -> Result<PathBuf, CommandError> {
    let exp = Experiment::new(cfg.clone())?;
    let (runs, failures) = exp.run_cells(workers);
    for f in &failures {
        log::error!("cell {} B={} seed={} aborted: {}", f.cell.strategy, f.cell.batch_size, f.cell.seed, f.message);
    }
    let objective = &exp.objective;
    let params = cfg.kernel_params();
    let noise = exp.noise_variance();
    let horizon = cfg.batch_sizes.iter().max().copied().unwrap_or(1) * cfg.iterations;
    let gamma = greedy_gamma_curve(objective.grid(), &params, noise, horizon.min(objective.grid().len()))?;
    let bound_cfg = BoundConfig {
        delta: cfg.delta,
        noise_variance: noise,
        domain_size: objective.grid().len(),
        regret_multiplier: cfg.regret_multiplier,
        init_budget: cfg.init_budget,
        sup_norm: objective.sup_norm(),
    };
    let name = objective.function().name().to_string();
    let mut reports = Vec::new();
    for run in &runs {
        let evaluations = run.trace.records().len() * run.cell.batch_size;
        if evaluations > gamma.len() {
            log::warn!(
                "{} B={} seed={}: {evaluations} evaluations exceed the grid; bounds skipped",
                run.cell.strategy,
                run.cell.batch_size,
                run.cell.seed
            );
            continue;
        }
        reports.push((name.clone(), bound_report(&run.trace, &gamma, &bound_cfg)?));
    }
    let path = cfg.output_dir.join("bounds.csv");
    output::emit_bounds_csv(&reports, &path)?;
    let sub = strided_subgrid(objective.grid(), SPECTRUM_POINTS);
    output::emit_spectrum_csv(&gram_spectrum(&sub, &params), &cfg.output_dir.join("spectrum.csv"))?;
    Ok(path)
}

fn strided_subgrid(grid: &DomainGrid, max_points: usize) -> DomainGrid {
    let stride = grid.len().div_ceil(max_points).max(1);
    DomainGrid::new((0..grid.len()).step_by(stride).map(|i| grid.point(i).to_vec()).collect())
        .expect("subset of a valid grid")
}

/// A reference value recomputed from scratch by `dppbo oracle`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleValue {
    pub name: &'static str,
    pub value: f64,
}

/// Brute-force reference values for the closed forms and benchmark optima
/// the test suite freezes.
pub fn oracle_values() -> Result<Vec<OracleValue>, CommandError> {
    let mut out = Vec::new();
    let mut push = |name, value| out.push(OracleValue { name, value });

    let p = ConfidenceParams::new(0.1, 100, 1)?;
    push("beta_ucb(|X|=100,t=1,delta=0.1)", beta_ucb(&p));
    push("sqrt(beta_ucb(|X|=100,t=1,delta=0.1))", beta_ucb(&p).sqrt());
    push("zeta_batched(t=1,delta=0.1)", zeta(1, 0.1, UnionBound::Batched));
    push("C(sigma2=1)", constant_c(1.0));
    push("C1(sigma2=1)", constant_c1(1.0));
    push(
        "information_gain(I3,sigma2=1)",
        information_gain(&DMatrix::identity(3, 3), 1.0)?,
    );
    let diag = DppKernel::diagonal(&[2.0, 3.0])?;
    push("kdpp_prob(diag(2,3),{1})", kdpp_prob(&diag, &SubsetSample::new(vec![0], 2)?)?);
    let se = KernelParams::isotropic(1.0, 1.0, 1)?;
    push("se_kernel(|x-y|=2,l=1)", se.eval(&[0.0], &[2.0])?);

    let (_, branin_max) = continuous_maximum(FunctionId::Branin, 200_000, 20, 1);
    push("branin_continuous_max", branin_max);
    let branin = Objective::new(ObjectiveSpec::new(FunctionId::Branin))?;
    push("branin_grid_max(50x50)", branin.optimum_value());
    push("branin_grid_range(50x50)", branin.range());
    push("cosines_center", cosines(0.5, 0.5));
    let (_, cos_max) = continuous_maximum(FunctionId::Cosines, 100_000, 20, 2);
    push("cosines_continuous_max", cos_max);
    let (_, h6_max) = continuous_maximum(FunctionId::Hartmann6, 200_000, 40, 3);
    push("hartmann6_continuous_max", h6_max);
    let h6 = ObjectiveSpec::new(FunctionId::Hartmann6);
    push("hartmann6_default_grid_size", make_grid(&h6)?.len() as f64);
    Ok(out)
}

/// Reads, validates and applies the seed override for `path`, then
/// replaces the output directory when `out` is given.
pub fn load_config(path: &Path, out: Option<&Path>) -> Result<ExperimentConfig, crate::config::ConfigError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = out {
        cfg.output_dir = dir.to_path_buf();
    }
    Ok(cfg)
}
