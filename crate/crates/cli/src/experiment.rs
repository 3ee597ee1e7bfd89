//! Multi-seed sweeps over strategies and batch sizes.

use std::sync::Arc;

use dppbo_core::runner::{derive_seed, run_optimization, shared_first_point, RunConfig};
use dppbo_core::{Algorithm, Objective, RegretTrace, StrategyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;

/// One `(strategy, B, seed)` replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub strategy: Algorithm,
    pub batch_size: usize,
    pub seed: u64,
}

impl Cell {
    /// Seed of the noise and sampling stream of this cell. It depends only
    /// on the root seed and the cell's own coordinates.
    pub fn stream_seed(&self, root: u64) -> u64 {
        derive_seed(
            root,
            &[self.strategy as u64, self.batch_size as u64, self.seed],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub objective: String,
    pub strategy: String,
    pub batch_size: usize,
    pub seed: u64,
    pub iteration: usize,
    pub immediate_regret: f64,
    pub cumulative_regret: f64,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianRow {
    pub objective: String,
    pub strategy: String,
    pub batch_size: usize,
    pub iteration: usize,
    pub seeds: usize,
    pub immediate_regret: f64,
    pub cumulative_regret: f64,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub cell: Cell,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// A finished cell with everything the reports need.
#[derive(Clone, Debug)]
pub struct CellRun {
    pub cell: Cell,
    pub trace: RegretTrace,
    pub wall_time_ms: Vec<f64>,
}

pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub objective: Arc<Objective>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> dppbo_core::Result<Self> {
        let objective = Arc::new(Objective::new(cfg.objective.clone())?);
        Ok(Experiment { cfg, objective })
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &strategy in &self.cfg.strategies {
            for &batch_size in &self.cfg.batch_sizes {
                for seed in 0..self.cfg.seeds as u64 {
                    cells.push(Cell {
                        strategy,
                        batch_size,
                        seed,
                    });
                }
            }
        }
        cells
    }

    pub fn noise_variance(&self) -> f64 {
        self.cfg.gp_noise_variance(self.objective.noise_std())
    }

    pub fn run_config(&self, cell: &Cell) -> RunConfig {
        let mut strategy = StrategyConfig::new(cell.strategy, cell.batch_size, self.noise_variance());
        strategy.delta = self.cfg.delta;
        strategy.regret_multiplier = self.cfg.regret_multiplier;
        strategy.init_budget = self.cfg.init_budget;
        strategy.sampler = self.cfg.sampler.clone();
        RunConfig {
            strategy,
            kernel: self.cfg.kernel_params(),
            iterations: self.cfg.iterations,
            prior_mean: self.cfg.prior_mean,
            recommendation: self.cfg.recommendation,
            entropies: self.cfg.entropies,
        }
    }

    pub fn run_cell(&self, cell: &Cell) -> dppbo_core::Result<CellRun> {
        let first = shared_first_point(self.objective.grid().len(), self.cfg.base_seed, cell.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cell.stream_seed(self.cfg.base_seed));
        let out = run_optimization(&self.objective, &self.run_config(cell), cell.seed, first, &mut rng)?;
        Ok(CellRun {
            cell: *cell,
            trace: out.trace,
            wall_time_ms: out.wall_time_ms,
        })
    }

    /// Runs every cell on `workers` threads. Results come back sorted by
    /// cell, whatever order they finished in; failed cells are listed
    /// separately.
    pub fn run_cells(&self, workers: usize) -> (Vec<CellRun>, Vec<CellFailure>) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        let cells = self.cells();
        let results: Vec<(Cell, dppbo_core::Result<CellRun>)> = pool.install(|| {
            cells
                .par_iter()
                .map(|c| {
                    let r = self.run_cell(c);
                    match &r {
                        Ok(_) => log::debug!("finished {} B={} seed={}", c.strategy, c.batch_size, c.seed),
                        Err(e) => log::warn!("{} B={} seed={} failed: {e}", c.strategy, c.batch_size, c.seed),
                    }
                    (*c, r)
                })
                .collect()
        });
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (cell, r) in results {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => failures.push(CellFailure {
                    cell,
                    message: e.to_string(),
                }),
            }
        }
        runs.sort_by_key(|r| r.cell);
        failures.sort_by_key(|f| f.cell);
        (runs, failures)
    }

    pub fn table(&self, runs: &[CellRun], failures: Vec<CellFailure>) -> ResultTable {
        let objective = self.objective.function().name().to_string();
        let mut rows = Vec::new();
        for run in runs {
            for (rec, ms) in run.trace.records().iter().zip(&run.wall_time_ms) {
                rows.push(ResultRow {
                    objective: objective.clone(),
                    strategy: run.cell.strategy.name().to_string(),
                    batch_size: run.cell.batch_size,
                    seed: run.cell.seed,
                    iteration: rec.iteration,
                    immediate_regret: rec.immediate_regret,
                    cumulative_regret: rec.cumulative_regret,
                    wall_time_ms: *ms,
                });
            }
        }
        sort_rows(&mut rows);
        ResultTable { rows, failures }
    }
}

/// Runs the whole sweep described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> dppbo_core::Result<ResultTable> {
    let exp = Experiment::new(cfg.clone())?;
    let (runs, failures) = exp.run_cells(workers);
    Ok(exp.table(&runs, failures))
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.objective, &a.strategy, a.batch_size, a.seed, a.iteration).cmp(&(
            &b.objective,
            &b.strategy,
            b.batch_size,
            b.seed,
            b.iteration,
        ))
    });
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-iteration medians over all seeds present for each
/// `(objective, strategy, B)`.
pub fn medians(rows: &[ResultRow]) -> Vec<MedianRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(&str, &str, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.objective, &r.strategy, r.batch_size, r.iteration))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((objective, strategy, batch_size, iteration), g)| {
            let col = |f: fn(&ResultRow) -> f64| median(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            MedianRow {
                objective: objective.to_string(),
                strategy: strategy.to_string(),
                batch_size,
                iteration,
                seeds: g.len(),
                immediate_regret: col(|r| r.immediate_regret),
                cumulative_regret: col(|r| r.cumulative_regret),
                wall_time_ms: col(|r| r.wall_time_ms),
            }
        })
        .collect()
}
