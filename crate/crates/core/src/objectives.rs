//! Synthetic benchmark objectives on discretized boxes.
//!
//! All functions are oriented for maximization: Branin-Hoo and Hartmann-6
//! are negated from their usual minimization form. The regret reference is
//! the maximum over the grid, found by a full sweep at construction.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::DomainGrid;

pub const DEFAULT_MAX_GRID: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionId {
    Branin,
    Cosines,
    Hartmann6,
}

impl FunctionId {
    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Branin => "branin",
            FunctionId::Cosines => "cosines",
            FunctionId::Hartmann6 => "hartmann6",
        }
    }

    pub fn dim(self) -> usize {
        self.bounds().len()
    }

    /// Canonical input box, one `(low, high)` pair per dimension.
    pub fn bounds(self) -> &'static [(f64, f64)] {
        match self {
            FunctionId::Branin => &[(-5.0, 10.0), (0.0, 15.0)],
            FunctionId::Cosines => &[(0.0, 1.0), (0.0, 1.0)],
            FunctionId::Hartmann6 => &[(0.0, 1.0); 6],
        }
    }

    pub fn default_resolution(self) -> usize {
        match self {
            FunctionId::Branin | FunctionId::Cosines => 50,
            FunctionId::Hartmann6 => 4,
        }
    }

    pub fn default_extra_points(self) -> usize {
        match self {
            FunctionId::Hartmann6 => 2000,
            _ => 0,
        }
    }

    /// Noiseless value in maximization orientation, no bounds check.
    pub fn value(self, x: &[f64]) -> f64 {
        match self {
            FunctionId::Branin => -branin(x[0], x[1]),
            FunctionId::Cosines => cosines(x[0], x[1]),
            FunctionId::Hartmann6 => -hartmann6(x),
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branin" => Ok(FunctionId::Branin),
            "cosines" => Ok(FunctionId::Cosines),
            "hartmann6" => Ok(FunctionId::Hartmann6),
            other => Err(Error::invalid("function", format!("unknown objective `{other}`"))),
        }
    }
}

/// Standard Branin-Hoo (minimum ≈ 0.397887).
pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let q = x2 - b * x1 * x1 + c * x1 - 6.0;
    q * q + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Two-dimensional cosine mixture on `[0, 1]²`, inputs mapped by
/// `u = 1.6 x - 0.5`. Maximum 1.6 at `x = y = 0.3125`.
pub fn cosines(x: f64, y: f64) -> f64 {
    let u = 1.6 * x - 0.5;
    let v = 1.6 * y - 0.5;
    1.0 - (u * u + v * v - 0.3 * (3.0 * PI * u).cos() - 0.3 * (3.0 * PI * v).cos())
}

const H6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const H6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Standard Hartmann-6 on `[0, 1]⁶` (minimum ≈ -3.32237).
pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6).map(|j| H6_A[i][j] * (x[j] - H6_P[i][j]).powi(2)).sum();
            H6_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub function: FunctionId,
    /// Lattice points per dimension; defaults per function.
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Seeded Latin-hypercube points added on top of the lattice.
    #[serde(default)]
    pub extra_points: Option<usize>,
    #[serde(default)]
    pub grid_seed: u64,
    /// Observation noise standard deviation; defaults to 10% of the grid
    /// range of the function.
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default = "default_max_grid")]
    pub max_grid_size: usize,
}

fn default_max_grid() -> usize {
    DEFAULT_MAX_GRID
}

impl ObjectiveSpec {
    pub fn new(function: FunctionId) -> Self {
        ObjectiveSpec {
            function,
            resolution: None,
            extra_points: None,
            grid_seed: 0,
            noise_std: None,
            max_grid_size: DEFAULT_MAX_GRID,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
            .unwrap_or_else(|| self.function.default_resolution())
    }

    pub fn extra_points(&self) -> usize {
        self.extra_points
            .unwrap_or_else(|| self.function.default_extra_points())
    }
}

/// Uniform lattice over a box, first coordinate varying slowest.
pub fn lattice(
    bounds: &[(f64, f64)],
    resolution: usize,
    max_size: usize,
) -> Result<Vec<Vec<f64>>> {
    if resolution < 2 {
        return Err(Error::invalid("resolution", "need at least 2 points per dimension"));
    }
    let size = lattice_size(bounds.len(), resolution, max_size)?;
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            (0..resolution)
                .map(|i| {
                    if i + 1 == resolution {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let d = bounds.len();
    let mut points = Vec::with_capacity(size);
    for flat in 0..size {
        let mut rem = flat;
        let mut p = vec![0.0; d];
        for dim in (0..d).rev() {
            p[dim] = axes[dim][rem % resolution];
            rem /= resolution;
        }
        points.push(p);
    }
    Ok(points)
}

fn lattice_size(dim: usize, resolution: usize, max_size: usize) -> Result<usize> {
    let mut size: usize = 1;
    for _ in 0..dim {
        size = size
            .checked_mul(resolution)
            .filter(|s| *s <= max_size)
            .ok_or(Error::Capacity {
                size: resolution.saturating_pow(dim as u32),
                cap: max_size,
            })?;
    }
    Ok(size)
}

fn latin_hypercube(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = bounds.len();
    let mut points = vec![vec![0.0; d]; n];
    for (dim, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (p, s) in points.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[dim] = lo + (hi - lo) * u;
        }
    }
    points
}

/// The candidate grid for an objective: lattice plus optional Latin-hypercube
/// extras.
pub fn make_grid(spec: &ObjectiveSpec) -> Result<DomainGrid> {
    let bounds = spec.function.bounds();
    let res = spec.resolution();
    let extra = spec.extra_points();
    let lattice_n = lattice_size(bounds.len(), res.max(2), spec.max_grid_size)?;
    if lattice_n + extra > spec.max_grid_size {
        return Err(Error::Capacity {
            size: lattice_n + extra,
            cap: spec.max_grid_size,
        });
    }
    let mut points = lattice(bounds, res, spec.max_grid_size)?;
    if extra > 0 {
        points.extend(latin_hypercube(bounds, extra, spec.grid_seed));
    }
    DomainGrid::new(points)
}

/// A built objective: grid, cached noiseless values and the grid optimum.
#[derive(Clone, Debug)]
pub struct Objective {
    spec: ObjectiveSpec,
    grid: Arc<DomainGrid>,
    values: Vec<f64>,
    argmax: usize,
    min_value: f64,
    noise: Normal<f64>,
    lookup: HashMap<Vec<u64>, usize>,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec) -> Result<Self> {
        let grid = make_grid(&spec)?;
        let values: Vec<f64> = grid.iter().map(|x| spec.function.value(x)).collect();
        let mut argmax = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[argmax] {
                argmax = i;
            }
        }
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let range = values[argmax] - min_value;
        let noise_std = spec.noise_std.unwrap_or(0.1 * range);
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid("noise_std", format!("must be ≥ 0, got {noise_std}")));
        }
        let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid("noise_std", e.to_string()))?;
        let lookup = grid
            .iter()
            .enumerate()
            .map(|(i, p)| (bits(p), i))
            .collect();
        Ok(Objective {
            spec,
            grid: Arc::new(grid),
            values,
            argmax,
            min_value,
            noise,
            lookup,
        })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn function(&self) -> FunctionId {
        self.spec.function
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn noise_std(&self) -> f64 {
        self.noise.std_dev()
    }

    pub fn optimum_value(&self) -> f64 {
        self.values[self.argmax]
    }

    pub fn optimum_index(&self) -> usize {
        self.argmax
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Grid maximum minus grid minimum.
    pub fn range(&self) -> f64 {
        self.optimum_value() - self.min_value
    }

    /// `max |f|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.optimum_value().abs().max(self.min_value.abs())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.lookup.get(&bits(x)).copied()
    }

    pub fn evaluate_noiseless(&self, x: &[f64]) -> Result<f64> {
        let bounds = self.spec.function.bounds();
        if x.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: bounds.len(),
                got: x.len(),
            });
        }
        let inside = x.iter().zip(bounds).all(|(v, &(lo, hi))| {
            let slack = 1e-12 * (hi - lo);
            *v >= lo - slack && *v <= hi + slack
        });
        if !inside {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(self.spec.function.value(x))
    }

    pub fn evaluate_noisy<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        Ok(self.evaluate_noiseless(x)? + self.draw_noise(rng))
    }

    /// Noisy observation at a grid point.
    pub fn observe_at<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> f64 {
        self.values[index] + self.draw_noise(rng)
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise.std_dev() == 0.0 {
            0.0
        } else {
            self.noise.sample(rng)
        }
    }
}

fn bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|c| (c + 0.0).to_bits()).collect()
}
