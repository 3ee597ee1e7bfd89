//! Slow reference computations used to cross-check the fast paths.

use std::sync::Arc;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::information_gain;
use crate::gp::{DomainGrid, GridPosterior, KernelParams};
use crate::objectives::FunctionId;

/// Posterior mean and variance at `x` from a dense solve against
/// `K + σ² I`, with no factor reuse.
pub fn dense_posterior(
    params: &KernelParams,
    noise_variance: f64,
    inputs: &[Vec<f64>],
    targets: &[f64],
    x: &[f64],
) -> (f64, f64) {
    let n = inputs.len();
    let prior = params.eval_unchecked(x, x);
    if n == 0 {
        return (0.0, prior);
    }
    let mut k = DMatrix::from_fn(n, n, |i, j| params.eval_unchecked(&inputs[i], &inputs[j]));
    for i in 0..n {
        k[(i, i)] += noise_variance;
    }
    let kx = DVector::from_fn(n, |i, _| params.eval_unchecked(&inputs[i], x));
    let lu = k.lu();
    let alpha = lu.solve(&DVector::from_column_slice(targets)).expect("singular Gram matrix");
    let v = lu.solve(&kx).expect("singular Gram matrix");
    (kx.dot(&alpha), (prior - kx.dot(&v)).max(0.0))
}

/// Posterior covariance between `x` and `y` by a dense solve.
pub fn dense_covariance(
    params: &KernelParams,
    noise_variance: f64,
    inputs: &[Vec<f64>],
    x: &[f64],
    y: &[f64],
) -> f64 {
    let n = inputs.len();
    let prior = params.eval_unchecked(x, y);
    if n == 0 {
        return prior;
    }
    let mut k = DMatrix::from_fn(n, n, |i, j| params.eval_unchecked(&inputs[i], &inputs[j]));
    for i in 0..n {
        k[(i, i)] += noise_variance;
    }
    let kx = DVector::from_fn(n, |i, _| params.eval_unchecked(&inputs[i], x));
    let ky = DVector::from_fn(n, |i, _| params.eval_unchecked(&inputs[i], y));
    let v = k.lu().solve(&ky).expect("singular Gram matrix");
    prior - kx.dot(&v)
}

/// Exact `γ_t` by enumerating every subset of size `t`.
pub fn exhaustive_gamma(grid: &DomainGrid, params: &KernelParams, noise_variance: f64, t: usize) -> f64 {
    (0..grid.len())
        .combinations(t)
        .map(|s| {
            let k = DMatrix::from_fn(t, t, |i, j| {
                params.eval_unchecked(grid.point(s[i]), grid.point(s[j]))
            });
            information_gain(&k, noise_variance).expect("Gram matrices are PSD")
        })
        .fold(0.0, f64::max)
}

/// Compass search from `start`, clamped to `bounds`, minimizing `f`.
pub fn compass_minimize(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut step: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / 4.0).collect();
    while step.iter().zip(bounds).any(|(s, (lo, hi))| *s > tol * (hi - lo)) {
        let mut improved = false;
        for d in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + sign * step[d]).clamp(bounds[d].0, bounds[d].1);
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (x, fx)
}

/// Continuous maximum of a benchmark: the best of a dense random sample and
/// a local refinement from each of the `restarts` best sample points.
pub fn continuous_maximum(function: FunctionId, samples: usize, restarts: usize, seed: u64) -> (Vec<f64>, f64) {
    let bounds = function.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(Vec<f64>, f64)> = (0..samples)
        .map(|_| {
            let x: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
            let v = function.value(&x);
            (x, v)
        })
        .collect();
    pool.sort_by(|a, b| b.1.total_cmp(&a.1));
    pool.truncate(restarts.max(1));
    pool.iter()
        .map(|(x, _)| {
            let (y, v) = compass_minimize(|p| -function.value(p), x, bounds, 1e-12);
            (y, -v)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one restart")
}

/// A random GP posterior over a random grid.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub grid: Arc<DomainGrid>,
    pub params: KernelParams,
    pub noise_variance: f64,
    /// Observed grid indices, possibly with repeats.
    pub observed: Vec<usize>,
    pub targets: Vec<f64>,
}

impl RandomInstance {
    /// Dimension in `1..=max_dim`, between 2 and `max_grid` distinct points
    /// in the unit box, up to `max_obs` noisy observations.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, max_dim: usize, max_grid: usize, max_obs: usize) -> Self {
        let dim = rng.random_range(1..=max_dim);
        let size = rng.random_range(2..=max_grid);
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(size);
        while points.len() < size {
            let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            if !points.contains(&p) {
                points.push(p);
            }
        }
        let grid = Arc::new(DomainGrid::new(points).expect("distinct points"));
        let params = KernelParams::new(
            rng.random_range(0.5..2.0),
            (0..dim).map(|_| rng.random_range(0.1..0.6)).collect(),
        )
        .expect("positive parameters");
        let noise_variance = 10f64.powf(rng.random_range(-2.0..0.0));
        let n = rng.random_range(0..=max_obs);
        let observed: Vec<usize> = (0..n).map(|_| rng.random_range(0..size)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        RandomInstance {
            grid,
            params,
            noise_variance,
            observed,
            targets,
        }
    }

    pub fn posterior(&self) -> GridPosterior {
        let mut post = GridPosterior::new(Arc::clone(&self.grid), self.params.clone(), self.noise_variance)
            .expect("valid instance");
        for (&i, &y) in self.observed.iter().zip(&self.targets) {
            post = post.observe(i, y).expect("well-conditioned update");
        }
        post
    }

    /// Same instance with every target replaced.
    pub fn with_targets(&self, targets: Vec<f64>) -> Self {
        assert_eq!(targets.len(), self.targets.len());
        RandomInstance {
            targets,
            ..self.clone()
        }
    }

    pub fn observed_points(&self) -> Vec<Vec<f64>> {
        self.observed.iter().map(|&i| self.grid.point(i).to_vec()).collect()
    }
}

/// Random PSD matrix `A Aᵀ` with `A` of shape `m × rank`, entries uniform
/// in `[-1, 1]`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, m: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, rank, |_, _| rng.random_range(-1.0..1.0));
    let k = &a * a.transpose();
    (&k + k.transpose()) * 0.5
}

/// UCB-PE selection computed with dense solves: repeatedly take the point of
/// `candidates` with the largest posterior variance given `inputs` plus the
/// points already taken (ties to the earliest candidate). Returns the picks
/// and the variance each had when it was picked.
pub fn ucb_pe_sequence(
    params: &KernelParams,
    noise_variance: f64,
    inputs: &[Vec<f64>],
    grid: &DomainGrid,
    candidates: &[usize],
    count: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut conditioning = inputs.to_vec();
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(count);
    let mut variances = Vec::with_capacity(count);
    for _ in 0..count.min(candidates.len()) {
        let targets = vec![0.0; conditioning.len()];
        let mut best = usize::MAX;
        let mut best_var = f64::NEG_INFINITY;
        for (pos, &c) in candidates.iter().enumerate() {
            if taken[pos] {
                continue;
            }
            let (_, v) = dense_posterior(params, noise_variance, &conditioning, &targets, grid.point(c));
            if v > best_var {
                best_var = v;
                best = pos;
            }
        }
        taken[best] = true;
        picks.push(candidates[best]);
        variances.push(best_var);
        conditioning.push(grid.point(candidates[best]).to_vec());
    }
    (picks, variances)
}
