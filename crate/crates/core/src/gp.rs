//! Exact Gaussian-process regression over a finite candidate set.
//!
//! [`PosteriorState`] is the general conditioned GP: it holds the observed
//! inputs and targets together with the lower-triangular factor of
//! `K_n + σ²I`, and answers mean / variance / covariance queries at arbitrary
//! points. [`GridPosterior`] pairs a state with a [`DomainGrid`] and keeps the
//! projections `L⁻¹ k_n(x)` of every grid point up to date, so that a rank-one
//! update costs `O(|X| · n)` instead of a fresh solve per grid point.
//!
//! All states are immutable values: updates return new states, and the
//! per-observation grid columns are shared between clones through `Arc`.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Variances below zero by less than this are treated as round-off.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

const JITTER_BASE: f64 = 1e-10;
const JITTER_RETRIES: usize = 3;

/// Squared-exponential ARD kernel `γ² exp(-½ Σ_d (x_d - y_d)² / l_d²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelParams", into = "RawKernelParams")]
pub struct KernelParams {
    signal_variance: f64,
    lengthscales: Vec<f64>,
    inv_sq_lengthscales: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawKernelParams {
    signal_variance: f64,
    lengthscales: Vec<f64>,
}

impl TryFrom<RawKernelParams> for KernelParams {
    type Error = Error;

    fn try_from(raw: RawKernelParams) -> Result<Self> {
        KernelParams::new(raw.signal_variance, raw.lengthscales)
    }
}

impl From<KernelParams> for RawKernelParams {
    fn from(p: KernelParams) -> Self {
        RawKernelParams {
            signal_variance: p.signal_variance,
            lengthscales: p.lengthscales,
        }
    }
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::invalid(
                "signal_variance",
                format!("must be positive and finite, got {signal_variance}"),
            ));
        }
        if lengthscales.is_empty() {
            return Err(Error::invalid("lengthscales", "need at least one dimension"));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid(
                "lengthscales",
                format!("every lengthscale must be positive and finite, got {bad}"),
            ));
        }
        let inv_sq_lengthscales = lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        Ok(KernelParams {
            signal_variance,
            lengthscales,
            inv_sq_lengthscales,
        })
    }

    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim])
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    /// `γ`, the prior standard deviation.
    pub fn signal_std(&self) -> f64 {
        self.signal_variance.sqrt()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((a, b), w) in x.iter().zip(y).zip(&self.inv_sq_lengthscales) {
            let diff = a - b;
            r2 += diff * diff * w;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Ordered, duplicate-free list of candidate points. A point's index is its
/// identity for the lifetime of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGrid {
    dim: usize,
    coords: Vec<f64>,
}

impl DomainGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("grid", "need at least one point of positive dimension"));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid("grid", "coordinate buffer is not a whole number of points"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("grid", "coordinates must be finite"));
        }
        let mut seen = HashSet::with_capacity(coords.len() / dim);
        for (i, p) in coords.chunks_exact(dim).enumerate() {
            // +0.0 and -0.0 are the same location
            let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::invalid("grid", format!("point {i} is a duplicate")));
            }
        }
        Ok(DomainGrid { dim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }
}

/// A GP conditioned on `n` noisy observations.
///
/// After [`hallucinate`](Self::hallucinate) the stored targets contain
/// placeholders, so the mean is marked stale and every mean query returns
/// [`Error::StaleMean`]. Variances and covariances stay exact.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    params: KernelParams,
    noise_variance: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    // row i holds the first i + 1 entries of row i of L, L Lᵀ = K_n + σ²I
    factor: Vec<Vec<f64>>,
    // L⁻¹ y
    whitened: Vec<f64>,
    mean_stale: bool,
}

impl PosteriorState {
    pub fn new(params: KernelParams, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid(
                "noise_variance",
                format!("must be positive and finite, got {noise_variance}"),
            ));
        }
        Ok(PosteriorState {
            params,
            noise_variance,
            inputs: Vec::new(),
            targets: Vec::new(),
            factor: Vec::new(),
            whitened: Vec::new(),
            mean_stale: false,
        })
    }

    /// Builds the state in one shot by factorizing `K_n + σ²I`. Retries with
    /// diagonal jitter `1e-10·γ²`, `1e-9·γ²`, `1e-8·γ²` on failure.
    pub fn from_observations(
        params: KernelParams,
        noise_variance: f64,
        inputs: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<Self> {
        let mut state = Self::new(params, noise_variance)?;
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for x in inputs {
            state.params.check_dim(x)?;
        }
        let n = inputs.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = state.params.eval_unchecked(&inputs[i], &inputs[j]);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
            gram[i * n + i] += noise_variance;
        }
        let mut l = linalg::cholesky(&gram, n);
        let mut jitter = JITTER_BASE * state.params.signal_variance;
        for _ in 0..JITTER_RETRIES {
            if l.is_some() {
                break;
            }
            let mut g = gram.clone();
            for i in 0..n {
                g[i * n + i] += jitter;
            }
            l = linalg::cholesky(&g, n);
            jitter *= 10.0;
        }
        let l = l.ok_or_else(|| {
            Error::Numerical(format!(
                "Gram matrix of {n} points is not positive definite with σ² = {noise_variance}"
            ))
        })?;
        state.whitened = linalg::forward_solve(&l, n, targets);
        state.factor = (0..n).map(|i| l[i * n..i * n + i + 1].to_vec()).collect();
        state.inputs = inputs.to_vec();
        state.targets = targets.to_vec();
        Ok(state)
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Observed targets. Entries added by hallucination are placeholders.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn mean_is_stale(&self) -> bool {
        self.mean_stale
    }

    /// Row `i` of the lower-triangular factor, diagonal included.
    pub fn factor_row(&self, i: usize) -> &[f64] {
        &self.factor[i]
    }

    /// `L⁻¹ k_n(x)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.check_dim(x)?;
        Ok(self.project_unchecked(x))
    }

    fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let row = &self.factor[i];
            let s = self.params.eval_unchecked(&self.inputs[i], x) - linalg::dot(&row[..i], &v);
            v.push(s / row[i]);
        }
        v
    }

    /// `(μ_n(x), σ_n²(x))`.
    pub fn posterior_mean_var(&self, x: &[f64]) -> Result<(f64, f64)> {
        if self.mean_stale {
            return Err(Error::StaleMean);
        }
        let v = self.project(x)?;
        let mean = linalg::dot(&v, &self.whitened);
        let var = self.params.eval_unchecked(x, x) - linalg::dot(&v, &v);
        Ok((mean, var.max(0.0)))
    }

    /// `σ_n²(x)`; valid on hallucinated states.
    pub fn posterior_variance(&self, x: &[f64]) -> Result<f64> {
        let v = self.project(x)?;
        Ok((self.params.eval_unchecked(x, x) - linalg::dot(&v, &v)).max(0.0))
    }

    /// `k_n(x, x')`.
    pub fn posterior_cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let v = self.project(x)?;
        let v2 = self.project(x2)?;
        let cov = self.params.eval_unchecked(x, x2) - linalg::dot(&v, &v2);
        if x == x2 {
            return Ok(cov.max(0.0));
        }
        Ok(cov)
    }

    /// Appends the observation `(x, y)` by extending the factor with one row.
    pub fn incremental_update(&self, x: &[f64], y: f64) -> Result<Self> {
        let mut next = self.extend(x, y)?;
        next.mean_stale = self.mean_stale;
        Ok(next)
    }

    /// Appends `x` with a placeholder target. Variance and covariance of the
    /// result equal those of any real update at `x`; the mean is stale.
    pub fn hallucinate(&self, x: &[f64]) -> Result<Self> {
        let mut next = self.extend(x, 0.0)?;
        next.mean_stale = true;
        Ok(next)
    }

    fn extend(&self, x: &[f64], y: f64) -> Result<Self> {
        self.params.check_dim(x)?;
        let l = self.project_unchecked(x);
        let base = self.params.eval_unchecked(x, x) + self.noise_variance - linalg::dot(&l, &l);
        let d = pivot_with_jitter(base, self.params.signal_variance).ok_or_else(|| {
            Error::Numerical(format!(
                "new pivot {base:e} is not positive; σ² = {} is too small for this Gram matrix",
                self.noise_variance
            ))
        })?;
        let w = (y - linalg::dot(&l, &self.whitened)) / d;
        let mut row = l;
        row.push(d);
        let mut next = self.clone();
        next.inputs.push(x.to_vec());
        next.targets.push(y);
        next.factor.push(row);
        next.whitened.push(w);
        Ok(next)
    }
}

fn pivot_with_jitter(base: f64, signal_variance: f64) -> Option<f64> {
    if base > 0.0 && base.is_finite() {
        return Some(base.sqrt());
    }
    let mut jitter = JITTER_BASE * signal_variance;
    for _ in 0..JITTER_RETRIES {
        let p = base + jitter;
        if p > 0.0 && p.is_finite() {
            return Some(p.sqrt());
        }
        jitter *= 10.0;
    }
    None
}

/// A [`PosteriorState`] with cached posterior quantities for every point of
/// a fixed grid.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    grid: Arc<DomainGrid>,
    state: PosteriorState,
    // columns[c][i] = (L⁻¹ k_n(x_i))_c
    columns: Vec<Arc<Vec<f64>>>,
    raw_variance: Arc<Vec<f64>>,
    mean: Arc<Vec<f64>>,
}

impl GridPosterior {
    pub fn new(grid: Arc<DomainGrid>, params: KernelParams, noise_variance: f64) -> Result<Self> {
        if grid.dim() != params.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.input_dim(),
                got: grid.dim(),
            });
        }
        let prior: Vec<f64> = grid.iter().map(|x| params.eval_unchecked(x, x)).collect();
        let state = PosteriorState::new(params, noise_variance)?;
        let n = grid.len();
        Ok(GridPosterior {
            grid,
            state,
            columns: Vec::new(),
            raw_variance: Arc::new(prior),
            mean: Arc::new(vec![0.0; n]),
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }

    pub fn params(&self) -> &KernelParams {
        self.state.params()
    }

    pub fn noise_variance(&self) -> f64 {
        self.state.noise_variance()
    }

    pub fn num_observations(&self) -> usize {
        self.state.len()
    }

    pub fn mean_is_stale(&self) -> bool {
        self.state.mean_is_stale()
    }

    /// Observes `y` at grid point `index`.
    pub fn observe(&self, index: usize, y: f64) -> Result<Self> {
        let next_state = self.state.incremental_update(self.grid.point(index), y)?;
        Ok(self.extend(index, next_state))
    }

    /// Hallucinated update at grid point `index`; the mean becomes stale.
    pub fn hallucinate(&self, index: usize) -> Result<Self> {
        let next_state = self.state.hallucinate(self.grid.point(index))?;
        Ok(self.extend(index, next_state))
    }

    fn extend(&self, index: usize, next_state: PosteriorState) -> Self {
        let n = self.state.len();
        let row = next_state.factor_row(n);
        let (l, d) = (&row[..n], row[n]);
        let x_new = self.grid.point(index);
        let params = self.state.params();
        let mut col: Vec<f64> = self.grid.iter().map(|x| params.eval_unchecked(x_new, x)).collect();
        for (lc, prev) in l.iter().zip(&self.columns) {
            if *lc != 0.0 {
                for (e, p) in col.iter_mut().zip(prev.iter()) {
                    *e -= lc * p;
                }
            }
        }
        let inv_d = 1.0 / d;
        col.iter_mut().for_each(|e| *e *= inv_d);

        let raw_variance: Vec<f64> = self
            .raw_variance
            .iter()
            .zip(&col)
            .map(|(v, e)| v - e * e)
            .collect();
        let mean = if next_state.mean_is_stale() {
            Arc::clone(&self.mean)
        } else {
            let w = next_state.whitened[n];
            Arc::new(self.mean.iter().zip(&col).map(|(m, e)| m + e * w).collect())
        };
        let mut columns = self.columns.clone();
        columns.push(Arc::new(col));
        GridPosterior {
            grid: Arc::clone(&self.grid),
            state: next_state,
            columns,
            raw_variance: Arc::new(raw_variance),
            mean,
        }
    }

    /// Posterior means over the grid.
    pub fn means(&self) -> Result<&[f64]> {
        if self.state.mean_is_stale() {
            return Err(Error::StaleMean);
        }
        Ok(&self.mean)
    }

    pub fn variance(&self, index: usize) -> f64 {
        self.raw_variance[index].max(0.0)
    }

    /// Variance before clamping at zero; useful for round-off diagnostics.
    pub fn raw_variance(&self, index: usize) -> f64 {
        self.raw_variance[index]
    }

    pub fn variances(&self) -> Vec<f64> {
        self.raw_variance.iter().map(|v| v.max(0.0)).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.raw_variance.iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Posterior covariance between two grid points.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.variance(i);
        }
        let prior = self
            .state
            .params()
            .eval_unchecked(self.grid.point(i), self.grid.point(j));
        let s: f64 = self.columns.iter().map(|c| c[i] * c[j]).sum();
        prior - s
    }

    /// `L⁻¹ k_n(x_i)` for grid point `i`.
    pub fn projection(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }
}
