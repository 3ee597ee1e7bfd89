//! k-DPP machinery over a finite ground set `{0, .., m-1}`.
//!
//! A k-DPP with kernel `K` puts mass `det(K_S) / Σ_{|S'|=k} det(K_S')` on
//! every k-subset `S`. This module evaluates those probabilities by
//! enumeration on small ground sets, maximizes the determinant greedily,
//! and draws samples either exactly (spectral algorithm) or with a swap
//! Markov chain.
//!
//! Greedy maximization and the Markov chain only ever touch a few entries
//! of `K`, so they are generic over [`KernelView`]; the strategies use that
//! to avoid materializing large posterior kernels.

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Largest ground set for which subsets are enumerated.
pub const ENUMERATION_CAP: usize = 25;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

/// Read access to a symmetric PSD kernel.
pub trait KernelView {
    fn size(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;

    fn diag(&self, i: usize) -> f64 {
        self.entry(i, i)
    }
}

/// Dense DPP kernel together with the domain index each row stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct DppKernel {
    matrix: DMatrix<f64>,
    labels: Vec<usize>,
}

impl DppKernel {
    /// Validates symmetry (within 1e-10) and positive semidefiniteness
    /// (smallest eigenvalue ≥ -1e-8·‖K‖).
    pub fn new(matrix: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let m = matrix.nrows();
        if matrix.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: matrix.ncols(),
            });
        }
        if labels.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: labels.len(),
            });
        }
        let scale = matrix.amax().max(1.0);
        for i in 0..m {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::invalid(
                        "kernel",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        if m > 0 {
            let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
            let norm = eig.amax();
            let min = eig.min();
            if min < -PSD_TOL * norm.max(f64::MIN_POSITIVE) {
                return Err(Error::invalid(
                    "kernel",
                    format!("not positive semidefinite: smallest eigenvalue {min:e}"),
                ));
            }
        }
        Ok(DppKernel { matrix, labels })
    }

    /// Kernel over `{0, .., m-1}` with identity labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let mut matrix = DMatrix::zeros(m, m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                matrix[(i, j)] = *v;
            }
        }
        Self::new(matrix, (0..m).collect())
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let m = values.len();
        Self::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)),
            (0..m).collect(),
        )
    }

    /// Skips validation; callers guarantee symmetry and PSD by construction.
    pub(crate) fn from_trusted(matrix: DMatrix<f64>, labels: Vec<usize>) -> Self {
        debug_assert_eq!(matrix.nrows(), labels.len());
        DppKernel { matrix, labels }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }
}

impl KernelView for DppKernel {
    fn size(&self) -> usize {
        self.matrix.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// A sorted k-subset of the ground set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetSample(Vec<usize>);

impl SubsetSample {
    pub fn new(mut indices: Vec<usize>, ground_size: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("subset", "indices must be distinct"));
        }
        if let Some(&last) = indices.last() {
            if last >= ground_size {
                return Err(Error::invalid(
                    "subset",
                    format!("index {last} outside a ground set of {ground_size}"),
                ));
            }
        }
        Ok(SubsetSample(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

/// `det(K_S)` for the principal submatrix on `subset`.
pub fn principal_det<K: KernelView + ?Sized>(kernel: &K, subset: &[usize]) -> f64 {
    let k = subset.len();
    let mut a = vec![0.0; k * k];
    for (r, &i) in subset.iter().enumerate() {
        for (c, &j) in subset.iter().enumerate() {
            a[r * k + c] = kernel.entry(i, j);
        }
    }
    linalg::psd_det(&a, k)
}

fn check_enumerable(m: usize) -> Result<()> {
    if m > ENUMERATION_CAP {
        return Err(Error::Capacity {
            size: m,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// Every k-subset with its determinant, in lexicographic order.
pub fn subset_determinants(kernel: &DppKernel, k: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let m = kernel.size();
    check_enumerable(m)?;
    if k > m {
        return Err(Error::InfeasibleK { k, rank: m });
    }
    Ok((0..m)
        .combinations(k)
        .map(|s| {
            let d = principal_det(kernel, &s);
            (s, d)
        })
        .collect())
}

/// Normalizer `Σ_{|S|=k} det(K_S)` by enumeration.
pub fn subset_det_sum(kernel: &DppKernel, k: usize) -> Result<f64> {
    Ok(subset_determinants(kernel, k)?.iter().map(|(_, d)| d).sum())
}

/// The full k-DPP distribution by enumeration.
pub fn kdpp_distribution(kernel: &DppKernel, k: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let dets = subset_determinants(kernel, k)?;
    let total: f64 = dets.iter().map(|(_, d)| d).sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleK {
            k,
            rank: numerical_rank(&kernel.eigenvalues()),
        });
    }
    Ok(dets.into_iter().map(|(s, d)| (s, d / total)).collect())
}

pub fn kdpp_prob(kernel: &DppKernel, subset: &SubsetSample) -> Result<f64> {
    let m = kernel.size();
    check_enumerable(m)?;
    if subset.indices().iter().any(|&i| i >= m) {
        return Err(Error::invalid("subset", "index outside the ground set"));
    }
    let total = subset_det_sum(kernel, subset.len())?;
    if !(total > 0.0) {
        return Err(Error::InfeasibleK {
            k: subset.len(),
            rank: numerical_rank(&kernel.eigenvalues()),
        });
    }
    Ok(principal_det(kernel, subset.indices()) / total)
}

/// Shannon entropy (nats) of the k-DPP, with `0 ln 0 = 0`.
pub fn kdpp_entropy(kernel: &DppKernel, k: usize) -> Result<f64> {
    let h: f64 = kdpp_distribution(kernel, k)?
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| -p * p.ln())
        .sum();
    Ok(h.max(0.0))
}

/// `table[l][n] = e_l(λ_1, .., λ_n)` for `l ≤ k`, `n ≤ m`.
pub fn elementary_symmetric_table(eigenvalues: &[f64], k: usize) -> Vec<Vec<f64>> {
    let m = eigenvalues.len();
    let mut e = vec![vec![0.0; m + 1]; k + 1];
    e[0].iter_mut().for_each(|v| *v = 1.0);
    for l in 1..=k {
        for n in 1..=m {
            e[l][n] = e[l][n - 1] + eigenvalues[n - 1] * e[l - 1][n - 1];
        }
    }
    e
}

/// `e_k(λ_1, .., λ_m)`.
pub fn elementary_symmetric(eigenvalues: &[f64], k: usize) -> f64 {
    if k > eigenvalues.len() {
        return 0.0;
    }
    elementary_symmetric_table(eigenvalues, k)[k][eigenvalues.len()]
}

fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count()
}

/// Exact k-DPP sampler via the spectral algorithm: choose k eigenvectors with
/// probability proportional to the product of their eigenvalues, then pick
/// points one by one from the spanned subspace, projecting it down each time.
///
/// The eigendecomposition and the elementary symmetric table are computed
/// once, so repeated draws cost `O(m k²)` each.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    k: usize,
    lambdas: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
}

impl ExactSampler {
    pub fn new(kernel: &DppKernel, k: usize) -> Result<Self> {
        let m = kernel.size();
        let eig = SymmetricEigen::new(kernel.matrix().clone());
        let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        let rank = numerical_rank(&lambdas);
        if k > m || k > rank {
            return Err(Error::InfeasibleK { k, rank });
        }
        let top = lambdas.iter().copied().fold(0.0, f64::max);
        let lambdas: Vec<f64> = lambdas
            .into_iter()
            .map(|l| if l > RANK_TOL * top { l } else { 0.0 })
            .collect();
        let e = elementary_symmetric_table(&lambdas, k);
        let vectors = (0..m)
            .map(|c| eig.eigenvectors.column(c).iter().copied().collect())
            .collect();
        Ok(ExactSampler {
            k,
            lambdas,
            vectors,
            e,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsetSample {
        let m = self.lambdas.len();
        let mut chosen = Vec::with_capacity(self.k);
        let mut remaining = self.k;
        for n in (1..=m).rev() {
            if remaining == 0 {
                break;
            }
            let p = self.lambdas[n - 1] * self.e[remaining - 1][n - 1] / self.e[remaining][n];
            if remaining == n || rng.random::<f64>() < p {
                chosen.push(n - 1);
                remaining -= 1;
            }
        }

        let mut basis: Vec<Vec<f64>> = chosen.iter().map(|&c| self.vectors[c].clone()).collect();
        let mut picked = vec![false; m];
        let mut out = Vec::with_capacity(self.k);
        let mut weights = vec![0.0; m];
        while !basis.is_empty() {
            for (i, w) in weights.iter_mut().enumerate() {
                *w = if picked[i] {
                    0.0
                } else {
                    basis.iter().map(|v| v[i] * v[i]).sum()
                };
            }
            let item = sample_index(&weights, rng);
            picked[item] = true;
            out.push(item);

            // drop the direction that carries `item` and make the rest
            // orthogonal to e_item
            let pivot = (0..basis.len())
                .max_by(|&a, &b| basis[a][item].abs().total_cmp(&basis[b][item].abs()))
                .expect("basis is non-empty");
            let pv = basis.swap_remove(pivot);
            for v in basis.iter_mut() {
                let f = v[item] / pv[item];
                for (x, p) in v.iter_mut().zip(&pv) {
                    *x -= f * p;
                }
            }
            gram_schmidt(&mut basis);
        }
        out.sort_unstable();
        SubsetSample(out)
    }
}

/// One exact k-DPP sample; see [`ExactSampler`].
pub fn kdpp_sample_exact<R: Rng + ?Sized>(
    kernel: &DppKernel,
    k: usize,
    rng: &mut R,
) -> Result<SubsetSample> {
    if k == 0 {
        return Ok(SubsetSample(Vec::new()));
    }
    Ok(ExactSampler::new(kernel, k)?.sample(rng))
}

fn gram_schmidt(basis: &mut [Vec<f64>]) {
    for i in 0..basis.len() {
        for j in 0..i {
            let (head, tail) = basis.split_at_mut(i);
            let proj = linalg::dot(&tail[0], &head[j]);
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= proj * y;
            }
        }
        let norm = linalg::dot(&basis[i], &basis[i]).sqrt();
        if norm > 0.0 {
            basis[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last = i;
        if u < *w {
            return i;
        }
        u -= w;
    }
    last
}

/// Greedy determinant maximization, returned in selection order.
///
/// Each step adds the element with the largest conditional variance given
/// the elements already chosen (the Schur complement `det(K_{S+i}) /
/// det(K_S)`). Ties go to the lowest index.
pub fn greedy_max_sequence<K: KernelView + ?Sized>(kernel: &K, k: usize) -> Vec<usize> {
    let m = kernel.size();
    let k = k.min(m);
    let mut residual: Vec<f64> = (0..m).map(|i| kernel.diag(i)).collect();
    let mut factors: Vec<Vec<f64>> = vec![Vec::with_capacity(k); m];
    let mut selected = vec![false; m];
    let mut order = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for i in 0..m {
            if !selected[i] && residual[i] > best_gain {
                best_gain = residual[i];
                best = i;
            }
        }
        let j = best;
        selected[j] = true;
        order.push(j);
        if order.len() == k {
            break;
        }
        let pivot = residual[j];
        let fj = factors[j].clone();
        for i in 0..m {
            if selected[i] {
                continue;
            }
            let e = if pivot > 0.0 {
                (kernel.entry(j, i) - linalg::dot(&fj, &factors[i])) / pivot.sqrt()
            } else {
                0.0
            };
            factors[i].push(e);
            residual[i] -= e * e;
        }
    }
    order
}

pub fn kdpp_greedy_max<K: KernelView + ?Sized>(kernel: &K, k: usize) -> SubsetSample {
    let mut s = greedy_max_sequence(kernel, k);
    s.sort_unstable();
    SubsetSample(s)
}

/// Default chain length `⌈10 · m · k · ln m⌉`.
pub fn default_mcmc_steps(m: usize, k: usize) -> usize {
    if m < 2 {
        return 0;
    }
    (10.0 * m as f64 * k as f64 * (m as f64).ln()).ceil() as usize
}

/// k-DPP sample from a lazy swap chain started at the greedy maximizer.
///
/// Each step stays put with probability ½; otherwise it proposes exchanging
/// a uniform member for a uniform non-member and accepts with probability
/// `min(1, det(K_S') / det(K_S))`.
pub fn kdpp_sample_mcmc<K: KernelView + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    k: usize,
    steps: usize,
    rng: &mut R,
) -> Result<SubsetSample> {
    let m = kernel.size();
    if k > m {
        return Err(Error::InfeasibleK { k, rank: m });
    }
    let mut current = greedy_max_sequence(kernel, k);
    let mut sub = vec![0.0; k * k];
    fill_submatrix(kernel, &current, &mut sub);
    let mut det = linalg::psd_det(&sub, k);
    if !(det > 0.0) {
        return Err(Error::InfeasibleK { k, rank: 0 });
    }
    if k == 0 || k == m {
        return SubsetSample::new(current, m);
    }

    let mut inside = vec![false; m];
    current.iter().for_each(|&i| inside[i] = true);
    let mut outside: Vec<usize> = (0..m).filter(|&i| !inside[i]).collect();
    let mut proposal = vec![0.0; k * k];
    for _ in 0..steps {
        if rng.random::<bool>() {
            continue;
        }
        let pos = rng.random_range(0..k);
        let out_pos = rng.random_range(0..outside.len());
        let candidate = outside[out_pos];

        proposal.copy_from_slice(&sub);
        for (c, &j) in current.iter().enumerate() {
            let v = if c == pos {
                kernel.diag(candidate)
            } else {
                kernel.entry(candidate, j)
            };
            proposal[pos * k + c] = v;
            proposal[c * k + pos] = v;
        }
        let new_det = linalg::psd_det(&proposal, k);
        let ratio = new_det / det;
        if ratio >= 1.0 || rng.random::<f64>() < ratio {
            outside[out_pos] = current[pos];
            current[pos] = candidate;
            std::mem::swap(&mut sub, &mut proposal);
            det = new_det;
        }
    }
    SubsetSample::new(current, m)
}

fn fill_submatrix<K: KernelView + ?Sized>(kernel: &K, subset: &[usize], out: &mut [f64]) {
    let k = subset.len();
    for (r, &i) in subset.iter().enumerate() {
        for (c, &j) in subset.iter().enumerate().skip(r) {
            let v = kernel.entry(i, j);
            out[r * k + c] = v;
            out[c * k + r] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subset(v: &[usize], m: usize) -> SubsetSample {
        SubsetSample::new(v.to_vec(), m).unwrap()
    }

    #[test]
    fn prob_examples() {
        let k = DppKernel::diagonal(&[2.0, 3.0]).unwrap();
        assert!((kdpp_prob(&k, &subset(&[0], 2)).unwrap() - 0.4).abs() < 1e-15);
        let i3 = DppKernel::diagonal(&[1.0; 3]).unwrap();
        for pair in [[0, 1], [0, 2], [1, 2]] {
            assert!((kdpp_prob(&i3, &subset(&pair, 3)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
        let z = DppKernel::diagonal(&[1.0, 0.0]).unwrap();
        assert_eq!(kdpp_prob(&z, &subset(&[1], 2)).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_cap() {
        let big = DppKernel::diagonal(&[1.0; 26]).unwrap();
        assert_eq!(
            kdpp_prob(&big, &subset(&[0], 26)),
            Err(Error::Capacity { size: 26, cap: 25 })
        );
        assert!(kdpp_entropy(&big, 1).is_err());
    }

    #[test]
    fn elementary_symmetric_examples() {
        assert_eq!(elementary_symmetric(&[1.0, 2.0, 3.0], 2), 11.0);
        assert_eq!(elementary_symmetric(&[4.0, -2.0, 0.5], 0), 1.0);
        assert_eq!(elementary_symmetric(&[1.0; 4], 2), 6.0);
        assert_eq!(elementary_symmetric(&[1.0; 2], 3), 0.0);
    }

    #[test]
    fn exact_sampler_full_set() {
        let k = DppKernel::diagonal(&[1.0; 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(
                kdpp_sample_exact(&k, 5, &mut rng).unwrap().indices(),
                &[0, 1, 2, 3, 4]
            );
        }
    }

    #[test]
    fn exact_sampler_rank_deficient() {
        let k = DppKernel::diagonal(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            kdpp_sample_exact(&k, 2, &mut rng),
            Err(Error::InfeasibleK { k: 2, rank: 1 })
        ));
    }

    #[test]
    fn exact_sampler_is_seeded() {
        let k = DppKernel::from_rows(&[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 1.0, 0.2],
            vec![0.1, 0.2, 1.5],
        ])
        .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| kdpp_sample_exact(&k, 2, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn greedy_examples() {
        let k = DppKernel::diagonal(&[3.0, 2.0]).unwrap();
        assert_eq!(kdpp_greedy_max(&k, 1).indices(), &[0]);
        let k = DppKernel::from_rows(&[
            vec![2.0, 1.9, 0.0],
            vec![1.9, 2.0, 0.0],
            vec![0.0, 0.0, 1.5],
        ])
        .unwrap();
        assert_eq!(greedy_max_sequence(&k, 2), vec![0, 2]);
        let c = DppKernel::diagonal(&[0.7; 6]).unwrap();
        assert_eq!(kdpp_greedy_max(&c, 4).indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn greedy_handles_zero_gains() {
        let k = DppKernel::diagonal(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(greedy_max_sequence(&k, 3), vec![0, 1, 2]);
    }

    #[test]
    fn mcmc_zero_steps_is_greedy_start() {
        let k = DppKernel::from_rows(&[
            vec![2.0, 1.9, 0.0],
            vec![1.9, 2.0, 0.0],
            vec![0.0, 0.0, 1.5],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = kdpp_sample_mcmc(&k, 2, 0, &mut rng).unwrap();
        assert_eq!(s, kdpp_greedy_max(&k, 2));
    }

    #[test]
    fn mcmc_infeasible_start() {
        let k = DppKernel::diagonal(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kdpp_sample_mcmc(&k, 2, 10, &mut rng).is_err());
    }

    #[test]
    fn entropy_examples() {
        let k = DppKernel::diagonal(&[2.0; 4]).unwrap();
        assert!((kdpp_entropy(&k, 2).unwrap() - 6f64.ln()).abs() < 1e-12);
        let point = DppKernel::diagonal(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(kdpp_entropy(&point, 1).unwrap(), 0.0);
        let two = DppKernel::diagonal(&[2.0, 3.0]).unwrap();
        let h = -0.4 * 0.4f64.ln() - 0.6 * 0.6f64.ln();
        assert!((kdpp_entropy(&two, 1).unwrap() - h).abs() < 1e-12);
        assert!((h - 0.6730).abs() < 1e-4);
    }

    #[test]
    fn kernel_validation() {
        assert!(DppKernel::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(DppKernel::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(DppKernel::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_ok());
    }

    #[test]
    fn default_steps() {
        assert_eq!(default_mcmc_steps(1, 1), 0);
        assert_eq!(default_mcmc_steps(4, 2), 111);
    }
}
