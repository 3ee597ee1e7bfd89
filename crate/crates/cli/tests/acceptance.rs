//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p dppbo-cli --test acceptance`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use dppbo_cli::config::{ExperimentConfig, KernelConfig};
use dppbo_cli::experiment::{median, run_experiment, ResultRow};
use dppbo_core::diagnostics::{greedy_gamma, information_gain, information_gain_spectral};
use dppbo_core::dpp::{
    default_mcmc_steps, kdpp_distribution, kdpp_entropy, kdpp_sample_mcmc, principal_det,
    subset_det_sum, DppKernel, ExactSampler,
};
use dppbo_core::oracle::{dense_posterior, exhaustive_gamma, random_psd, ucb_pe_sequence, RandomInstance};
use dppbo_core::strategy::{select_batch_bucb_with_mean, select_batch_dpp, select_batch_dpp_with_mean};
use dppbo_core::{
    Algorithm, DomainGrid, DppMode, FunctionId, KernelParams, PosteriorState, Rule, StrategyConfig,
    UcbMaxEstimator,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Branin sweep settings shared by the regret and determinism criteria.
const BRANIN_NOISE_STD: f64 = 0.5;
const BRANIN_SIGNAL_VARIANCE: f64 = 2500.0;
const BRANIN_LENGTHSCALE: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_kernel(rng: &mut ChaCha8Rng, m: usize) -> DppKernel {
    let rank = rng.random_range(m.max(2) / 2..=m + 2);
    let mut k = random_psd(rng, m, rank);
    for i in 0..m {
        k[(i, i)] += 0.05;
    }
    DppKernel::new(k, (0..m).collect()).unwrap()
}

fn schur_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut checked, mut attempts, mut worst) = (0, 0, 0.0f64);
    while checked < 200 && attempts < 2000 {
        attempts += 1;
        let inst = RandomInstance::generate(&mut rng, 3, 100, 12);
        let b = if rng.random::<bool>() { 3 } else { 5 };
        let mode = if checked % 2 == 0 { DppMode::Max } else { DppMode::Sample };
        let cfg = StrategyConfig::new(Algorithm::UcbDppSample, b, inst.noise_variance);
        let d = select_batch_dpp(&inst.posterior(), &cfg, Rule::Ucb, mode, 2, &mut rng).unwrap();
        if d.used_fallback {
            continue;
        }
        let kernel = d.kernel.as_ref().unwrap();
        let positions: Vec<usize> = d.indices[1..]
            .iter()
            .map(|i| kernel.labels().iter().position(|l| l == i).unwrap())
            .collect();
        let det = principal_det(kernel, &positions);
        let product: f64 = d.conditional_std[1..]
            .iter()
            .map(|s| 1.0 + s * s / inst.noise_variance)
            .product();
        worst = worst.max((det - product).abs() / det.abs());
        checked += 1;
    }
    outcome(
        checked == 200 && worst <= 1e-8,
        format!("{checked} instances, max relative error {worst:.2e}"),
    )
}

fn dpp_max_is_ucb_pe() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut checked, mut attempts, mut mismatches) = (0, 0, 0);
    while checked < 200 && attempts < 2000 {
        attempts += 1;
        let inst = RandomInstance::generate(&mut rng, 3, 100, 12);
        let b = rng.random_range(2..=6);
        let rule = if rng.random::<bool>() { Rule::Ucb } else { Rule::Est };
        let cfg = StrategyConfig::new(Algorithm::UcbDppMax, b, inst.noise_variance);
        let d = select_batch_dpp(&inst.posterior(), &cfg, rule, DppMode::Max, 3, &mut rng).unwrap();
        if d.used_fallback {
            continue;
        }
        let first = d.indices[0];
        let candidates: Vec<usize> = d.region.as_ref().unwrap().iter().copied().filter(|&i| i != first).collect();
        let mut conditioning = inst.observed_points();
        conditioning.push(inst.grid.point(first).to_vec());
        let (reference, _) = ucb_pe_sequence(&inst.params, inst.noise_variance, &conditioning, &inst.grid, &candidates, b - 1);
        if d.indices[1..] != reference[..] {
            mismatches += 1;
        }
        checked += 1;
    }
    outcome(
        checked == 200 && mismatches == 0,
        format!("{checked} instances, {mismatches} mismatches"),
    )
}

fn exact_sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 200_000;
    let mut min_p = f64::INFINITY;
    for _ in 0..20 {
        let m = rng.random_range(2..=8);
        let k = rng.random_range(1..=m.min(3));
        let kernel = random_kernel(&mut rng, m);
        let sampler = ExactSampler::new(&kernel, k).unwrap();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sampler.sample(&mut rng).into_inner()).or_insert(0) += 1;
        }
        // Cells with fewer than five expected draws are pooled.
        let (mut stat, mut cells) = (0.0, 0usize);
        let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
        for (s, p) in kdpp_distribution(&kernel, k).unwrap() {
            let expected = p * n as f64;
            let observed = *counts.get(&s).unwrap_or(&0) as f64;
            if expected < 5.0 {
                pooled_obs += observed;
                pooled_exp += expected;
            } else {
                stat += (observed - expected).powi(2) / expected;
                cells += 1;
            }
        }
        if pooled_exp > 0.0 {
            stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp.max(1e-300);
            cells += 1;
        }
        if cells < 2 {
            continue;
        }
        let p_value = ChiSquared::new((cells - 1) as f64).unwrap().sf(stat);
        min_p = min_p.min(p_value);
    }
    let diag = DppKernel::diagonal(&[2.0, 3.0]).unwrap();
    let sampler = ExactSampler::new(&diag, 1).unwrap();
    let hits = (0..n).filter(|_| sampler.sample(&mut rng).indices() == [0]).count();
    let freq = hits as f64 / n as f64;
    outcome(
        min_p > 0.001 && (freq - 0.4).abs() <= 0.005,
        format!("min chi-square p-value {min_p:.4} over 20 kernels; diag(2,3) P(first) = {freq:.4}"),
    )
}

fn mcmc_sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let kernel = DppKernel::new(DMatrix::identity(4, 4), (0..4).collect()).unwrap();
    let steps = default_mcmc_steps(4, 2);
    let chains = 100_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..chains {
        let s = kdpp_sample_mcmc(&kernel, 2, steps, &mut rng).unwrap();
        *counts.entry(s.into_inner()).or_insert(0) += 1;
    }
    let tv: f64 = 0.5
        * kdpp_distribution(&kernel, 2)
            .unwrap()
            .iter()
            .map(|(s, p)| (*counts.get(s).unwrap_or(&0) as f64 / chains as f64 - p).abs())
            .sum::<f64>();
    outcome(tv < 0.02, format!("TV {tv:.4} with {steps} steps per chain"))
}

fn entropy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(2..=10);
        let k = rng.random_range(1..=m.min(5));
        let kernel = random_kernel(&mut rng, m);
        let expected: f64 = kdpp_distribution(&kernel, k)
            .unwrap()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, p)| p * principal_det(&kernel, s).ln())
            .sum();
        let rhs = -kdpp_entropy(&kernel, k).unwrap() + subset_det_sum(&kernel, k).unwrap().ln();
        worst = worst.max((expected - rhs).abs());
    }
    outcome(worst <= 1e-9, format!("50 kernels, max error {worst:.2e}"))
}

fn frozen_mean_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut differing = 0;
    for case in 0..100u64 {
        let inst = RandomInstance::generate(&mut rng, 3, 60, 12);
        let other = inst.with_targets(inst.targets.iter().map(|_| rng.random_range(-5.0..5.0)).collect());
        let frozen: Vec<f64> = (0..inst.grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (inst.posterior(), other.posterior());
        let b_size = rng.random_range(2..=5);
        for alg in Algorithm::ALL {
            let cfg = StrategyConfig::new(alg, b_size, inst.noise_variance);
            let (da, db) = match alg.dpp_mode() {
                None => (
                    select_batch_bucb_with_mean(&a, &frozen, &cfg, alg.rule(), 2, &UcbMaxEstimator).unwrap(),
                    select_batch_bucb_with_mean(&b, &frozen, &cfg, alg.rule(), 2, &UcbMaxEstimator).unwrap(),
                ),
                Some(mode) => {
                    let mut r1 = ChaCha8Rng::seed_from_u64(case);
                    let mut r2 = ChaCha8Rng::seed_from_u64(case);
                    (
                        select_batch_dpp_with_mean(&a, &frozen, &cfg, alg.rule(), mode, 2, &UcbMaxEstimator, &mut r1).unwrap(),
                        select_batch_dpp_with_mean(&b, &frozen, &cfg, alg.rule(), mode, 2, &UcbMaxEstimator, &mut r2).unwrap(),
                    )
                }
            };
            let same = da.indices == db.indices
                && da.beta.to_bits() == db.beta.to_bits()
                && da.region == db.region
                && da.kernel == db.kernel
                && da.conditional_std.iter().map(|v| v.to_bits()).eq(db.conditional_std.iter().map(|v| v.to_bits()));
            if !same {
                differing += 1;
            }
        }
    }
    outcome(differing == 0, format!("100 instances x 6 strategies, {differing} differing decisions"))
}

fn incremental_gp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let params = KernelParams::new(
            rng.random_range(0.5..2.0),
            (0..dim).map(|_| rng.random_range(0.1..0.8)).collect(),
        )
        .unwrap();
        let noise = 10f64.powf(rng.random_range(-2.0..0.0));
        let n = rng.random_range(1..=50);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut state = PosteriorState::new(params.clone(), noise).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            state = state.incremental_update(x, *y).unwrap();
        }
        for _ in 0..10 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let (m1, v1) = state.posterior_mean_var(&q).unwrap();
            let (m2, v2) = dense_posterior(&params, noise, &xs, &ys, &q);
            let scale = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            worst = worst.max(scale(m1, m2)).max(scale(v1, v2));
        }
    }
    outcome(worst <= 1e-8, format!("100 sequences, max relative error {worst:.2e}"))
}

fn information_gain_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let m = rng.random_range(1..=50);
        let rank = rng.random_range(1..=m);
        let k = random_psd(&mut rng, m, rank);
        let noise = 10f64.powf(rng.random_range(-2.0..1.0));
        let a = information_gain(&k, noise).unwrap();
        let b = information_gain_spectral(&k, noise).unwrap();
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    let (mut exact, mut worst_ratio) = (0, 1.0f64);
    for _ in 0..40 {
        let dim = rng.random_range(1..=2);
        let size = rng.random_range(3..=12);
        let grid = std::sync::Arc::new(
            DomainGrid::new((0..size).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()).unwrap(),
        );
        let params = KernelParams::new(1.0, vec![rng.random_range(0.1..0.6); dim]).unwrap();
        let noise = 10f64.powf(rng.random_range(-2.0..0.0));
        let t = rng.random_range(1..=3);
        let g = greedy_gamma(&grid, &params, noise, t).unwrap();
        let e = exhaustive_gamma(&grid, &params, noise, t);
        if rel_close(g, e, 1e-9) {
            exact += 1;
        }
        worst_ratio = worst_ratio.min(g / e);
    }
    outcome(
        worst <= 1e-9 && worst_ratio >= 1.0 - (-1.0f64).exp(),
        format!(
            "forms agree to {worst:.2e}; greedy gamma exact on {exact}/40 grids, worst ratio {worst_ratio:.4}"
        ),
    )
}

fn branin_config(seeds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(FunctionId::Branin);
    cfg.objective.noise_std = Some(BRANIN_NOISE_STD);
    cfg.kernel = Some(KernelConfig {
        signal_variance: BRANIN_SIGNAL_VARIANCE,
        lengthscales: vec![BRANIN_LENGTHSCALE; 2],
    });
    cfg.batch_sizes = vec![5];
    cfg.iterations = 20;
    cfg.seeds = seeds;
    cfg.regret_multiplier = 1.0;
    cfg.init_budget = 0;
    cfg.validate().unwrap();
    cfg
}

fn final_medians(rows: &[ResultRow], iterations: usize) -> Vec<(String, f64)> {
    Algorithm::ALL
        .iter()
        .map(|a| {
            let finals: Vec<f64> = rows
                .iter()
                .filter(|r| r.strategy == a.name() && r.iteration == iterations)
                .map(|r| r.immediate_regret)
                .collect();
            (a.name().to_string(), median(&finals))
        })
        .collect()
}

fn branin_regret(workers: usize) -> (Outcome, Vec<ResultRow>) {
    let cfg = branin_config(50);
    let range = dppbo_core::Objective::new(cfg.objective.clone()).unwrap().range();
    let table = run_experiment(&cfg, workers).unwrap();
    assert!(table.failures.is_empty(), "{:?}", table.failures);
    let meds = final_medians(&table.rows, cfg.iterations);
    let get = |name: &str| meds.iter().find(|(n, _)| n == name).unwrap().1;
    let all_small = meds.iter().all(|(_, m)| *m < 0.1 * range);
    let mut ordered = get("ucb-dpp-sample") <= get("bucb");
    let mut detail = meds
        .iter()
        .map(|(n, m)| format!("{n}={m:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    detail.push_str(&format!(" (10% of range = {:.4})", 0.1 * range));
    if !ordered {
        let cfg100 = branin_config(100);
        let rerun = run_experiment(&cfg100, workers).unwrap();
        let meds100 = final_medians(&rerun.rows, cfg100.iterations);
        let get100 = |name: &str| meds100.iter().find(|(n, _)| n == name).unwrap().1;
        ordered = get100("ucb-dpp-sample") <= get100("bucb");
        detail.push_str(&format!(
            "; 100-seed re-run: ucb-dpp-sample={:.4} bucb={:.4}",
            get100("ucb-dpp-sample"),
            get100("bucb")
        ));
    }
    (outcome(all_small && ordered, detail), table.rows)
}

fn regret_columns(rows: &[ResultRow]) -> Vec<(String, usize, u64, usize, u64, u64)> {
    rows.iter()
        .map(|r| {
            (
                r.strategy.clone(),
                r.batch_size,
                r.seed,
                r.iteration,
                r.immediate_regret.to_bits(),
                r.cumulative_regret.to_bits(),
            )
        })
        .collect()
}

fn main() {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut results: Vec<(&str, Duration, Duration, Outcome)> = Vec::new();
    let mut timed = |name: &'static str, budget_s: u64, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let line = (name, elapsed, Duration::from_secs(budget_s), o);
        print_line(&line);
        results.push(line);
    };
    timed("1 schur identity", 60, &schur_identity);
    timed("2 dpp-max equals ucb-pe", 60, &dpp_max_is_ucb_pe);
    timed("3 exact k-dpp sampler", 120, &exact_sampler);
    timed("4 mcmc k-dpp sampler", 120, &mcmc_sampler);
    timed("5 entropy identity", 60, &entropy_identity);
    timed("6 frozen-mean invariance", 60, &frozen_mean_invariance);
    timed("7 incremental gp", 30, &incremental_gp);
    timed("8 information gain", 30, &information_gain_forms);

    let start = Instant::now();
    let (regret, first_rows) = branin_regret(workers);
    let regret_time = start.elapsed();
    let start = Instant::now();
    let second = run_experiment(&branin_config(50), workers.max(2) - 1).unwrap();
    let same = regret_columns(&first_rows) == regret_columns(&second.rows);
    let determinism = outcome(
        same,
        format!("{} rows compared bitwise across two sweeps", first_rows.len()),
    );
    let total = regret_time + start.elapsed();
    for line in [
        ("9 branin regret", regret_time, Duration::from_secs(900), regret),
        ("10 determinism", total, Duration::from_secs(900), determinism),
    ] {
        print_line(&line);
        results.push(line);
    }

    let failed = results.iter().filter(|(_, e, b, o)| !(o.pass && e <= b)).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn print_line((name, elapsed, budget, o): &(&str, Duration, Duration, Outcome)) {
    let status = if o.pass && elapsed <= budget { "PASS" } else { "FAIL" };
    println!(
        "{status} {name:<28} {:>7.1}s (limit {}s)  {}",
        elapsed.as_secs_f64(),
        budget.as_secs(),
        o.detail
    );
}
