//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --test acceptance` (add `--release` for speed).

use std::time::Instant;

use dbreg::kernel::euclidean_distances;
use dbreg::null_dist::bootstrap_draws;
use dbreg::permutation::{timing_benchmark, PermutationOracle};
use dbreg::rng::stream;
use dbreg::sim::{
    binomial_se, run_cell, run_consistency_check, run_size_experiment, synthetic_null_data, ConsistencySpec,
    Correlation, PowerRow, ScenarioSpec,
};
use dbreg::{
    bootstrap_pvalue, center, cumulants, distance_to_similarity, fit_box_chi2, fit_generalized_gamma, gram_linear,
    matrix_sqrt, tail_pvalue_gamma, CenteredEigen, DesignMatrix, Error, Kernel, Method, NullSpectrum,
    PermutationPlan, ResponseMatrix,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const CELLS: [(&str, Correlation); 4] = [
    ("model 1, rho 0.3", Correlation { kind: dbreg::sim::CorrelationKind::Ar1, rho: 0.3 }),
    ("model 1, rho 0.8", Correlation { kind: dbreg::sim::CorrelationKind::Ar1, rho: 0.8 }),
    ("model 2, rho 0.3", Correlation { kind: dbreg::sim::CorrelationKind::Equal, rho: 0.3 }),
    ("model 2, rho 0.8", Correlation { kind: dbreg::sim::CorrelationKind::Equal, rho: 0.8 }),
];

/// Null p-values for the four size cells (criteria 1 and 2).
fn size_curves() -> Vec<(&'static str, dbreg::sim::SizeCurve)> {
    CELLS
        .iter()
        .enumerate()
        .map(|(i, &(label, model))| {
            let spec = ScenarioSpec { b: 1000, ..ScenarioSpec::standard(model, 0.0, 2000, 1000 + i as u64) };
            (label, run_size_experiment(&spec, &[0.05]).expect("size experiment"))
        })
        .collect()
}

fn size_calibration(curves: &[(&str, dbreg::sim::SizeCurve)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, c) in curves {
        let ok = [c.size_pseudo[0], c.size_sqrt[0]].iter().all(|s| (0.035..=0.065).contains(s));
        pass &= ok;
        parts.push(format!("{label}: {:.3}/{:.3}", c.size_pseudo[0], c.size_sqrt[0]));
    }
    outcome(pass, format!("size at 0.05 (pseudo/sqrt) in [0.035, 0.065]; {}", parts.join("; ")))
}

fn uniform_pvalues(curves: &[(&str, dbreg::sim::SizeCurve)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, c) in curves {
        pass &= c.ks_pseudo <= 0.05 && c.ks_sqrt <= 0.05;
        parts.push(format!("{label}: {:.3}/{:.3}", c.ks_pseudo, c.ks_sqrt));
    }
    outcome(pass, format!("KS distance (pseudo/sqrt) <= 0.05; {}", parts.join("; ")))
}

fn power_cell(model: Correlation, tau: f64, seed: u64) -> PowerRow {
    let spec = ScenarioSpec { b: 1000, ..ScenarioSpec::standard(model, tau, 500, seed) };
    run_cell(&spec).expect("power cell")
}

/// `better` beats `worse` unless reversed by more than two standard errors.
fn direction_holds(better: (f64, f64), worse: (f64, f64)) -> bool {
    better.0 - worse.0 >= -2.0 * (better.1.powi(2) + worse.1.powi(2)).sqrt()
}

fn power_reversal() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    let main = power_cell(Correlation::equal(0.8), 0.2, 3000);
    pass &= main.rate_sqrt >= 0.95 && main.rate_pseudo <= 0.45;
    parts.push(format!("model 2, rho 0.8, tau 0.2: sqrt {:.3} pseudo {:.3}", main.rate_sqrt, main.rate_pseudo));

    let mut seed = 3100;
    for model in [Correlation::ar1(0.8), Correlation::equal(0.8)] {
        for tau in [0.2, 0.4, 0.6] {
            seed += 1;
            let row = if model == Correlation::equal(0.8) && tau == 0.2 { main.clone() } else { power_cell(model, tau, seed) };
            let ok = direction_holds((row.rate_sqrt, row.se_sqrt), (row.rate_pseudo, row.se_pseudo));
            pass &= ok;
            if !ok {
                parts.push(format!("sqrt < pseudo at {:?} tau {tau}", model));
            }
        }
    }
    for tau in [0.4, 0.6, 0.8, 1.0] {
        seed += 1;
        let row = power_cell(Correlation::ar1(0.3), tau, seed);
        let ok = direction_holds((row.rate_pseudo, row.se_pseudo), (row.rate_sqrt, row.se_sqrt));
        pass &= ok;
        parts.push(format!("model 1, rho 0.3, tau {tau}: pseudo {:.3} sqrt {:.3}", row.rate_pseudo, row.rate_sqrt));
    }
    outcome(pass, parts.join("; "))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn oracle_agreement() -> Outcome {
    let mut boot = [Vec::new(), Vec::new()];
    let mut perm = [Vec::new(), Vec::new()];
    let mut worst: f64 = 0.0;
    for d in 0..50u64 {
        let (y, x) = synthetic_null_data(200, 10, 5, 4000 + d).expect("data");
        let design = DesignMatrix::new(x).expect("design");
        let s = Kernel::Linear.similarity(&ResponseMatrix::new(y).expect("y")).expect("kernel");
        let eig = CenteredEigen::from_similarity(&s);
        let spec = NullSpectrum::from_eigen(&eig, &design).expect("spectrum");
        let oracle = PermutationOracle::new(&eig, &design).expect("oracle");
        let p = oracle.sampled(&PermutationPlan::new(2000, 5000 + d).unwrap()).expect("permutation");
        for (slot, method) in Method::BOTH.into_iter().enumerate() {
            let b = bootstrap_pvalue(oracle.observed(method), &spec, method, 2000, 6000 + d).expect("bootstrap");
            worst = worst.max((b - p.get(method)).abs());
            boot[slot].push(b);
            perm[slot].push(p.get(method));
        }
    }
    let rho = [spearman(&boot[0], &perm[0]), spearman(&boot[1], &perm[1])];
    outcome(
        worst <= 0.05 && rho.iter().all(|&r| r >= 0.95),
        format!("max |p_boot - p_perm| = {worst:.4} (<= 0.05); Spearman pseudo {:.4}, sqrt {:.4} (>= 0.95)", rho[0], rho[1]),
    )
}

fn random_spectrum(rng: &mut impl Rng) -> NullSpectrum {
    let len = rng.random_range(5..=40);
    let decay: f64 = rng.random_range(0.02..1.0);
    let eig: Vec<f64> = (0..len).map(|i| (-decay * i as f64).exp() * rng.random_range(0.5..1.5)).collect();
    let m = rng.random_range(1..=6);
    let factor = rng.random_range(0.05..=1.0);
    NullSpectrum::new(&eig, m, factor).expect("spectrum")
}

fn moment_matching() -> Outcome {
    let mut rng = stream(7000, 0);
    let mut fits = 0usize;
    let mut converged = 0usize;
    let mut worst_cumulant: f64 = 0.0;
    let mut worst_box: f64 = 0.0;
    let mut worst_tail: f64 = 0.0;
    let mut clean_fallback = true;
    for s in 0..100u64 {
        let spec = random_spectrum(&mut rng);
        for method in Method::BOTH {
            fits += 1;
            let c = cumulants(&spec, method);
            let boxed = fit_box_chi2(&c).expect("box fit");
            let (c1, c2) = (boxed.scale * boxed.df, 2.0 * boxed.scale.powi(2) * boxed.df);
            worst_box = worst_box.max(((c1 - c.values[0]) / c.values[0]).abs()).max(((c2 - c.values[1]) / c.values[1]).abs());
            match fit_generalized_gamma(&c) {
                Ok(fit) => {
                    converged += 1;
                    let got = fit.params.cumulants();
                    for l in 0..4 {
                        worst_cumulant = worst_cumulant.max(((got[l] - c.values[l]) / c.values[l]).abs());
                    }
                    let mut draws = bootstrap_draws(&spec, method, 100_000, 8000 + s);
                    draws.sort_by(f64::total_cmp);
                    for q in [0.90, 0.95, 0.99] {
                        let t = draws[(q * draws.len() as f64) as usize];
                        let p_boot = draws.iter().filter(|&&d| d >= t).count() as f64 / draws.len() as f64;
                        worst_tail = worst_tail.max((tail_pvalue_gamma(t, &fit.params) - p_boot).abs());
                    }
                }
                Err(Error::GammaFitFailed { .. }) => {
                    clean_fallback &= bootstrap_pvalue(c.values[0], &spec, method, 1000, s).is_ok();
                }
                Err(_) => clean_fallback = false,
            }
        }
    }
    let rate = converged as f64 / fits as f64;
    outcome(
        rate >= 0.90 && worst_cumulant <= 1e-6 && worst_box <= 1e-12 && worst_tail <= 0.01 && clean_fallback,
        format!(
            "converged {converged}/{fits} ({rate:.3} >= 0.90); cumulant rel err {worst_cumulant:.2e} (<= 1e-6); \
             box rel err {worst_box:.2e}; tail |p_gamma - p_boot| {worst_tail:.4} (<= 0.01); clean fallback {clean_fallback}"
        ),
    )
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, rank);
    let s = &a * a.transpose();
    (&s + s.transpose()) * 0.5
}

fn numerical_kernels() -> Outcome {
    let mut rng = stream(9000, 0);

    let mut worst_sqrt: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let rank = rng.random_range(1..=n);
        let a = random_psd(&mut rng, n, rank);
        let b = matrix_sqrt(&a).expect("sqrt");
        worst_sqrt = worst_sqrt.max((&b * &b - &a).norm() / a.norm());
    }

    let mut worst_gower: f64 = 0.0;
    for _ in 0..20 {
        let (n, k) = (rng.random_range(3..=60), rng.random_range(1..=8));
        let y = ResponseMatrix::new(random_matrix(&mut rng, n, k)).unwrap();
        let gower = distance_to_similarity(&euclidean_distances(&y));
        worst_gower = worst_gower.max((gower.similarity.matrix() - center(&gram_linear(&y)).matrix()).abs().max());
    }

    let mut eigen_violations = 0;
    let mut trace_violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=10);
        let (r1, r2) = (rng.random_range(1..=n), rng.random_range(1..=n));
        let d = random_psd(&mut rng, n, r1) * random_psd(&mut rng, n, r2);
        let scale = d.norm().max(1.0);
        if d.complex_eigenvalues().iter().any(|z| z.re < -1e-8 * scale) {
            eigen_violations += 1;
        }
        let lhs = (d.transpose() * &d).trace();
        if lhs > d.trace().powi(2) + 1e-8 {
            trace_violations += 1;
        }
    }

    outcome(
        worst_sqrt <= 1e-8 && worst_gower <= 1e-10 && eigen_violations == 0 && trace_violations == 0,
        format!(
            "sqrt residual {worst_sqrt:.2e} (<= 1e-8); Gower identity {worst_gower:.2e} (<= 1e-10); \
             product eigenvalue violations {eigen_violations}/1000; tr(DᵀD) <= tr(D)² violations {trace_violations}/1000"
        ),
    )
}

fn speed() -> Outcome {
    let report = timing_benchmark(500, 1000, Kernel::Linear, 1).expect("benchmark");
    outcome(
        report.ratio >= 50.0,
        format!(
            "bootstrap {:.4}s, permutation {:.4}s, ratio {:.1} (>= 50)",
            report.t_parametric_s, report.t_permutation_s, report.ratio
        ),
    )
}

fn consistency() -> Outcome {
    let spec = ConsistencySpec {
        n_grid: vec![100, 200, 400, 800],
        beta: ConsistencySpec::single_effect(5, 10, 0.4),
        x_model: Correlation::ar1(0.5),
        model: Correlation::ar1(0.3),
        replicates: 500,
        b: 1000,
        alpha: 0.05,
        seed: 10_000,
    };
    let curve = run_consistency_check(&spec).expect("consistency");
    let last = curve.n_grid.len() - 1;
    let pass = curve.is_monotone_within(2.0) && curve.power_pseudo[last] >= 0.99 && curve.power_sqrt[last] >= 0.99;
    outcome(
        pass,
        format!(
            "n {:?}: pseudo {:?}, sqrt {:?} (monotone within 2 SE = {:.3} at 0.5, >= 0.99 at n = 800)",
            curve.n_grid,
            curve.power_pseudo,
            curve.power_sqrt,
            2.0 * binomial_se(0.5, spec.replicates)
        ),
    )
}

fn main() {
    let start = Instant::now();
    let curves = size_curves();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("size calibration", Box::new(|| size_calibration(&curves))),
        ("uniform null p-values", Box::new(|| uniform_pvalues(&curves))),
        ("power reversal at high correlation", Box::new(power_reversal)),
        ("bootstrap vs permutation agreement", Box::new(oracle_agreement)),
        ("moment-matching fidelity", Box::new(moment_matching)),
        ("numerical kernels", Box::new(numerical_kernels)),
        ("speed", Box::new(speed)),
        ("consistency", Box::new(consistency)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += !o.pass as usize;
        println!("criterion {} [{name}]: {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
