//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always reach the test log.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use lab_core::distributions::{PeriodDistribution, ServiceDistribution};
use lab_core::gaussian::{fbm_path, reflect, SampledPath, TimeGrid};
use lab_core::harness::{self, Experiment, ExperimentConfig, HurstConfig};
use lab_core::limits::limit_params;
use lab_core::queue::simulate_queue_with_work;
use lab_core::rng::derive_stream;
use lab_core::sources::{arrivals_direct, BinarySourcePath};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const SEED: u64 = 20261019;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn exp1() -> PeriodDistribution {
    PeriodDistribution::exponential(1.0).unwrap()
}

fn pareto15() -> PeriodDistribution {
    PeriodDistribution::pareto(1.5, 1.0).unwrap()
}

fn seeded() -> ExperimentConfig {
    ExperimentConfig { seed: Some(SEED), ..ExperimentConfig::default() }
}

// 1. Direct and modulated arrival counts agree in law.
fn lemma1() -> Verdict {
    let cfg = ExperimentConfig { sources: 3, times: vec![2.0, 5.0, 10.0], horizon: 10.0, replications: 10_000, ..seeded() };
    let out = harness::run(Experiment::Lemma1, &cfg).unwrap();
    let detail = out
        .rows
        .iter()
        .map(|r| format!("t={}: KS={:.4} < {:.4}", r.t, r.statistic, r.critical.unwrap()))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(out.passed, detail)
}

// 2. Sup-formula reflection against the increment recursion.
fn reflection_oracle() -> Verdict {
    let mut rng = derive_stream(SEED, &["acceptance", "reflection"]);
    let grid = TimeGrid::new(0.01, 1000).unwrap();
    let mut worst = 0.0f64;
    let mut worst_comp = 0.0f64;
    for _ in 0..1000 {
        let drift: f64 = rng.random_range(-1.0..1.0);
        let start: f64 = rng.random_range(-0.5..0.5);
        let mut x = start;
        let values: Vec<f64> = (0..1000)
            .map(|k| {
                if k > 0 {
                    x += drift * 0.01 + 0.1 * rng.sample::<f64, _>(StandardNormal);
                }
                x
            })
            .collect();
        let path = SampledPath::new(grid, values.clone()).unwrap();
        let r = reflect(&path);
        let mut q = values[0].max(0.0);
        let mut comp = 0.0;
        for k in 0..values.len() {
            if k > 0 {
                q = (q + values[k] - values[k - 1]).max(0.0);
                let d = r.regulator.values()[k] - r.regulator.values()[k - 1];
                comp += r.reflected.values()[k] * d;
            }
            worst = worst.max((q - r.reflected.values()[k]).abs());
        }
        worst_comp = worst_comp.max(comp.abs());
    }
    verdict(
        worst <= 1e-12 && worst_comp < 1e-9,
        format!("max |sup - recursion| = {worst:.2e} (<= 1e-12), complementarity = {worst_comp:.2e} (< 1e-9)"),
    )
}

// 3. Event engine against the workload recursion, and the M/D/1 mean.
fn queue_oracle() -> Verdict {
    let mut rng = derive_stream(SEED, &["acceptance", "lindley"]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..400);
        let rate: f64 = rng.random_range(0.2..3.0);
        let mu: f64 = rng.random_range(0.5..3.0);
        let gaps = Exp::new(rate).unwrap();
        let mut t = 0.0;
        let epochs: Vec<f64> = (0..n)
            .map(|_| {
                t += gaps.sample(&mut rng);
                t
            })
            .collect();
        let work: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let grid = TimeGrid::covering(0.05, (t + 5.0).ceil()).unwrap();
        let (trace, _) = simulate_queue_with_work(&epochs, &work, mu, grid).unwrap();
        // Unfinished work right after each arrival, drained at rate 1 between arrivals.
        let mut k = 0;
        let mut w = 0.0;
        let mut last = 0.0;
        for (i, g) in grid.times().enumerate() {
            while k < epochs.len() && epochs[k] <= g {
                w = (w - (epochs[k] - last)).max(0.0) + work[k] / mu;
                last = epochs[k];
                k += 1;
            }
            let oracle = (w - (g - last)).max(0.0);
            worst = worst.max((oracle - trace.workload[i]).abs());
        }
    }

    let horizon = 1e5;
    let always_on = BinarySourcePath::new(true, Vec::new(), horizon).unwrap();
    let arrivals = arrivals_direct(&always_on, 0.5, &mut derive_stream(SEED, &["acceptance", "md1"])).unwrap();
    let grid = TimeGrid::covering(0.1, horizon).unwrap();
    let work = vec![1.0; arrivals.len()];
    let (trace, _) = simulate_queue_with_work(arrivals.epochs(), &work, 1.0, grid).unwrap();
    let mean_q = trace.queue_length.iter().map(|&q| q as f64).sum::<f64>() / trace.queue_length.len() as f64;
    let pk = 0.75;
    let rel = (mean_q - pk).abs() / pk;
    verdict(
        worst <= 1e-9 && rel <= 0.05,
        format!("max workload gap = {worst:.2e} (<= 1e-9); M/D/1 mean queue = {mean_q:.4} vs 0.75 (rel {rel:.3} <= 0.05)"),
    )
}

/// Γ(z) by trapezoidal quadrature of `exp(z s - e^s)` over `s = ln t`.
fn gamma_quadrature(z: f64) -> f64 {
    let (lo, hi, n) = (-80.0, 6.0, 200_000);
    let h = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let s = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (z * s - s.exp()).exp()
        })
        .sum::<f64>()
        * h
}

// 4. Limit constants against independent closed forms and quadrature.
fn parameter_calculus() -> Verdict {
    let light = limit_params(&exp1(), &exp1());
    // Two-state Markov chain with rates r_on = r_off = 1: variance slope 2 r_on^2 r_off^2 / (r_on + r_off)^3.
    let markov = 2.0 * 1.0 * 1.0 / 8.0;
    let heavy = limit_params(&pareto15(), &exp1());
    let a_on = gamma_quadrature(0.5) / 0.5;
    let oracle = 2.0 * 1.0 * a_on / (8.0 * gamma_quadrature(2.5));
    let errs = [
        (light.pi_squared - 0.25).abs(),
        (light.pi_squared - markov).abs(),
        (light.hurst - 0.5).abs(),
        (heavy.pi_squared - 2.0 / 3.0).abs(),
        (heavy.pi_squared - oracle).abs(),
        (heavy.hurst - 0.75).abs(),
        (heavy.a_on - a_on).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    verdict(
        worst <= 1e-6,
        format!(
            "exp/exp pi^2={} H={}; pareto/exp pi^2={} (quadrature {oracle:.9}) H={}; max err {worst:.1e}",
            light.pi_squared, light.hurst, heavy.pi_squared, heavy.hurst
        ),
    )
}

// 5. Variance of the scaled ON time.
fn ttilde_variance() -> Verdict {
    let cfg = ExperimentConfig {
        sources: 1000,
        replications: 1000,
        times: vec![5.0, 10.0, 20.0],
        horizon: 20.0,
        grid_step: 0.5,
        tolerance: 0.05,
        slope_tolerance: 0.10,
        ..seeded()
    };
    let out = harness::run(Experiment::VarianceCurve, &cfg).unwrap();
    let detail = out
        .rows
        .iter()
        .map(|r| format!("t={} {}: {:.4} vs {:.4}", r.t, r.experiment, r.statistic, r.critical.unwrap()))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(out.passed, detail)
}

// 6. FBM covariance and variance growth.
fn fbm_generator() -> Verdict {
    let grid = TimeGrid::new(1.0, 9).unwrap();
    let paths = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for h in [0.5, 0.75] {
        let mut rng = derive_stream(SEED, &["acceptance".to_string(), format!("fbm-{h}")]);
        let samples: Vec<Vec<f64>> =
            (0..paths).map(|_| fbm_path(h, grid, &mut rng).unwrap().values()[1..].to_vec()).collect();
        let mut worst_z = 0.0f64;
        for i in 0..8 {
            for j in 0..=i {
                let (t, s) = ((i + 1) as f64, (j + 1) as f64);
                let exact = 0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
                let prods: Vec<f64> = samples.iter().map(|x| x[i] * x[j]).collect();
                let mean = prods.iter().sum::<f64>() / paths as f64;
                let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
                worst_z = worst_z.max((mean - exact).abs() / (var / paths as f64).sqrt());
            }
        }
        let (lx, ly): (Vec<f64>, Vec<f64>) = (0..8)
            .map(|i| {
                let v = samples.iter().map(|x| x[i] * x[i]).sum::<f64>() / paths as f64;
                (((i + 1) as f64).ln(), v.ln())
            })
            .unzip();
        let slope = ols_slope(&lx, &ly);
        ok &= worst_z <= 4.0 && (slope - 2.0 * h).abs() <= 0.05;
        parts.push(format!("H={h}: max |z|={worst_z:.2} (<= 4), slope={slope:.4} vs {}", 2.0 * h));
    }
    verdict(ok, parts.join("; "))
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn convergence_detail(out: &harness::RunOutcome) -> String {
    out.rows
        .iter()
        .map(|r| format!("{}@t={}: {:.4}", r.size, r.t, r.statistic))
        .collect::<Vec<_>>()
        .join(", ")
}

// 7. N-ladder marginal convergence, with deterministic and exponential service.
fn theorem1() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, service) in [("sigma_v^2=0", ServiceDistribution::Deterministic), ("sigma_v^2=1", ServiceDistribution::Exponential)] {
        let cfg = ExperimentConfig {
            service,
            n_ladder: vec![10, 100, 1000],
            times: vec![2.0, 5.0],
            horizon: 5.0,
            replications: 500,
            limit_replications: 2000,
            grid_step: 0.01,
            limit_grid_step: Some(0.005),
            ..seeded()
        };
        let out = harness::run(Experiment::Theorem1, &cfg).unwrap();
        ok &= out.passed;
        let crit = out.rows[0].critical.unwrap();
        parts.push(format!("{label}: {} (2x critical {:.4})", convergence_detail(&out), 2.0 * crit));
    }
    verdict(ok, parts.join("; "))
}

// 8. R-ladder marginal convergence towards the reflected FBM limit.
fn theorem2() -> Verdict {
    let cfg = ExperimentConfig {
        on: pareto15(),
        off: exp1(),
        r_ladder: vec![10.0, 30.0, 100.0],
        times: vec![1.0],
        horizon: 1.0,
        replications: 300,
        limit_replications: 2000,
        grid_step: 0.01,
        limit_grid_step: Some(0.001),
        ..seeded()
    };
    let out = harness::run(Experiment::Theorem2, &cfg).unwrap();
    verdict(out.passed, format!("KS by R: {}", convergence_detail(&out)))
}

// 9. Sup-gap between scaled queue length and workload shrinks with N.
fn collapse() -> Verdict {
    let cfg = ExperimentConfig { n_ladder: vec![10, 100, 1000], replications: 200, horizon: 5.0, grid_step: 0.01, ..seeded() };
    let out = harness::run(Experiment::Collapse, &cfg).unwrap();
    let detail = out.rows.iter().map(|r| format!("N={}: {:.4}", r.size, r.statistic)).collect::<Vec<_>>().join(", ");
    verdict(out.passed, format!("median sup-gap {detail}"))
}

// 10. Hurst recovery on fGn and on arrival counts from alpha = 1.5 sources.
fn hurst() -> Verdict {
    let cfg = ExperimentConfig {
        on: pareto15(),
        off: pareto15(),
        sources: 10,
        lambda: 1.0,
        hurst: HurstConfig::default(),
        ..seeded()
    };
    let out = harness::run(Experiment::Hurst, &cfg).unwrap();
    let detail = out
        .rows
        .iter()
        .map(|r| format!("{} target {}: {:.4}", r.experiment, r.t, r.statistic))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(out.passed, detail)
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

// 11. Byte-identical artifacts across re-runs and worker counts.
fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (Experiment::Simulate, ExperimentConfig { sources: 50, export_arrivals: true, ..seeded() }),
        (Experiment::Lemma1, ExperimentConfig { sources: 3, replications: 300, ..seeded() }),
        (
            Experiment::Theorem1,
            ExperimentConfig {
                n_ladder: vec![10, 50],
                replications: 40,
                limit_replications: 40,
                export_paths: 3,
                grid_step: 0.05,
                ..seeded()
            },
        ),
        (
            Experiment::Theorem2,
            ExperimentConfig {
                on: pareto15(),
                off: exp1(),
                r_ladder: vec![4.0, 8.0],
                times: vec![1.0],
                horizon: 1.0,
                replications: 30,
                limit_replications: 30,
                export_paths: 2,
                ..seeded()
            },
        ),
        (Experiment::Collapse, ExperimentConfig { n_ladder: vec![10, 40], replications: 30, ..seeded() }),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (exp, cfg) in cases {
        let mut trees = Vec::new();
        for (run, workers) in [1usize, 4, 4].into_iter().enumerate() {
            let dir = tmp.path().join(format!("{}-{run}", exp.name()));
            let cfg = ExperimentConfig { workers: Some(workers), output: Some(dir.clone()), ..cfg.clone() };
            harness::run(exp, &cfg).unwrap();
            trees.push(read_tree(&dir));
        }
        files += trees[0].len();
        if trees.iter().any(|t| t != &trees[0]) || !trees[0].keys().any(|k| k.ends_with(".csv")) {
            mismatches.push(exp.name());
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{files} artifacts compared over runs with 1, 4, 4 workers; mismatches: {mismatches:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 arrival-construction equality", lemma1),
        ("2 reflection oracle", reflection_oracle),
        ("3 queue-engine oracle", queue_oracle),
        ("4 parameter calculus", parameter_calculus),
        ("5 scaled ON-time variance", ttilde_variance),
        ("6 FBM generator", fbm_generator),
        ("7 N-ladder marginal convergence", theorem1),
        ("8 R-ladder marginal convergence", theorem2),
        ("9 queue/workload collapse", collapse),
        ("10 Hurst recovery", hurst),
        ("11 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {name} [{secs:.1}s]: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
