mod common;

use lab_core::distributions::PeriodDistribution;
use lab_core::rng::{derive_stream, StreamKey};
use lab_core::sources::{arrivals_direct, arrivals_modulated, simulate_source, superpose, ArrivalStream};
use lab_core::stats::ks_two_sample;
use rand::Rng;

fn exp(mean: f64) -> PeriodDistribution {
    PeriodDistribution::exponential(mean).unwrap()
}

#[test]
fn stationary_on_probability() {
    // γ = 1 / (1 + 3) = 0.25, at the start and long after.
    let (on, off) = (exp(1.0), exp(3.0));
    let mut rng = derive_stream(21, &["stationary"]);
    let n = 40_000;
    let (mut at0, mut at50) = (0usize, 0usize);
    for _ in 0..n {
        let p = simulate_source(&on, &off, 50.0, &mut rng);
        at0 += usize::from(p.state(0.0));
        at50 += usize::from(p.state(50.0));
    }
    let se = (0.25f64 * 0.75 / n as f64).sqrt();
    for (label, hits) in [("t=0", at0), ("t=50", at50)] {
        let p = hits as f64 / n as f64;
        assert!((p - 0.25).abs() < 4.0 * se, "{label}: {p}");
    }
}

#[test]
fn heavy_tailed_sources_start_stationary() {
    let (on, off) = (PeriodDistribution::pareto(1.5, 1.0).unwrap(), exp(1.0));
    let mut rng = derive_stream(22, &["stationary-heavy"]);
    let n = 40_000;
    let hits = (0..n).filter(|_| simulate_source(&on, &off, 20.0, &mut rng).state(20.0) == 1).count();
    let p = hits as f64 / n as f64;
    assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{p}");
}

#[test]
fn superposition_is_additive() {
    let (on, off) = (PeriodDistribution::pareto(1.4, 2.0).unwrap(), exp(1.0));
    let mut rng = derive_stream(23, &["additive"]);
    let paths: Vec<_> = (0..25).map(|_| simulate_source(&on, &off, 30.0, &mut rng)).collect();
    let sup = superpose(&paths).unwrap();
    for k in 0..=300 {
        let t = k as f64 * 0.1;
        let active: u32 = paths.iter().map(|p| u32::from(p.state(t))).sum();
        assert_eq!(sup.active(t), active, "t={t}");
        let total: f64 = paths.iter().map(|p| p.cumulative_on_time(t).unwrap()).sum();
        assert!((sup.cumulative_on_time(t).unwrap() - total).abs() < 1e-9, "t={t}");
    }
}

#[test]
fn arrival_rate_is_lambda_gamma() {
    let (on, off) = (exp(1.0), exp(3.0));
    let key = StreamKey::new(24);
    let (lambda, t, reps) = (2.0, 10.0, 4000u64);
    let mut direct = Vec::new();
    let mut modulated = Vec::new();
    for r in 0..reps {
        let mut rng = key.with(r).rng();
        let paths: Vec<_> = (0..4).map(|_| simulate_source(&on, &off, t, &mut rng)).collect();
        let streams: Vec<_> = paths.iter().map(|p| arrivals_direct(p, lambda, &mut rng).unwrap()).collect();
        direct.push(ArrivalStream::merge(&streams).unwrap().count(t) as f64);
        let sup = superpose(&paths).unwrap();
        modulated.push(arrivals_modulated(&sup, lambda, &mut rng).unwrap().count(t) as f64);
    }
    // E A(t) = N λ γ t = 4 · 2 · 0.25 · 10.
    for xs in [&direct, &modulated] {
        let m = common::mean(xs);
        let se = (common::variance(xs) / reps as f64).sqrt();
        assert!((m - 20.0).abs() < 4.0 * se, "mean {m} se {se}");
    }
}

#[test]
fn arrivals_only_while_on() {
    let (on, off) = (exp(1.0), exp(1.0));
    let mut rng = derive_stream(25, &["on-only"]);
    for _ in 0..200 {
        let p = simulate_source(&on, &off, 20.0, &mut rng);
        let a = arrivals_direct(&p, 3.0, &mut rng).unwrap();
        assert!(a.epochs().iter().all(|&e| p.state(e) == 1 || p.epochs().contains(&e)));
        let sup = superpose(std::slice::from_ref(&p)).unwrap();
        let m = arrivals_modulated(&sup, 3.0, &mut rng).unwrap();
        assert!(m.epochs().windows(2).all(|w| w[0] < w[1]));
        assert!(m.epochs().iter().all(|&e| p.state(e) == 1 || p.epochs().contains(&e)));
    }
}

#[test]
fn distinct_labels_give_unrelated_streams() {
    let a: Vec<f64> = {
        let mut r = derive_stream(26, &["x", "0"]);
        (0..10_000).map(|_| r.random::<f64>()).collect()
    };
    let b: Vec<f64> = {
        let mut r = derive_stream(26, &["x", "1"]);
        (0..10_000).map(|_| r.random::<f64>()).collect()
    };
    assert!(!ks_two_sample(&a, &b).unwrap().rejects());
    assert!(common::correlation(&a, &b).abs() < 4.0 / 100.0);
    let again: Vec<f64> = {
        let mut r = derive_stream(26, &["x", "0"]);
        (0..100).map(|_| r.random::<f64>()).collect()
    };
    assert_eq!(&a[..100], &again[..]);
}

#[test]
fn arrival_csv_has_source_ids() {
    let mut rng = derive_stream(27, &["csv"]);
    let paths: Vec<_> = (0..3).map(|_| simulate_source(&exp(1.0), &exp(1.0), 5.0, &mut rng)).collect();
    let streams: Vec<_> = paths.iter().map(|p| arrivals_direct(p, 2.0, &mut rng).unwrap()).collect();
    let merged = ArrivalStream::merge(&streams).unwrap();
    let mut buf = Vec::new();
    merged.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("source_id,epoch"));
    assert_eq!(lines.count(), merged.len());
}
