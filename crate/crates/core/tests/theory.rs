//! Simulation against independently built error models.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use rfnet::analysis::{iterate_second_moment, predict_first_moment, second_moment_recursion};
use rfnet::estimator::run_trajectory;
use rfnet::harness::{prepare, run_prepared, ExperimentConfig};
use rfnet::observation::BatchSource;
use rfnet::rng::StreamKey;

fn config(agents: usize, alpha: f64, runs: usize, iterations: u64, thin: u64) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
mode = "synthetic"
[network]
kind = "ring"
agents = {agents}
[model]
features = 2
input_dim = 1
feature_seed = 21
[run]
alpha = {alpha}
batch_size = 3
iterations = {iterations}
runs = {runs}
master_seed = 5
thin = {thin}
[synthetic]
noise_std = 0.4
"#
    ))
    .unwrap()
}

/// `I - α(L⊗I + c·blockdiag(G))` assembled entry by entry.
fn dense_q(lap: &DMatrix<f64>, g: &[DMatrix<f64>], c: f64, alpha: f64) -> DMatrix<f64> {
    let n = lap.nrows();
    let m = g[0].nrows();
    DMatrix::from_fn(n * m, n * m, |r, s| {
        let (i, k) = (r / m, r % m);
        let (j, l) = (s / m, s % m);
        let mut b = if k == l { lap[(i, j)] } else { 0.0 };
        if i == j {
            b += c * g[i][(k, l)];
        }
        let id = if r == s { 1.0 } else { 0.0 };
        id - alpha * b
    })
}

#[test]
fn prediction_matches_matrix_powers() {
    let cfg = config(4, 0.05, 1, 400, 25);
    let p = prepare::<f64>(&cfg).unwrap();
    let g: Vec<_> = (0..4).map(|i| BatchSource::exact_gram(&p.source, i).unwrap()).collect();
    let q = dense_q(&p.topology.laplacian(), &g, 3.0, 0.05);
    let e0 = p.initial_error();
    let pred = predict_first_moment(&p.system, &e0, 400, 25).unwrap();
    let mut e = e0.clone();
    for t in 0..=400u64 {
        if t % 25 == 0 {
            let got = &pred[(t / 25) as usize];
            assert_eq!(got.t, t);
            assert!((&got.mean_error - &e).amax() < 1e-12, "t = {t}");
        }
        e = &q * e;
    }
}

#[test]
fn simulated_mean_tracks_prediction_componentwise() {
    let cfg = config(3, 0.05, 600, 200, 20);
    let p = prepare::<f64>(&cfg).unwrap();
    let res = run_prepared(&p).unwrap().result.unwrap();
    let pred = res.lti_prediction.as_ref().unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (k, (mean, se)) in res.mean_error.iter().zip(&res.mean_error_stderr).enumerate() {
        for l in 0..mean.len() {
            let dev = (mean[l] - pred[k][l]).abs();
            if dev > 1e-12 {
                worst = worst.max(dev / se[l]);
                count += 1;
            }
        }
    }
    // 66 components after t = 0; 4.5 SE leaves a family-wise margin
    assert!(count > 0);
    assert!(worst < 4.5, "worst deviation {worst} SE");
}

#[test]
fn second_moment_stays_under_recursion() {
    let probe = prepare::<f64>(&config(3, 0.05, 1, 1, 1)).unwrap();
    let alpha = 0.5 * probe.spectral.alpha_second_moment_max;
    let p = prepare::<f64>(&config(3, alpha, 200, 1500, 50)).unwrap();
    let s0 = p.initial_error().norm_squared();
    let rec = second_moment_recursion(&p.spectral, s0, 1500).unwrap();
    assert!(rec.converges);
    let res = run_prepared(&p).unwrap().result.unwrap();
    let n = res.agents as f64;
    for (k, &t) in res.t.iter().enumerate() {
        let (sim, se) = (res.fig2[k] * n, res.fig2_stderr[k] * n);
        let bound = rec.values[t as usize];
        assert!(sim <= bound * (1.0 + 1e-12) + 3.0 * se, "t = {t}: {sim} ± {se} vs {bound}");
    }
}

#[test]
fn trajectories_depend_only_on_run_key() {
    let p = prepare::<f64>(&config(3, 0.05, 1, 50, 10)).unwrap();
    let traj = p.trajectory();
    let a = run_trajectory(&traj, StreamKey::for_run(5, 0)).unwrap();
    let b = run_trajectory(&traj, StreamKey::for_run(5, 0)).unwrap();
    let c = run_trajectory(&traj, StreamKey::for_run(5, 1)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.records, c.records);
}

proptest! {
    #[test]
    fn recursion_matches_closed_form(phi_a in 0.0f64..0.999, phi_b in 0.0f64..1.0, s0 in 0.0f64..10.0) {
        let out = iterate_second_moment(phi_a, phi_b, s0, 200);
        for (t, v) in out.values.iter().enumerate() {
            let pw = phi_a.powi(t as i32);
            let closed = pw * s0 + phi_b * (1.0 - pw) / (1.0 - phi_a);
            prop_assert!((v - closed).abs() <= 1e-9 * (1.0 + closed));
        }
        prop_assert!(out.converges);
        let limit = out.limit.unwrap();
        prop_assert!((limit - phi_b / (1.0 - phi_a)).abs() <= 1e-12 * (1.0 + limit));
    }

    #[test]
    fn prediction_is_linear_in_initial_error(scale in -3.0f64..3.0, seed in 0u64..1000) {
        let p = prepare::<f64>(&config(3, 0.05, 1, 1, 1)).unwrap();
        let mut rng = StreamKey::new(seed).rng();
        let e0 = DVector::from_fn(6, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let base = predict_first_moment(&p.system, &e0, 60, 10).unwrap();
        let scaled = predict_first_moment(&p.system, &(&e0 * scale), 60, 10).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((&a.mean_error * scale - &b.mean_error).amax() < 1e-12);
        }
    }
}
