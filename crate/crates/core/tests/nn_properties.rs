mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rso_anomaly::nn::{anchor_loss, mse, total_loss, train, Matrix, ModelConfig, ModelKind, Network, NormStats};

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

fn random_network(rng: &mut ChaCha8Rng, hidden: usize, latent: usize) -> Network {
    let cfg = ModelConfig {
        hidden_dim: hidden,
        latent_dim: latent,
        ..Default::default()
    };
    let mut net = Network::init(&cfg, rng);
    for p in &mut net.params {
        *p += rng.gen_range(-0.3..0.3);
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn anchor_matches_pairwise_reference(b in 2usize..=64, latent in 2usize..=8, k in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = common::random_matrix(&mut rng, b, latent, 3.0);
        let fast = anchor_loss(&z, k);
        let slow = common::brute_anchor(&rows_of(&z), k);
        prop_assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
        prop_assert!(fast >= 0.0);
    }

    #[test]
    fn standardize_round_trips(seed in any::<u64>(), n in 2usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|j| rng.gen_range(-1e3..1e3) * (j + 1) as f64)).collect();
        let stats = NormStats::fit(&rows).unwrap();
        for r in &rows {
            let back = stats.unstandardize(&stats.standardize(r));
            for j in 0..6 {
                prop_assert!((back[j] - r[j]).abs() <= 1e-9 * r[j].abs().max(1.0));
            }
        }
        for j in 0..6 {
            let mean = rows.iter().map(|r| stats.standardize(r)[j]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let hidden = rng.gen_range(2..=8);
        let latent = rng.gen_range(1..=5);
        let b = rng.gen_range(2..=12);
        let net = random_network(&mut rng, hidden, latent);
        let x = common::random_matrix(&mut rng, b, 6, 2.0);
        let anchor = Some((rng.gen_range(0.05..1.0), rng.gen_range(1..=3)));
        let err = common::gradient_check(&net, &x, anchor, 1e-5, 1e-6);
        assert!(err < 1e-4, "case {case}: relative error {err}");
        worst = worst.max(err);
    }
    println!("worst relative gradient error: {worst:.2e}");
}

#[test]
fn zero_lambda_gradient_equals_plain_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let net = random_network(&mut rng, 6, 3);
        let x = common::random_matrix(&mut rng, 9, 6, 1.0);
        let (_, with_anchor) = net.loss_and_grad(&x, Some((0.0, 3))).unwrap();
        let (_, plain) = net.loss_and_grad(&x, None).unwrap();
        for (a, p) in with_anchor.iter().zip(&plain) {
            assert_abs_diff_eq!(a, p, epsilon = 1e-15);
        }
    }
}

#[test]
fn total_loss_is_mse_plus_weighted_anchor() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ModelConfig::default();
    for _ in 0..50 {
        let b = rng.gen_range(2..20);
        let x = common::random_matrix(&mut rng, b, 6, 1.0);
        let xhat = common::random_matrix(&mut rng, b, 6, 1.0);
        let z = common::random_matrix(&mut rng, b, cfg.latent_dim, 1.0);
        let mut sq = 0.0;
        for (a, c) in x.data.iter().zip(&xhat.data) {
            sq += (a - c) * (a - c);
        }
        let expected = sq / (b * 6) as f64 + 0.1 * common::brute_anchor(&rows_of(&z), 3);
        assert_abs_diff_eq!(total_loss(&x, &xhat, &z, &cfg).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(mse(&x, &xhat), sq / (b * 6) as f64, epsilon = 1e-12);
    }
}

#[test]
fn forward_is_finite_on_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let (hidden, latent) = (rng.gen_range(2..10), rng.gen_range(1..6));
        let net = random_network(&mut rng, hidden, latent);
        let x = common::random_matrix(&mut rng, 1, 6, 50.0);
        let (z, xhat) = net.forward(&x).unwrap();
        assert!(z.data.iter().chain(&xhat.data).all(|v| v.is_finite()));
    }
}

fn drifting_rows(n: usize, seed: u64) -> Vec<[f64; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            std::array::from_fn(|j| (j as f64 + 1.0) * t + rng.gen_range(-0.05..0.05))
        })
        .collect()
}

#[test]
fn zero_lambda_matches_plain_autoencoder_bit_for_bit() {
    let rows = drifting_rows(200, 3);
    let anchor = ModelConfig {
        lambda_anchor: 0.0,
        epochs: 150,
        seed: 99,
        ..Default::default()
    };
    let plain = ModelConfig {
        kind: ModelKind::Autoencoder,
        ..anchor.clone()
    };
    let a = train(&rows, &anchor).unwrap();
    let p = train(&rows, &plain).unwrap();
    assert_eq!(a.network.params, p.network.params);
    assert_eq!(a.training.loss_history, p.training.loss_history);
}

#[test]
fn a_large_single_element_shift_is_flagged_and_monotone() {
    let rows = drifting_rows(400, 4);
    let cfg = ModelConfig {
        epochs: 60,
        seed: 1,
        ..Default::default()
    };
    let model = train(&rows, &cfg).unwrap();
    let base = rows[200];
    let sigma = model.norm_stats.std;
    for j in 0..6 {
        let mut last = false;
        for step in 0..=40 {
            let mut shifted = base;
            shifted[j] += step as f64 * 0.5 * sigma[j];
            let flag = model.flag_rows(&[shifted]).unwrap()[0][j];
            assert!(!(last && !flag), "element {j}: flag turned off at {step}");
            last = flag;
        }
        let mut far = base;
        far[j] += 20.0 * sigma[j];
        assert!(model.flag_rows(&[far]).unwrap()[0][j], "element {j}");
    }
}

#[test]
fn higher_sigma_never_lowers_thresholds() {
    let rows = drifting_rows(300, 6);
    let model = train(
        &rows,
        &ModelConfig {
            epochs: 20,
            ..Default::default()
        },
    )
    .unwrap();
    let cal = model.calibration.clone().unwrap();
    let (lo, hi) = (cal.thresholds(1.5), cal.thresholds(2.5));
    for j in 0..6 {
        assert!(hi[j] >= lo[j]);
    }
}

