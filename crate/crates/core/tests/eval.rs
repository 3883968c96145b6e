mod common;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rso_anomaly::eval::{
    anomaly_rate, chi2_sf, chi_square_2x2, confusion, diff_values, evaluate_detector, gamma_q, grid_search, ln_gamma,
    monthly_counts, pearson, temporal_window_eval, ConfusionCounts, ContingencyTable2x2, Detector, LabeledRows,
    PeriodCounts, PeriodWindow, TemporalConfig,
};
use rso_anomaly::iforest::IForestConfig;
use rso_anomaly::nn::{train_series, ModelConfig};
use rso_anomaly::synth::{generate, InjectionKind, NoiseShape, RandomInjections, ScenarioConfig};

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

fn table(a: u64, n1: u64, b: u64, n2: u64) -> ContingencyTable2x2 {
    ContingencyTable2x2::new(PeriodCounts { anomalies: a, total: n1 }, PeriodCounts { anomalies: b, total: n2 }).unwrap()
}

#[test]
fn reported_contingency_statistic() {
    let r = chi_square_2x2(&table(1_634, 842_269, 26_536, 880_546)).unwrap();
    assert!((r.statistic - 21_276.23).abs() <= 5.0, "{}", r.statistic);
    assert_eq!(r.p_display(), "< 0.001");
    assert!(r.ln_p_value < 0.001f64.ln());
}

#[test]
fn small_table_by_hand() {
    // [[10, 20], [30, 40]]: expected 12, 18, 28, 42; every |O - E| is 2.
    let r = chi_square_2x2(&table(10, 30, 30, 70)).unwrap();
    let inv = 1.0 / 12.0 + 1.0 / 18.0 + 1.0 / 28.0 + 1.0 / 42.0;
    assert!((r.statistic - 1.5 * 1.5 * inv).abs() < 1e-12);
    assert!((r.uncorrected - 4.0 * inv).abs() < 1e-12);
    let reference = 1.0 - ChiSquared::new(1.0).unwrap().cdf(r.statistic);
    assert!((r.p_value - reference).abs() < 1e-10);
}

#[test]
fn equal_rates_are_not_significant() {
    let r = chi_square_2x2(&table(100, 1_000, 200, 2_000)).unwrap();
    assert!(r.statistic.abs() < 1e-12);
    assert!((r.p_value - 1.0).abs() < 1e-12);
}

#[test]
fn zero_marginals_are_rejected() {
    assert!(ContingencyTable2x2::new(PeriodCounts { anomalies: 0, total: 10 }, PeriodCounts { anomalies: 0, total: 20 })
        .and_then(|t| chi_square_2x2(&t))
        .is_err());
    assert!(ContingencyTable2x2::new(PeriodCounts { anomalies: 5, total: 4 }, PeriodCounts { anomalies: 1, total: 20 }).is_err());
}

#[test]
fn survival_function_matches_reference_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2_000 {
        let dof = rng.gen_range(1..12u32);
        let x = 10f64.powf(rng.gen_range(-3.0..2.3));
        let reference = ChiSquared::new(dof as f64).unwrap().sf(x);
        let ours = chi2_sf(x, dof);
        assert!((ours - reference).abs() <= 1e-9 * reference.max(1e-300) + 1e-300, "dof {dof} x {x}: {ours} vs {reference}");
        let a = rng.gen_range(0.1..40.0);
        let q = gamma_q(a, x);
        let q_ref = statrs::function::gamma::gamma_ur(a, x);
        assert!((q - q_ref).abs() <= 1e-9 * q_ref.max(1e-300) + 1e-300, "a {a} x {x}: {q} vs {q_ref}");
        let z = rng.gen_range(0.01..150.0);
        assert!((ln_gamma(z) - statrs::function::gamma::ln_gamma(z)).abs() < 1e-10 * ln_gamma(z).abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn statistic_is_symmetric_in_period_order(a in 1u64..5_000, n1 in 5_000u64..100_000, b in 1u64..5_000, n2 in 5_000u64..100_000) {
        let x = chi_square_2x2(&table(a, n1, b, n2)).unwrap();
        let y = chi_square_2x2(&table(b, n2, a, n1)).unwrap();
        prop_assert!((x.statistic - y.statistic).abs() <= 1e-9 * x.statistic.max(1.0));
        prop_assert!(x.statistic >= 0.0 && x.statistic <= x.uncorrected + 1e-9);
        prop_assert!((0.0..=1.0).contains(&x.p_value));
    }

    #[test]
    fn f1_follows_its_definition(labels in prop::collection::vec(any::<bool>(), 1..300), flip in prop::collection::vec(any::<bool>(), 300)) {
        let flags: Vec<bool> = labels.iter().zip(&flip).map(|(l, f)| l ^ f).collect();
        let c = confusion(&labels, &flags).unwrap();
        prop_assert_eq!(c.total() as usize, labels.len());
        prop_assert_eq!(c.f1(), common::f1_of(c.tp, c.fp, c.fn_));
        prop_assert!((0.0..=1.0).contains(&c.f1()));
        // swapping the roles of labels and flags swaps FP and FN only
        let swapped = confusion(&flags, &labels).unwrap();
        prop_assert_eq!(swapped.f1(), c.f1());
        let perfect = confusion(&labels, &labels).unwrap();
        prop_assert_eq!(perfect.accuracy(), 1.0);
        if labels.iter().any(|&l| l) {
            prop_assert_eq!(perfect.f1(), 1.0);
        }
    }

    #[test]
    fn differencing_inverts_cumulative_sums(steps in prop::collection::vec(-1e3f64..1e3, 2..200), start in -1e4f64..1e4) {
        let mut level = start;
        let path: Vec<f64> = std::iter::once(start).chain(steps.iter().map(|s| { level += s; level })).collect();
        let d = diff_values(&path).unwrap();
        prop_assert_eq!(d.len(), steps.len());
        for (a, b) in d.iter().zip(&steps) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + path.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        }
    }

    #[test]
    fn pearson_matches_covariance_definition(seed in any::<u64>(), n in 3usize..200, slope in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| slope * v + rng.gen_range(-3.0..3.0)).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((r - common::covariance_pearson(&x, &y)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}

#[test]
fn pearson_edge_cases() {
    assert_eq!(pearson(&[1.0, 2.0], &[2.0, 4.0]), None);
    assert_eq!(pearson(&[1.0, 1.0, 1.0], &[2.0, 4.0, 5.0]), None);
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
}

#[test]
fn monthly_counts_by_hand() {
    let t = |m, d| utc(2022, m, d);
    let items = vec![
        (t(1, 3), "a", true),
        (t(1, 20), "a", true),
        (t(1, 31), "a", true),
        (t(2, 10), "a", false),
        (t(3, 1), "a", true),
        (t(3, 2), "a", true),
        (t(3, 3), "a", true),
        (t(3, 31) + Duration::hours(23), "a", true),
        (t(3, 15), "a", true),
        (t(2, 5), "b", true),
        (t(2, 6), "b", true),
    ];
    let rows = monthly_counts(items.iter().map(|(e, g, f)| (*e, *g, *f)));
    let got: Vec<(&str, &str, u64, Option<i64>, Option<f64>, bool)> = rows
        .iter()
        .map(|r| (r.group.as_str(), r.month.as_str(), r.count, r.change, r.percent_change, r.above_mean))
        .collect();
    assert_eq!(
        got,
        vec![
            ("a", "2022-01", 3, None, None, true),
            ("a", "2022-02", 0, Some(-3), Some(-100.0), false),
            ("a", "2022-03", 5, Some(5), None, true),
            ("b", "2022-02", 2, None, None, false),
        ]
    );
}

fn quiet_corpus(seed: u64, objects: usize, observations: usize, fraction: f64) -> rso_anomaly::synth::SynthCorpus {
    let mut sc = ScenarioConfig::quiet(seed, objects, utc(2018, 1, 1), observations);
    sc.noise_shape = NoiseShape::Uniform;
    if fraction > 0.0 {
        sc.random_injections = vec![RandomInjections {
            fraction,
            min_magnitude: 10.0,
            max_magnitude: 20.0,
            kinds: InjectionKind::ALL.to_vec(),
            min_length: 1,
            max_length: 4,
            elements: None,
            window: None,
        }];
    }
    generate(&sc).unwrap()
}

#[test]
fn flagged_rate_tracks_the_injected_rate() {
    let fraction = 0.03;
    let corpus = quiet_corpus(21, 5, 1000, fraction);
    let cfg = ModelConfig {
        latent_dim: 2,
        lambda_anchor: 100.0,
        threshold_sigma: 3.0,
        ..Default::default()
    };
    let mut verdicts = Vec::new();
    for (id, s) in &corpus.series {
        let model = train_series(s, &ModelConfig { seed: *id as u64, ..cfg.clone() }).unwrap();
        verdicts.extend(model.score_series(s).unwrap());
    }
    let window = PeriodWindow::new("all", utc(2000, 1, 1), utc(2100, 1, 1)).unwrap();
    let rate = anomaly_rate(&verdicts, &window).unwrap();
    let n = verdicts.len() as f64;
    let bound = 3.0 * (fraction * (1.0 - fraction) / n).sqrt();
    assert!((rate - fraction).abs() <= bound, "rate {rate} vs {fraction} ± {bound}");
    assert!(anomaly_rate(&verdicts, &PeriodWindow::new("empty", utc(1990, 1, 1), utc(1991, 1, 1)).unwrap()).is_err());
}

#[test]
fn a_single_candidate_grid_reports_its_own_score() {
    let corpus = quiet_corpus(5, 3, 300, 0.03);
    let subset: Vec<LabeledRows> = corpus.series.values().map(|s| LabeledRows::from_series(s).unwrap()).collect();
    let det = Detector::IsolationForest(IForestConfig {
        n_estimators: 30,
        ..Default::default()
    });
    let results = grid_search(std::slice::from_ref(&det), &subset, 11).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].rank, 1);
    let direct: Vec<ConfusionCounts> = subset.iter().map(|d| evaluate_detector(&det, d, 11).unwrap()).collect();
    let mean_f1 = direct.iter().map(|c| c.f1()).sum::<f64>() / direct.len() as f64;
    assert!((results[0].mean_f1 - mean_f1).abs() < 1e-12);
    assert!(grid_search(&[], &subset, 11).is_err());
    assert!(grid_search(&[det], &[], 11).is_err());
}

#[test]
fn identical_windows_give_identical_rows() {
    let corpus = quiet_corpus(8, 3, 1600, 0.02);
    let ids: Vec<u32> = corpus.series.keys().copied().collect();
    let detectors = vec![
        Detector::IsolationForest(IForestConfig {
            n_estimators: 20,
            ..Default::default()
        }),
        Detector::Autoencoder(ModelConfig {
            epochs: 5,
            ..Default::default()
        }),
    ];
    let cfg = TemporalConfig {
        end: utc(2020, 1, 1),
        years: vec![1, 1, 2],
        min_observations: 100,
    };
    let rows = temporal_window_eval(&detectors, &corpus.series, &ids, &cfg, 3).unwrap();
    assert_eq!(rows.len(), 6);
    for k in 0..2 {
        let (a, b) = (&rows[k], &rows[k + 2]);
        assert_eq!((a.counts, a.f1, a.accuracy, &a.window), (b.counts, b.f1, b.accuracy, &b.window));
    }
    assert!(rows.iter().all(|r| r.skipped.is_none() && r.objects_evaluated == 3));

    // a window before the corpus starts has nothing to evaluate
    let early = TemporalConfig {
        end: utc(2017, 6, 1),
        years: vec![1],
        min_observations: 100,
    };
    let rows = temporal_window_eval(&detectors, &corpus.series, &ids, &early, 3).unwrap();
    assert!(rows.iter().all(|r| r.skipped.is_some() && r.objects_evaluated == 0));
}
