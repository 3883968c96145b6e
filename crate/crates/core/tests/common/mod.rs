//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rso_anomaly::nn::{Matrix, Network};

/// Mean over rows of the mean distance to the `k` nearest other rows,
/// computed from the full pairwise distance table.
pub fn brute_anchor(z: &[Vec<f64>], k: usize) -> f64 {
    let b = z.len();
    if b < 2 {
        return 0.0;
    }
    let k = k.min(b - 1);
    let mut table = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            let mut s = 0.0;
            for c in 0..z[i].len() {
                s += (z[i][c] - z[j][c]).powi(2);
            }
            table[i][j] = s.sqrt();
        }
    }
    let mut total = 0.0;
    for (i, row) in table.iter().enumerate() {
        let mut others: Vec<f64> = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| *d).collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        total += others[..k].iter().sum::<f64>() / k as f64;
    }
    total / b as f64
}

/// Quantile with 1-based order statistics: `h = (n - 1)p + 1`,
/// `x[⌊h⌋] + (h - ⌊h⌋)(x[⌈h⌉] - x[⌊h⌋])`.
pub fn brute_quantile(values: &[f64], p: f64) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (x.len() as f64 - 1.0) * p + 1.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    x[lo - 1] + (h - lo as f64) * (x[hi - 1] - x[lo - 1])
}

pub fn brute_iqr_mask(values: &[f64]) -> Vec<bool> {
    let q1 = brute_quantile(values, 0.25);
    let q3 = brute_quantile(values, 0.75);
    let spread = q3 - q1;
    values
        .iter()
        .map(|&v| v < q1 - 1.5 * spread || v > q3 + 1.5 * spread)
        .collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step `h`. Entries where both are below `floor` in
/// magnitude are compared against `floor`.
pub fn gradient_check(net: &Network, x: &Matrix, anchor: Option<(f64, usize)>, h: f64, floor: f64) -> f64 {
    let (_, grad) = net.loss_and_grad(x, anchor).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let p0 = net.params[i];
        probe.params[i] = p0 + h;
        let up = probe.loss(x, anchor).unwrap().total;
        probe.params[i] = p0 - h;
        let down = probe.loss(x, anchor).unwrap().total;
        probe.params[i] = p0;
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

pub fn f1_of(tp: u64, fp: u64, fn_: u64) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Sample Pearson correlation through the covariance definition.
pub fn covariance_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0);
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0);
    cov / (vx.sqrt() * vy.sqrt())
}

/// A series with one observation every `step_hours` from `start`, built on
/// a template record so every field is valid.
pub fn series_from_rows(
    norad_id: u32,
    start: chrono::DateTime<chrono::Utc>,
    step_hours: i64,
    rows: &[[f64; 6]],
) -> rso_anomaly::tle::EphemerisSeries {
    use rand::SeedableRng;
    let template = rso_anomaly::synth::random_record(&mut rand_chacha::ChaCha8Rng::seed_from_u64(norad_id as u64));
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, r)| rso_anomaly::tle::TleRecord {
            norad_id,
            epoch: start + chrono::Duration::hours(step_hours * i as i64),
            elements: rso_anomaly::tle::OrbitalElements::from_array(*r),
            ..template.clone()
        })
        .collect();
    rso_anomaly::tle::EphemerisSeries::from_records(norad_id, records)
}

/// Epochs given explicitly; element values are a fixed nominal orbit.
pub fn series_at(norad_id: u32, epochs: &[chrono::DateTime<chrono::Utc>]) -> rso_anomaly::tle::EphemerisSeries {
    use rand::SeedableRng;
    let template = rso_anomaly::synth::random_record(&mut rand_chacha::ChaCha8Rng::seed_from_u64(norad_id as u64));
    let records = epochs
        .iter()
        .map(|&epoch| rso_anomaly::tle::TleRecord {
            norad_id,
            epoch,
            ..template.clone()
        })
        .collect();
    rso_anomaly::tle::EphemerisSeries::from_records(norad_id, records)
}

/// One seeded trial: a 2-d Gaussian cluster of 255 points plus one point
/// ten standard deviations out. True when the far point scores above the
/// cluster's median score.
pub fn far_outlier_trial(seed: u64) -> bool {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rso_anomaly::iforest::{fit, IForestConfig};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data: Vec<f64> = (0..255 * 2).map(|_| normal.sample(&mut rng)).collect();
    data.extend([10.0, -10.0]);
    let m = Matrix::from_vec(256, 2, data).unwrap();
    let forest = fit(&m, &IForestConfig { seed, ..Default::default() }).unwrap();
    let scores = forest.score_all(&m).unwrap();
    let mut cluster = scores[..255].to_vec();
    cluster.sort_by(f64::total_cmp);
    scores[255] > cluster[127]
}

pub const SMALL_GRID: &str = "\
[anchor_ae]
hidden_dim = [8, 16]
latent_dim = [3]
epochs = [10]
batch_size = [16]
threshold_sigma = [1.5, 2.0]

[iforest]
contamination = [\"auto\", 0.05]
n_estimators = [20]
max_samples = [0.5]
";

/// Runs every stage on a synthetic scenario under `out`, returning the
/// pipeline for further inspection.
pub fn run_full_pipeline(
    scenario: &rso_anomaly::synth::ScenarioConfig,
    out: &std::path::Path,
    workers: usize,
) -> rso_anomaly::pipeline::Pipeline {
    use rso_anomaly::pipeline::*;
    let synth = cmd_synth(scenario, &out.join("synth"), workers).unwrap();
    let mut cfg = corpus_run_config(&synth.files, out, 42);
    cfg.workers = workers;
    let p = Pipeline::new(cfg).unwrap();
    let ingest = cmd_ingest(&p, IngestSource::Configured).unwrap();
    assert_eq!(ingest.report.checksum_warnings, 0);
    assert!(ingest.selected > 0);
    cmd_label(&p, None).unwrap();
    let train = cmd_train(&p, &TrainOptions::default()).unwrap();
    assert!(train.failures.is_empty(), "{:?}", train.failures);
    cmd_score(&p, "leadup", None).unwrap();
    let grid = out.join("grid.toml");
    std::fs::write(&grid, SMALL_GRID).unwrap();
    let eval = cmd_evaluate(
        &p,
        &EvaluateOptions {
            grid: Some(grid),
            temporal: true,
        },
    )
    .unwrap();
    assert!(eval.failures.is_empty(), "{:?}", eval.failures);
    cmd_stats(&p, &StatsOptions::default()).unwrap();
    p
}

/// Relative paths and contents of every file under `root`, skipping run
/// metadata.
pub fn report_tree(root: &std::path::Path, skip: &[&str]) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(dir: &std::path::Path, root: &std::path::Path, skip: &[&str], out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            if skip.contains(&name.as_str()) {
                continue;
            }
            if path.is_dir() {
                walk(&path, root, skip, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, skip, &mut out);
    out
}
