use chrono::{DateTime, Utc};
use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anchor::knn_distance;
use super::config::{ModelConfig, ModelKind, INPUT_DIM};
use super::matrix::Matrix;
use super::network::Network;
use super::norm::NormStats;
use crate::error::{Error, Result};
use crate::tle::{EphemerisSeries, OrbitalElements};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MIN_ERROR_STD: f64 = 1e-12;

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Per-element squared-error statistics over the training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: [f64; INPUT_DIM],
    pub std: [f64; INPUT_DIM],
}

impl ErrorStats {
    pub fn from_errors(errors: &[[f64; INPUT_DIM]]) -> Self {
        let n = errors.len().max(1) as f64;
        let mut mean = [0.0; INPUT_DIM];
        for e in errors {
            for j in 0..INPUT_DIM {
                mean[j] += e[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; INPUT_DIM];
        for e in errors {
            for j in 0..INPUT_DIM {
                std[j] += (e[j] - mean[j]).powi(2);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt().max(MIN_ERROR_STD));
        ErrorStats { mean, std }
    }

    pub fn thresholds(&self, sigma: f64) -> [f64; INPUT_DIM] {
        std::array::from_fn(|j| self.mean[j] + sigma * self.std[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub rows: usize,
    pub epochs_run: usize,
    pub seed: u64,
    pub final_loss: f64,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    /// Digest of the training inputs, used to decide whether a stored
    /// model is current.
    #[serde(default)]
    pub input_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub norm_stats: NormStats,
    pub network: Network,
    pub calibration: Option<ErrorStats>,
    /// Seeded subsample of training latents for the k-NN diagnostic.
    pub latent_reference: Matrix,
    pub training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub epoch: DateTime<Utc>,
    /// Squared reconstruction error per element, standardized units.
    pub errors: [f64; INPUT_DIM],
    pub flags: [bool; INPUT_DIM],
    pub latent_knn_distance: f64,
    pub any_flag: bool,
}

fn standardized_matrix(stats: &NormStats, rows: &[[f64; INPUT_DIM]]) -> Matrix {
    Matrix {
        rows: rows.len(),
        cols: INPUT_DIM,
        data: rows.iter().flat_map(|r| stats.standardize(r)).collect(),
    }
}

fn squared_errors(x: &Matrix, xhat: &Matrix) -> Vec<[f64; INPUT_DIM]> {
    x.iter_rows()
        .zip(xhat.iter_rows())
        .map(|(a, b)| std::array::from_fn(|j| (a[j] - b[j]) * (a[j] - b[j])))
        .collect()
}

/// Trains one model on an N×6 matrix of raw element values and calibrates
/// its per-element thresholds on the same rows.
pub fn train(rows: &[[f64; INPUT_DIM]], config: &ModelConfig) -> Result<TrainedModel> {
    config.validate()?;
    if rows.len() < config.min_training_observations {
        return Err(Error::InsufficientData {
            have: rows.len(),
            need: config.min_training_observations,
        });
    }
    let norm_stats = NormStats::fit(rows)?;
    let x = standardized_matrix(&norm_stats, rows);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::init(config, &mut rng);
    let mut adam = Adam::new(network.params.len(), config.learning_rate);
    let anchor = match config.kind {
        ModelKind::AnchorAe => Some((config.lambda_anchor, config.k_neighbors)),
        ModelKind::Autoencoder => None,
    };

    let mut order: Vec<usize> = (0..x.rows).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = x.select_rows(chunk);
            let (loss, grad) = network.loss_and_grad(&batch, anchor)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b}: reconstruction {}, anchor {}",
                    loss.reconstruction, loss.anchor
                )));
            }
            adam.step(&mut network.params, &grad);
            weighted += loss.total * chunk.len() as f64;
        }
        loss_history.push(weighted / x.rows as f64);
    }
    debug!(
        "trained {} rows: loss {:.6} -> {:.6}",
        x.rows,
        loss_history.first().copied().unwrap_or(f64::NAN),
        loss_history.last().copied().unwrap_or(f64::NAN)
    );

    let (latents, _) = network.forward(&x)?;
    let keep = config.latent_reference_size.min(x.rows);
    let mut picked = rand::seq::index::sample(&mut rng, x.rows, keep).into_vec();
    picked.sort_unstable();
    let latent_reference = latents.select_rows(&picked);

    let mut model = TrainedModel {
        config: config.clone(),
        norm_stats,
        network,
        calibration: None,
        latent_reference,
        training: TrainingMeta {
            rows: rows.len(),
            epochs_run: config.epochs,
            seed: config.seed,
            final_loss: loss_history.last().copied().unwrap_or(0.0),
            loss_history,
            input_digest: None,
        },
    };
    model.calibrate_thresholds(rows)?;
    Ok(model)
}

/// Trains on every observation of `series`.
pub fn train_series(series: &EphemerisSeries, config: &ModelConfig) -> Result<TrainedModel> {
    train(&series.matrix(), config)
}

impl TrainedModel {
    /// Squared standardized reconstruction errors for raw rows.
    pub fn reconstruction_errors(&self, rows: &[[f64; INPUT_DIM]]) -> Result<Vec<[f64; INPUT_DIM]>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let x = standardized_matrix(&self.norm_stats, rows);
        let (_, xhat) = self.network.forward(&x)?;
        Ok(squared_errors(&x, &xhat))
    }

    /// Stores per-element error mean and standard deviation over `rows`.
    pub fn calibrate_thresholds(&mut self, rows: &[[f64; INPUT_DIM]]) -> Result<ErrorStats> {
        if rows.is_empty() {
            return Err(Error::invalid("calibration needs at least one row"));
        }
        let stats = ErrorStats::from_errors(&self.reconstruction_errors(rows)?);
        self.calibration = Some(stats.clone());
        Ok(stats)
    }

    pub fn thresholds(&self) -> Result<[f64; INPUT_DIM]> {
        let cal = self
            .calibration
            .as_ref()
            .ok_or_else(|| Error::Model("model has not been calibrated".into()))?;
        Ok(cal.thresholds(self.config.threshold_sigma))
    }

    pub fn score(&self, epoch: DateTime<Utc>, elements: &OrbitalElements) -> Result<AnomalyVerdict> {
        Ok(self.score_rows(&[(epoch, elements.to_array())])?.remove(0))
    }

    pub fn score_rows(&self, rows: &[(DateTime<Utc>, [f64; INPUT_DIM])]) -> Result<Vec<AnomalyVerdict>> {
        let thresholds = self.thresholds()?;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let raw: Vec<[f64; INPUT_DIM]> = rows.iter().map(|(_, r)| *r).collect();
        let x = standardized_matrix(&self.norm_stats, &raw);
        let (z, xhat) = self.network.forward(&x)?;
        let errors = squared_errors(&x, &xhat);
        Ok(rows
            .iter()
            .zip(errors)
            .zip(z.iter_rows())
            .map(|(((epoch, _), errors), latent)| {
                let flags: [bool; INPUT_DIM] = std::array::from_fn(|j| errors[j] > thresholds[j]);
                AnomalyVerdict {
                    epoch: *epoch,
                    errors,
                    flags,
                    latent_knn_distance: knn_distance(&self.latent_reference, latent, self.config.k_neighbors),
                    any_flag: flags.iter().any(|&f| f),
                }
            })
            .collect())
    }

    /// Per-element flags for raw rows, without the latent diagnostic.
    pub fn flag_rows(&self, rows: &[[f64; INPUT_DIM]]) -> Result<Vec<[bool; INPUT_DIM]>> {
        let thresholds = self.thresholds()?;
        Ok(self
            .reconstruction_errors(rows)?
            .into_iter()
            .map(|e| std::array::from_fn(|j| e[j] > thresholds[j]))
            .collect())
    }

    pub fn score_series(&self, series: &EphemerisSeries) -> Result<Vec<AnomalyVerdict>> {
        let rows: Vec<_> = series
            .observations
            .iter()
            .map(|r| (r.epoch, r.elements.to_array()))
            .collect();
        self.score_rows(&rows)
    }
}
