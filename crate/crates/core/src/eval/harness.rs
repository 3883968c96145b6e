use chrono::{DateTime, TimeZone, Utc};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion_rows, ConfusionCounts};
use super::window::PeriodWindow;
use crate::error::{Error, Result};
use crate::iforest::{self, Contamination, IForestConfig, MaxSamples};
use crate::nn::{train, ModelConfig, ModelKind, INPUT_DIM};
use crate::oracle::iqr_outliers;
use crate::tle::{EphemerisSeries, SeriesMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "IF")]
    IForest,
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "Anchor AE")]
    AnchorAe,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::IForest => "IF",
            ModelFamily::Ae => "AE",
            ModelFamily::AnchorAe => "Anchor AE",
        }
    }
}

/// A configured anomaly detector that can be fitted and applied to one
/// object's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Autoencoder(ModelConfig),
    IsolationForest(IForestConfig),
}

impl Detector {
    pub fn family(&self) -> ModelFamily {
        match self {
            Detector::Autoencoder(c) if c.kind == ModelKind::AnchorAe => ModelFamily::AnchorAe,
            Detector::Autoencoder(_) => ModelFamily::Ae,
            Detector::IsolationForest(_) => ModelFamily::IForest,
        }
    }

    pub fn min_observations(&self) -> usize {
        match self {
            Detector::Autoencoder(c) => c.min_training_observations,
            Detector::IsolationForest(_) => 2,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Detector::Autoencoder(c) => format!(
                "hidden_dim={} latent_dim={} epochs={} batch_size={} threshold_sigma={}",
                c.hidden_dim, c.latent_dim, c.epochs, c.batch_size, c.threshold_sigma
            ),
            Detector::IsolationForest(c) => {
                let cont = match c.contamination {
                    Contamination::Fraction(f) => f.to_string(),
                    Contamination::Auto(_) => "auto".into(),
                };
                let ms = match c.max_samples {
                    MaxSamples::Fraction(f) => f.to_string(),
                    MaxSamples::Count(n) => n.to_string(),
                };
                format!("contamination={cont} n_estimators={} max_samples={ms}", c.n_estimators)
            }
        }
    }

    /// Fits on `rows` and flags the same rows. `seed` is the object's
    /// sub-seed.
    pub fn detect(&self, rows: &[[f64; INPUT_DIM]], seed: u64) -> Result<Vec<[bool; INPUT_DIM]>> {
        match self {
            Detector::Autoencoder(c) => {
                let cfg = ModelConfig { seed, ..c.clone() };
                train(rows, &cfg)?.flag_rows(rows)
            }
            Detector::IsolationForest(c) => {
                if rows.len() < 2 {
                    return Err(Error::InsufficientData { have: rows.len(), need: 2 });
                }
                iforest::detect(rows, &IForestConfig { seed, ..c.clone() })
            }
        }
    }
}

/// One object's rows with interquartile-range labels per element.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRows {
    pub norad_id: u32,
    pub rows: Vec<[f64; INPUT_DIM]>,
    pub labels: Vec<[bool; INPUT_DIM]>,
}

impl LabeledRows {
    pub fn from_series(series: &EphemerisSeries) -> Result<Self> {
        let rows = series.matrix();
        let mut labels = vec![[false; INPUT_DIM]; rows.len()];
        for j in 0..INPUT_DIM {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            for (k, l) in iqr_outliers(&col)?.into_iter().enumerate() {
                labels[k][j] = l;
            }
        }
        Ok(LabeledRows {
            norad_id: series.norad_id,
            rows,
            labels,
        })
    }
}

pub fn object_seed(run_seed: u64, norad_id: u32) -> u64 {
    run_seed ^ norad_id as u64
}

pub fn evaluate_detector(detector: &Detector, data: &LabeledRows, run_seed: u64) -> Result<ConfusionCounts> {
    let flags = detector.detect(&data.rows, object_seed(run_seed, data.norad_id))?;
    confusion_rows(&data.labels, &flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderGrid {
    pub hidden_dim: Vec<usize>,
    pub latent_dim: Vec<usize>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub threshold_sigma: Vec<f64>,
}

impl Default for AutoencoderGrid {
    fn default() -> Self {
        AutoencoderGrid {
            hidden_dim: vec![16, 32, 64],
            latent_dim: vec![2, 3, 4, 5],
            epochs: vec![100, 150, 200],
            batch_size: vec![16, 32, 64],
            threshold_sigma: vec![1.5, 2.0, 2.5],
        }
    }
}

impl AutoencoderGrid {
    /// The plain autoencoder grid keeps the hidden width fixed at 16.
    pub fn plain() -> Self {
        AutoencoderGrid {
            hidden_dim: vec![16],
            ..Default::default()
        }
    }

    pub fn candidates(&self, base: &ModelConfig, kind: ModelKind) -> Vec<Detector> {
        let mut out = Vec::new();
        for &hidden_dim in &self.hidden_dim {
            for &latent_dim in &self.latent_dim {
                for &epochs in &self.epochs {
                    for &batch_size in &self.batch_size {
                        for &threshold_sigma in &self.threshold_sigma {
                            out.push(Detector::Autoencoder(ModelConfig {
                                kind,
                                hidden_dim,
                                latent_dim,
                                epochs,
                                batch_size,
                                threshold_sigma,
                                ..base.clone()
                            }));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestGrid {
    pub contamination: Vec<Contamination>,
    pub n_estimators: Vec<usize>,
    pub max_samples: Vec<f64>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            contamination: vec![
                Contamination::Fraction(0.05),
                Contamination::Fraction(0.1),
                Contamination::Fraction(0.15),
                Contamination::AUTO,
            ],
            n_estimators: vec![50, 100, 200],
            max_samples: vec![0.5, 0.8, 1.0],
        }
    }
}

impl ForestGrid {
    pub fn candidates(&self, base: &IForestConfig) -> Vec<Detector> {
        let mut out = Vec::new();
        for &contamination in &self.contamination {
            for &n_estimators in &self.n_estimators {
                for &ms in &self.max_samples {
                    out.push(Detector::IsolationForest(IForestConfig {
                        contamination,
                        n_estimators,
                        max_samples: MaxSamples::Fraction(ms),
                        ..base.clone()
                    }));
                }
            }
        }
        out
    }
}

/// Search space per family; absent families are not searched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub ae: Option<AutoencoderGrid>,
    pub anchor_ae: Option<AutoencoderGrid>,
    pub iforest: Option<ForestGrid>,
}

impl GridSpec {
    /// The full hyperparameter search space of the study.
    pub fn study() -> Self {
        GridSpec {
            ae: Some(AutoencoderGrid::plain()),
            anchor_ae: Some(AutoencoderGrid::default()),
            iforest: Some(ForestGrid::default()),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn candidates(&self, model: &ModelConfig, forest: &IForestConfig) -> Vec<Detector> {
        let mut out = Vec::new();
        if let Some(g) = &self.iforest {
            out.extend(g.candidates(forest));
        }
        if let Some(g) = &self.ae {
            out.extend(g.candidates(model, ModelKind::Autoencoder));
        }
        if let Some(g) = &self.anchor_ae {
            out.extend(g.candidates(model, ModelKind::AnchorAe));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rank: usize,
    pub family: ModelFamily,
    /// Position in enumeration order.
    pub candidate: usize,
    pub params: String,
    pub detector: Detector,
    pub mean_f1: f64,
    pub mean_accuracy: f64,
    pub objects: usize,
    pub failures: usize,
}

/// Scores every candidate on every object (in-sample against IQR labels)
/// and ranks candidates by mean per-object F1, ties broken by enumeration
/// order. Rankings are ranked within each family.
pub fn grid_search(candidates: &[Detector], subset: &[LabeledRows], run_seed: u64) -> Result<Vec<GridResult>> {
    if candidates.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if subset.is_empty() {
        return Err(Error::Config("empty evaluation subset".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..subset.len()).map(move |o| (c, o)))
        .collect();
    let outcomes: Vec<Result<ConfusionCounts>> = pairs
        .par_iter()
        .map(|&(c, o)| evaluate_detector(&candidates[c], &subset[o], run_seed))
        .collect();

    let mut results: Vec<GridResult> = candidates
        .iter()
        .enumerate()
        .map(|(c, det)| {
            let runs = &outcomes[c * subset.len()..(c + 1) * subset.len()];
            let ok: Vec<&ConfusionCounts> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            for (o, r) in runs.iter().enumerate() {
                if let Err(e) = r {
                    warn!("grid candidate {c} on {}: {e}", subset[o].norad_id);
                }
            }
            let n = ok.len();
            let mean = |f: fn(&ConfusionCounts) -> f64| if n == 0 { 0.0 } else { ok.iter().map(|c| f(c)).sum::<f64>() / n as f64 };
            GridResult {
                rank: 0,
                family: det.family(),
                candidate: c,
                params: det.describe(),
                detector: det.clone(),
                mean_f1: mean(ConfusionCounts::f1),
                mean_accuracy: mean(ConfusionCounts::accuracy),
                objects: n,
                failures: runs.len() - n,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        a.family
            .cmp(&b.family)
            .then(b.mean_f1.total_cmp(&a.mean_f1))
            .then(a.candidate.cmp(&b.candidate))
    });
    let mut last = None;
    let mut rank = 0;
    for r in &mut results {
        if last != Some(r.family) {
            rank = 0;
            last = Some(r.family);
        }
        rank += 1;
        r.rank = rank;
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    /// Exclusive end shared by every window.
    pub end: DateTime<Utc>,
    pub years: Vec<u32>,
    /// Objects with fewer observations in a window are left out of it.
    pub min_observations: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            end: Utc.with_ymd_and_hms(2021, 8, 24, 0, 0, 0).unwrap(),
            years: vec![5, 4, 3, 2, 1],
            min_observations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalRow {
    pub years: u32,
    pub window: PeriodWindow,
    pub family: ModelFamily,
    pub params: String,
    pub objects_evaluated: usize,
    pub objects_skipped: usize,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub f1: f64,
    /// Reason the row has no metrics.
    pub skipped: Option<String>,
}

/// Trains each detector on window-truncated data for every window length
/// and scores it in-sample against IQR labels of the same window. Counts
/// are pooled across objects and elements.
pub fn temporal_window_eval(
    detectors: &[Detector],
    series: &SeriesMap,
    ids: &[u32],
    cfg: &TemporalConfig,
    run_seed: u64,
) -> Result<Vec<TemporalRow>> {
    if detectors.is_empty() || cfg.years.is_empty() {
        return Err(Error::Config("temporal evaluation needs detectors and windows".into()));
    }
    let mut rows = Vec::new();
    for &years in &cfg.years {
        let window = PeriodWindow::trailing_years(cfg.end, years)?;
        let data: Vec<Option<LabeledRows>> = ids
            .par_iter()
            .map(|id| {
                let s = series.get(id)?.window(window.start, window.end);
                if s.len() < cfg.min_observations.max(4) {
                    return None;
                }
                LabeledRows::from_series(&s).ok()
            })
            .collect();
        for det in detectors {
            let eligible: Vec<&LabeledRows> = data
                .iter()
                .flatten()
                .filter(|d| d.rows.len() >= det.min_observations())
                .collect();
            let outcomes: Vec<Result<ConfusionCounts>> =
                eligible.par_iter().map(|d| evaluate_detector(det, d, run_seed)).collect();
            let mut counts = ConfusionCounts::default();
            let mut evaluated = 0;
            for (d, o) in eligible.iter().zip(outcomes) {
                match o {
                    Ok(c) => {
                        counts += c;
                        evaluated += 1;
                    }
                    Err(e) => warn!("{} {years}y on {}: {e}", det.family().name(), d.norad_id),
                }
            }
            info!("{} {years}y: {evaluated} objects, F1 {:.4}", det.family().name(), counts.f1());
            rows.push(TemporalRow {
                years,
                window: window.clone(),
                family: det.family(),
                params: det.describe(),
                objects_evaluated: evaluated,
                objects_skipped: ids.len() - evaluated,
                counts,
                accuracy: counts.accuracy(),
                f1: counts.f1(),
                skipped: (evaluated == 0).then(|| "no object has enough observations in this window".to_string()),
            });
        }
    }
    Ok(rows)
}
