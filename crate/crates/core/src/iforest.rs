//! Isolation forest baseline.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Matrix, INPUT_DIM};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaxSamples {
    Count(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoContamination {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Contamination {
    Fraction(f64),
    Auto(AutoContamination),
}

impl Contamination {
    pub const AUTO: Contamination = Contamination::Auto(AutoContamination::Auto);
}

/// How the forest sees an object's observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IForestMode {
    /// One forest per orbital element on the 1-d series.
    #[default]
    PerElement,
    /// One forest on standardized 6-d rows; its flag applies to every element.
    Joint6d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IForestConfig {
    pub n_estimators: usize,
    pub max_samples: MaxSamples,
    pub contamination: Contamination,
    pub mode: IForestMode,
    pub seed: u64,
}

impl Default for IForestConfig {
    fn default() -> Self {
        IForestConfig {
            n_estimators: 100,
            max_samples: MaxSamples::Fraction(1.0),
            contamination: Contamination::AUTO,
            mode: IForestMode::PerElement,
            seed: 0,
        }
    }
}

impl IForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Config("n_estimators must be positive".into()));
        }
        match self.max_samples {
            MaxSamples::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::Config("max_samples fraction must be in (0, 1]".into()))
            }
            MaxSamples::Count(0) => return Err(Error::Config("max_samples count must be positive".into())),
            _ => {}
        }
        if let Contamination::Fraction(f) = self.contamination {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::Config("contamination must be in (0, 0.5] or \"auto\"".into()));
            }
        }
        Ok(())
    }

    fn subsample_size(&self, n: usize) -> usize {
        let raw = match self.max_samples {
            MaxSamples::Count(c) => c,
            MaxSamples::Fraction(f) => (f * n as f64).round() as usize,
        };
        raw.clamp(2, n)
    }
}

/// Average path length of an unsuccessful search in a binary search tree
/// of `n` points.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    nodes: Vec<Node>,
    pub sample_size: usize,
}

impl IsoTree {
    fn build(data: &Matrix, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> IsoTree {
        let height_limit = (rows.len() as f64).log2().ceil() as usize;
        let mut tree = IsoTree {
            nodes: Vec::new(),
            sample_size: rows.len(),
        };
        tree.grow(data, rows, 0, height_limit, rng);
        tree
    }

    fn grow(&mut self, data: &Matrix, rows: Vec<usize>, depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..data.cols)
            .filter_map(|f| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = data.data[r * data.cols + f];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
        let mut value = rng.gen_range(lo..hi);
        if value <= lo {
            // keep the split strictly inside the observed range
            value = lo + (hi - lo) * 0.5;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| data.data[r * data.cols + feature] < value);
        let left = self.grow(data, left_rows, depth + 1, limit, rng);
        let right = self.grow(data, right_rows, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    /// Every split value lies strictly between the minimum and maximum of
    /// the split feature over the node's training rows.
    pub fn split_values(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, value, .. } => Some((*feature, *value)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsoTree>,
    pub subsample_size: usize,
    pub n_features: usize,
}

pub fn fit(data: &Matrix, config: &IForestConfig) -> Result<IsolationForest> {
    config.validate()?;
    if data.rows < 2 {
        return Err(Error::invalid(format!("isolation forest needs at least 2 rows, got {}", data.rows)));
    }
    if data.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in isolation forest input"));
    }
    let psi = config.subsample_size(data.rows);
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let rows = sample(&mut rng, data.rows, psi).into_vec();
            IsoTree::build(data, rows, &mut rng)
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size: psi,
        n_features: data.cols,
    })
}

impl IsolationForest {
    /// Mean taken as an offset from the first tree, so equal path lengths
    /// average to exactly that length.
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let Some(first) = self.trees.first().map(|t| t.path_length(x)) else {
            return 0.0;
        };
        let offset: f64 = self.trees[1..].iter().map(|t| t.path_length(x) - first).sum();
        first + offset / self.trees.len() as f64
    }

    /// Anomaly score `2^(-E[h(x)] / c(ψ))` in (0, 1).
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if self.trees.is_empty() {
            return Err(Error::Model("isolation forest has no trees".into()));
        }
        if x.len() != self.n_features {
            return Err(Error::Shape {
                expected: format!("{} features", self.n_features),
                got: format!("{}", x.len()),
            });
        }
        let c = average_path_length(self.subsample_size);
        Ok(2f64.powf(-self.mean_path_length(x) / c))
    }

    pub fn score_all(&self, data: &Matrix) -> Result<Vec<f64>> {
        data.iter_rows().map(|r| self.score(r)).collect()
    }
}

/// Fixed contamination flags the top `⌈f·N⌉` scores (earlier rows win
/// ties); `Auto` flags scores above 0.5.
pub fn classify(forest: &IsolationForest, data: &Matrix, contamination: Contamination) -> Result<Vec<bool>> {
    let scores = forest.score_all(data)?;
    Ok(flag_scores(&scores, contamination))
}

pub fn flag_scores(scores: &[f64], contamination: Contamination) -> Vec<bool> {
    match contamination {
        Contamination::Auto(_) => scores.iter().map(|&s| s > 0.5).collect(),
        Contamination::Fraction(f) => {
            let count = ((f * scores.len() as f64) - 1e-9).ceil().max(0.0) as usize;
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut flags = vec![false; scores.len()];
            for &i in order.iter().take(count) {
                flags[i] = true;
            }
            flags
        }
    }
}

/// Per-element flags for an object's raw N×6 rows under the configured mode.
pub fn detect(rows: &[[f64; INPUT_DIM]], config: &IForestConfig) -> Result<Vec<[bool; INPUT_DIM]>> {
    let n = rows.len();
    let mut out = vec![[false; INPUT_DIM]; n];
    match config.mode {
        IForestMode::PerElement => {
            for j in 0..INPUT_DIM {
                let col = Matrix::from_vec(n, 1, rows.iter().map(|r| r[j]).collect())?;
                let forest = fit(&col, config)?;
                for (i, f) in classify(&forest, &col, config.contamination)?.into_iter().enumerate() {
                    out[i][j] = f;
                }
            }
        }
        IForestMode::Joint6d => {
            let stats = crate::nn::NormStats::fit(rows)?;
            let data = Matrix::from_rows(&rows.iter().map(|r| stats.standardize(r)).collect::<Vec<_>>())?;
            let forest = fit(&data, config)?;
            for (i, f) in classify(&forest, &data, config.contamination)?.into_iter().enumerate() {
                out[i] = [f; INPUT_DIM];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_of_two_matches_hand_value() {
        // 2(ln 1 + γ) - 2·1/2 = 2γ - 1
        let expected = 2.0 * 0.5772156649015329 - 1.0;
        assert!((average_path_length(2) - expected).abs() < 1e-15);
        assert_eq!(average_path_length(1), 0.0);
        // c(256) ≈ 10.2448 (commonly quoted value)
        assert!((average_path_length(256) - 10.2448).abs() < 1e-3);
    }

    #[test]
    fn two_points_one_tree() {
        let data = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let cfg = IForestConfig {
            n_estimators: 1,
            ..Default::default()
        };
        let forest = fit(&data, &cfg).unwrap();
        assert_eq!(forest.mean_path_length(&[0.0]), 1.0);
        assert_eq!(forest.mean_path_length(&[1.0]), 1.0);
    }

    #[test]
    fn constant_data_scores_equal_and_auto_flags_nothing() {
        let data = Matrix::from_rows(&vec![[3.0, 3.0]; 32]).unwrap();
        let forest = fit(&data, &IForestConfig::default()).unwrap();
        let scores = forest.score_all(&data).unwrap();
        assert!(scores.iter().all(|&s| s == scores[0]));
        assert!((scores[0] - 0.5).abs() < 1e-12);
        assert!(classify(&forest, &data, Contamination::AUTO).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn fraction_flags_exact_count_with_row_order_ties() {
        let scores: Vec<f64> = (0..100).map(|i| (i % 7) as f64 / 10.0).collect();
        let flags = flag_scores(&scores, Contamination::Fraction(0.1));
        assert_eq!(flags.iter().filter(|&&f| f).count(), 10);
        let ties = flag_scores(&[0.5; 4], Contamination::Fraction(0.5));
        assert_eq!(ties, vec![true, true, false, false]);
        // ⌈0.07·100⌉ is 7, not 8
        assert_eq!(flag_scores(&scores, Contamination::Fraction(0.07)).iter().filter(|&&f| f).count(), 7);
    }

    #[test]
    fn max_samples_full_uses_every_row() {
        let data = Matrix::from_rows(&(0..8).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let forest = fit(&data, &IForestConfig::default()).unwrap();
        assert!(forest.trees.iter().all(|t| t.sample_size == 8));
        assert!(fit(&Matrix::from_rows(&[[1.0]]).unwrap(), &IForestConfig::default()).is_err());
    }

    #[test]
    fn config_parses_auto_and_fractions() {
        let c: IForestConfig = toml::from_str("contamination = \"auto\"\nmax_samples = 0.5").unwrap();
        assert_eq!(c.contamination, Contamination::AUTO);
        assert_eq!(c.max_samples, MaxSamples::Fraction(0.5));
        let c: IForestConfig = toml::from_str("contamination = 0.1\nmax_samples = 64").unwrap();
        assert_eq!(c.contamination, Contamination::Fraction(0.1));
        assert_eq!(c.max_samples, MaxSamples::Count(64));
    }
}
