use serde::{Deserialize, Serialize};

use super::config::INPUT_DIM;
use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-12;

/// Per-element standardization fitted on a training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; INPUT_DIM],
    pub std: [f64; INPUT_DIM],
}

impl NormStats {
    pub fn fit(rows: &[[f64; INPUT_DIM]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit normalization on zero rows"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in training matrix"));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; INPUT_DIM];
        for r in rows {
            for j in 0..INPUT_DIM {
                mean[j] += r[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for (j, m) in mean.iter_mut().enumerate() {
            // exact for constant columns, so they standardize to exactly 0
            if rows.iter().all(|r| r[j] == rows[0][j]) {
                *m = rows[0][j];
            }
        }
        let mut std = [0.0; INPUT_DIM];
        for r in rows {
            for j in 0..INPUT_DIM {
                std[j] += (r[j] - mean[j]).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s < MIN_STD {
                *s = 1.0;
            }
        }
        Ok(NormStats { mean, std })
    }

    pub fn standardize(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }

    pub fn unstandardize(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|j| x[j] * self.std[j] + self.mean[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_standardizes_to_zero() {
        let rows: Vec<[f64; 6]> = (0..10).map(|i| [1.0, i as f64, 2.0, 3.0, 4.0, 5.0]).collect();
        let stats = NormStats::fit(&rows).unwrap();
        assert_eq!(stats.std[0], 1.0);
        for r in &rows {
            assert_eq!(stats.standardize(r)[0], 0.0);
        }
    }

    #[test]
    fn inverse_and_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<[f64; 6]> = (0..200)
            .map(|_| std::array::from_fn(|j| rng.gen_range(-100.0..100.0) * (j + 1) as f64 + 50.0))
            .collect();
        let stats = NormStats::fit(&rows).unwrap();
        let mut col_sum = [0.0; 6];
        for r in &rows {
            let z = stats.standardize(r);
            let back = stats.unstandardize(&z);
            for j in 0..6 {
                assert!((back[j] - r[j]).abs() <= 1e-12 * r[j].abs().max(1.0));
                col_sum[j] += z[j];
            }
        }
        for s in col_sum {
            assert!((s / rows.len() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(NormStats::fit(&[[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]]).is_err());
    }
}
