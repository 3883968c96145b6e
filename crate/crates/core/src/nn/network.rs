//! Symmetric encoder/decoder with per-sample layer normalization.
//!
//! ```text
//! x ─ dense ─ norm ─ leaky ─ dense ─ z ─ dense ─ norm ─ leaky ─ dense ─ x̂
//!    6→H                      H→L       L→H                   H→6
//! ```
//!
//! All parameters live in one flat vector so the optimizer and finite
//! difference checks can treat them uniformly.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::anchor::anchor_loss_and_grad;
use super::config::{ModelConfig, INPUT_DIM};
use super::matrix::Matrix;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    EncWeight,
    EncBias,
    EncGain,
    EncOffset,
    LatentWeight,
    LatentBias,
    DecWeight,
    DecBias,
    DecGain,
    DecOffset,
    OutWeight,
    OutBias,
}

impl Block {
    pub const ALL: [Block; 12] = [
        Block::EncWeight,
        Block::EncBias,
        Block::EncGain,
        Block::EncOffset,
        Block::LatentWeight,
        Block::LatentBias,
        Block::DecWeight,
        Block::DecBias,
        Block::DecGain,
        Block::DecOffset,
        Block::OutWeight,
        Block::OutBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::EncWeight => "encoder.dense.weight",
            Block::EncBias => "encoder.dense.bias",
            Block::EncGain => "encoder.norm.gain",
            Block::EncOffset => "encoder.norm.offset",
            Block::LatentWeight => "encoder.latent.weight",
            Block::LatentBias => "encoder.latent.bias",
            Block::DecWeight => "decoder.dense.weight",
            Block::DecBias => "decoder.dense.bias",
            Block::DecGain => "decoder.norm.gain",
            Block::DecOffset => "decoder.norm.offset",
            Block::OutWeight => "decoder.output.weight",
            Block::OutBias => "decoder.output.bias",
        }
    }

    /// (rows, cols) of the block; vectors are 1 column.
    pub fn dims(self, hidden: usize, latent: usize) -> (usize, usize) {
        match self {
            Block::EncWeight => (hidden, INPUT_DIM),
            Block::LatentWeight => (latent, hidden),
            Block::DecWeight => (hidden, latent),
            Block::OutWeight => (INPUT_DIM, hidden),
            Block::LatentBias => (latent, 1),
            Block::OutBias => (INPUT_DIM, 1),
            _ => (hidden, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub hidden: usize,
    pub latent: usize,
    pub leaky_slope: f64,
    pub params: Vec<f64>,
}

/// Loss terms for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub anchor: f64,
}

struct NormCache {
    normed: Vec<f64>,
    inv_std: f64,
}

struct RowCache {
    pre1: Vec<f64>,
    norm1: NormCache,
    act_in1: Vec<f64>,
    h1: Vec<f64>,
    z: Vec<f64>,
    norm3: NormCache,
    act_in3: Vec<f64>,
    h3: Vec<f64>,
    xhat: Vec<f64>,
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bias)| bias + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn normalize(a: &[f64]) -> NormCache {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + NORM_EPS).sqrt();
    NormCache {
        normed: a.iter().map(|v| (v - mean) * inv_std).collect(),
        inv_std,
    }
}

/// Gradient through per-sample normalization given d(normed).
fn normalize_backward(cache: &NormCache, d_normed: &[f64]) -> Vec<f64> {
    let n = d_normed.len() as f64;
    let mean_d = d_normed.iter().sum::<f64>() / n;
    let mean_dn = d_normed.iter().zip(&cache.normed).map(|(d, x)| d * x).sum::<f64>() / n;
    d_normed
        .iter()
        .zip(&cache.normed)
        .map(|(d, x)| cache.inv_std * (d - mean_d - x * mean_dn))
        .collect()
}

impl Network {
    pub fn param_count(hidden: usize, latent: usize) -> usize {
        Block::ALL
            .iter()
            .map(|b| {
                let (r, c) = b.dims(hidden, latent);
                r * c
            })
            .sum()
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        let mut start = 0;
        for b in Block::ALL {
            let (r, c) = b.dims(self.hidden, self.latent);
            if b == block {
                return start..start + r * c;
            }
            start += r * c;
        }
        unreachable!()
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.params[self.range(block)]
    }

    /// All-zero parameters (gains included).
    pub fn zeros(hidden: usize, latent: usize, leaky_slope: f64) -> Self {
        Network {
            hidden,
            latent,
            leaky_slope,
            params: vec![0.0; Self::param_count(hidden, latent)],
        }
    }

    /// Glorot-uniform weights, zero biases and offsets, unit gains.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut net = Self::zeros(config.hidden_dim, config.latent_dim, config.leaky_slope);
        for block in Block::ALL {
            let range = net.range(block);
            let (rows, cols) = block.dims(net.hidden, net.latent);
            match block {
                Block::EncWeight | Block::LatentWeight | Block::DecWeight | Block::OutWeight => {
                    let bound = (6.0 / (rows + cols) as f64).sqrt();
                    for p in &mut net.params[range] {
                        *p = rng.gen_range(-bound..bound);
                    }
                }
                Block::EncGain | Block::DecGain => net.params[range].fill(1.0),
                _ => {}
            }
        }
        net
    }

    fn leaky(&self, v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            self.leaky_slope * v
        }
    }

    fn leaky_grad(&self, v: f64) -> f64 {
        if v > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    fn forward_row(&self, x: &[f64]) -> RowCache {
        let pre1 = dense(self.block(Block::EncWeight), self.block(Block::EncBias), x);
        let norm1 = normalize(&pre1);
        let act_in1: Vec<f64> = norm1
            .normed
            .iter()
            .zip(self.block(Block::EncGain))
            .zip(self.block(Block::EncOffset))
            .map(|((n, g), o)| g * n + o)
            .collect();
        let h1: Vec<f64> = act_in1.iter().map(|&v| self.leaky(v)).collect();
        let z = dense(self.block(Block::LatentWeight), self.block(Block::LatentBias), &h1);
        let pre3 = dense(self.block(Block::DecWeight), self.block(Block::DecBias), &z);
        let norm3 = normalize(&pre3);
        let act_in3: Vec<f64> = norm3
            .normed
            .iter()
            .zip(self.block(Block::DecGain))
            .zip(self.block(Block::DecOffset))
            .map(|((n, g), o)| g * n + o)
            .collect();
        let h3: Vec<f64> = act_in3.iter().map(|&v| self.leaky(v)).collect();
        let xhat = dense(self.block(Block::OutWeight), self.block(Block::OutBias), &h3);
        RowCache {
            pre1,
            norm1,
            act_in1,
            h1,
            z,
            norm3,
            act_in3,
            h3,
            xhat,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols != INPUT_DIM || x.rows == 0 {
            return Err(Error::Shape {
                expected: format!("B×{INPUT_DIM} with B ≥ 1"),
                got: format!("{}×{}", x.rows, x.cols),
            });
        }
        Ok(())
    }

    /// Latent codes and reconstructions for a batch. Rows are processed
    /// independently, so results do not depend on batch composition.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_input(x)?;
        let mut z = Matrix::zeros(x.rows, self.latent);
        let mut xhat = Matrix::zeros(x.rows, INPUT_DIM);
        for (i, row) in x.iter_rows().enumerate() {
            let c = self.forward_row(row);
            z.row_mut(i).copy_from_slice(&c.z);
            xhat.row_mut(i).copy_from_slice(&c.xhat);
        }
        Ok((z, xhat))
    }

    /// Batch loss `MSE + λ·anchor` and its gradient for every parameter.
    /// `anchor = None` skips the anchor term entirely.
    pub fn loss_and_grad(&self, x: &Matrix, anchor: Option<(f64, usize)>) -> Result<(LossParts, Vec<f64>)> {
        self.check_input(x)?;
        let b = x.rows;
        let caches: Vec<RowCache> = x.iter_rows().map(|r| self.forward_row(r)).collect();

        let denom = (b * INPUT_DIM) as f64;
        let mut sse = 0.0;
        for (cache, row) in caches.iter().zip(x.iter_rows()) {
            for (p, t) in cache.xhat.iter().zip(row) {
                sse += (p - t) * (p - t);
            }
        }
        let reconstruction = sse / denom;

        let z = Matrix {
            rows: b,
            cols: self.latent,
            data: caches.iter().flat_map(|c| c.z.iter().copied()).collect(),
        };
        let (anchor_value, dz_anchor, lambda) = match anchor {
            Some((lambda, k)) => {
                let (value, grad) = anchor_loss_and_grad(&z, k);
                (value, Some(grad), lambda)
            }
            None => (0.0, None, 0.0),
        };
        let total = reconstruction + lambda * anchor_value;

        let mut grad = vec![0.0; self.params.len()];
        let r = |blk| self.range(blk);
        let (r_w1, r_b1, r_g1, r_o1) = (r(Block::EncWeight), r(Block::EncBias), r(Block::EncGain), r(Block::EncOffset));
        let (r_w2, r_b2) = (r(Block::LatentWeight), r(Block::LatentBias));
        let (r_w3, r_b3, r_g3, r_o3) = (r(Block::DecWeight), r(Block::DecBias), r(Block::DecGain), r(Block::DecOffset));
        let (r_w4, r_b4) = (r(Block::OutWeight), r(Block::OutBias));
        let (h, l) = (self.hidden, self.latent);

        for (i, (c, xrow)) in caches.iter().zip(x.iter_rows()).enumerate() {
            // output layer
            let dxhat: Vec<f64> = c.xhat.iter().zip(xrow).map(|(p, t)| 2.0 * (p - t) / denom).collect();
            let mut dh3 = vec![0.0; h];
            for o in 0..INPUT_DIM {
                grad[r_b4.start + o] += dxhat[o];
                for j in 0..h {
                    grad[r_w4.start + o * h + j] += dxhat[o] * c.h3[j];
                    dh3[j] += self.params[r_w4.start + o * h + j] * dxhat[o];
                }
            }
            // decoder hidden: activation, gain/offset, normalization
            let mut dnorm3 = vec![0.0; h];
            for j in 0..h {
                let dact = dh3[j] * self.leaky_grad(c.act_in3[j]);
                grad[r_g3.start + j] += dact * c.norm3.normed[j];
                grad[r_o3.start + j] += dact;
                dnorm3[j] = dact * self.params[r_g3.start + j];
            }
            let dpre3 = normalize_backward(&c.norm3, &dnorm3);
            let mut dz = vec![0.0; l];
            for j in 0..h {
                grad[r_b3.start + j] += dpre3[j];
                for q in 0..l {
                    grad[r_w3.start + j * l + q] += dpre3[j] * c.z[q];
                    dz[q] += self.params[r_w3.start + j * l + q] * dpre3[j];
                }
            }
            if let Some(dza) = &dz_anchor {
                for q in 0..l {
                    dz[q] += lambda * dza.data[i * l + q];
                }
            }
            // latent layer
            let mut dh1 = vec![0.0; h];
            for q in 0..l {
                grad[r_b2.start + q] += dz[q];
                for j in 0..h {
                    grad[r_w2.start + q * h + j] += dz[q] * c.h1[j];
                    dh1[j] += self.params[r_w2.start + q * h + j] * dz[q];
                }
            }
            // encoder hidden
            let mut dnorm1 = vec![0.0; h];
            for j in 0..h {
                let dact = dh1[j] * self.leaky_grad(c.act_in1[j]);
                grad[r_g1.start + j] += dact * c.norm1.normed[j];
                grad[r_o1.start + j] += dact;
                dnorm1[j] = dact * self.params[r_g1.start + j];
            }
            let dpre1 = normalize_backward(&c.norm1, &dnorm1);
            debug_assert_eq!(dpre1.len(), c.pre1.len());
            for j in 0..h {
                grad[r_b1.start + j] += dpre1[j];
                for (q, xv) in xrow.iter().enumerate() {
                    grad[r_w1.start + j * INPUT_DIM + q] += dpre1[j] * xv;
                }
            }
        }

        Ok((
            LossParts {
                total,
                reconstruction,
                anchor: anchor_value,
            },
            grad,
        ))
    }

    /// Loss only (no gradient), used by finite-difference checks.
    pub fn loss(&self, x: &Matrix, anchor: Option<(f64, usize)>) -> Result<LossParts> {
        let (z, xhat) = self.forward(x)?;
        let reconstruction = mse(x, &xhat);
        let (anchor_value, lambda) = match anchor {
            Some((lambda, k)) => (super::anchor::anchor_loss(&z, k), lambda),
            None => (0.0, 0.0),
        };
        Ok(LossParts {
            total: reconstruction + lambda * anchor_value,
            reconstruction,
            anchor: anchor_value,
        })
    }
}

/// Mean squared error averaged over rows and columns.
pub fn mse(x: &Matrix, xhat: &Matrix) -> f64 {
    let n = x.data.len() as f64;
    x.data.iter().zip(&xhat.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// `MSE(x, x̂) + λ·anchor(z)`.
pub fn total_loss(x: &Matrix, xhat: &Matrix, z: &Matrix, config: &ModelConfig) -> Result<f64> {
    if x.rows != xhat.rows || x.cols != xhat.cols || z.rows != x.rows {
        return Err(Error::Shape {
            expected: format!("{}×{} reconstruction and {} latent rows", x.rows, x.cols, x.rows),
            got: format!("{}×{} and {} rows", xhat.rows, xhat.cols, z.rows),
        });
    }
    let lambda = config.effective_lambda();
    let anchor = if lambda == 0.0 {
        0.0
    } else {
        super::anchor::anchor_loss(z, config.k_neighbors)
    };
    Ok(mse(x, xhat) + lambda * anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, b: usize) -> Matrix {
        let data = (0..b * INPUT_DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Matrix::from_vec(b, INPUT_DIM, data).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(16, 5, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, xhat) = net.forward(&random_batch(&mut rng, 4)).unwrap();
        assert!(xhat.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_output_independent_of_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::init(&ModelConfig::default(), &mut rng);
        let x = random_batch(&mut rng, 1);
        let mut big = random_batch(&mut rng, 16);
        big.row_mut(9).copy_from_slice(x.row(0));
        let (z1, x1) = net.forward(&x).unwrap();
        let (z16, x16) = net.forward(&big).unwrap();
        assert_eq!(z1.row(0), z16.row(9));
        assert_eq!(x1.row(0), x16.row(9));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Network::zeros(4, 2, 0.2);
        let x = Matrix::zeros(3, 5);
        assert!(matches!(net.forward(&x), Err(Error::Shape { .. })));
        assert!(net.forward(&Matrix::zeros(0, 6)).is_err());
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        // Zero network on zero input reconstructs exactly with identical latents.
        let net = Network::zeros(4, 2, 0.2);
        let x = Matrix::zeros(5, INPUT_DIM);
        let (loss, grad) = net.loss_and_grad(&x, Some((0.1, 3))).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(grad.iter().all(|g| g.abs() <= 1e-10));
    }

    #[test]
    fn total_loss_reduces_to_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ModelConfig::default();
        let net = Network::init(&cfg, &mut rng);
        let x = random_batch(&mut rng, 8);
        let (z, xhat) = net.forward(&x).unwrap();
        let plain = ModelConfig { lambda_anchor: 0.0, ..cfg.clone() };
        assert_eq!(total_loss(&x, &xhat, &z, &plain).unwrap(), mse(&x, &xhat));
        let with = total_loss(&x, &xhat, &z, &cfg).unwrap();
        let expect = mse(&x, &xhat) + 0.1 * super::super::anchor::anchor_loss(&z, 3);
        assert_eq!(with, expect);
    }

    #[test]
    fn loss_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::init(&ModelConfig::default(), &mut rng);
        let x = random_batch(&mut rng, 16);
        let a = net.loss(&x, Some((0.1, 3))).unwrap();
        let (b, _) = net.loss_and_grad(&x, Some((0.1, 3))).unwrap();
        assert!((a.total - b.total).abs() < 1e-14);
    }
}
