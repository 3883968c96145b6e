//! Latent k-nearest-neighbour anchor term.
//!
//! `L = (1/B) Σ_i mean_{j ∈ kNN(i)} ‖z_i − z_j‖`, self excluded, with
//! `k` clamped to `B − 1`. Batches of fewer than two rows contribute zero.

use super::matrix::Matrix;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of the `k` nearest rows to row `i` (ties broken by index).
pub(crate) fn nearest(z: &Matrix, i: usize, k: usize) -> Vec<(usize, f64)> {
    let zi = z.row(i);
    let mut d: Vec<(usize, f64)> = (0..z.rows)
        .filter(|&j| j != i)
        .map(|j| (j, distance(zi, z.row(j))))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d
}

pub fn effective_k(batch: usize, k: usize) -> usize {
    k.min(batch.saturating_sub(1))
}

pub fn anchor_loss(z: &Matrix, k: usize) -> f64 {
    anchor_loss_and_grad(z, k).0
}

/// Loss and its gradient with respect to every latent row. The neighbour
/// assignment is held fixed; each distance pushes gradient to both ends.
pub fn anchor_loss_and_grad(z: &Matrix, k: usize) -> (f64, Matrix) {
    let b = z.rows;
    let mut grad = Matrix::zeros(b, z.cols);
    let k = effective_k(b, k);
    if b < 2 || k == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / (b as f64 * k as f64);
    let mut loss = 0.0;
    for i in 0..b {
        for (j, d) in nearest(z, i, k) {
            loss += d;
            if d > 0.0 {
                for c in 0..z.cols {
                    let g = scale * (z.data[i * z.cols + c] - z.data[j * z.cols + c]) / d;
                    grad.data[i * z.cols + c] += g;
                    grad.data[j * z.cols + c] -= g;
                }
            }
        }
    }
    (loss * scale, grad)
}

/// Mean distance from `query` to its `k` nearest rows of `reference`.
pub fn knn_distance(reference: &Matrix, query: &[f64], k: usize) -> f64 {
    if reference.rows == 0 {
        return 0.0;
    }
    let mut d: Vec<f64> = reference.iter_rows().map(|r| distance(r, query)).collect();
    d.sort_by(f64::total_cmp);
    let k = k.clamp(1, d.len());
    d[..k].iter().sum::<f64>() / k as f64
}
