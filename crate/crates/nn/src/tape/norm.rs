//! Per-feature batch normalization over every axis except the last.

use crate::Float;

pub(crate) struct BnForward<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Normalizes with the batch's own (biased) statistics.
pub(crate) fn forward_batch<T: Float>(x: &[T], c: usize, gamma: &[T], beta: &[T], eps: T) -> BnForward<T> {
    let rows = x.len() / c;
    let inv_rows = T::one() / T::lit(rows as f64);
    let mut mean = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_rows);
    let mut var = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s *= inv_rows);
    let out = forward_with(x, c, gamma, beta, &mean, &var, eps);
    BnForward { mean, var, ..out }
}

/// Normalizes with externally supplied statistics (running averages).
pub(crate) fn forward_with<T: Float>(
    x: &[T],
    c: usize,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> BnForward<T> {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(x.len());
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(c) {
        for j in 0..c {
            let xh = (row[j] - mean[j]) * inv_std[j];
            xhat.push(xh);
            y.push(gamma[j] * xh + beta[j]);
        }
    }
    BnForward { y, xhat, inv_std, mean: mean.to_vec(), var: var.to_vec() }
}

pub(crate) struct BnGrads<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

pub(crate) fn backward<T: Float>(
    grad: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    c: usize,
    batch_stats: bool,
) -> BnGrads<T> {
    let rows = grad.len() / c;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (g, xh) in grad.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for j in 0..c {
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
        }
    }
    let mut dx = vec![T::zero(); grad.len()];
    if batch_stats {
        // dxhat = g * gamma; dx = inv_std / R * (R*dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        // with sum(dxhat) = gamma * dbeta and sum(dxhat * xhat) = gamma * dgamma.
        let r = T::lit(rows as f64);
        for ((d, g), xh) in dx.chunks_exact_mut(c).zip(grad.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
            for j in 0..c {
                let scale = gamma[j] * inv_std[j] / r;
                d[j] = scale * (r * g[j] - dbeta[j] - xh[j] * dgamma[j]);
            }
        }
    } else {
        for (d, g) in dx.chunks_exact_mut(c).zip(grad.chunks_exact(c)) {
            for j in 0..c {
                d[j] = g[j] * gamma[j] * inv_std[j];
            }
        }
    }
    BnGrads { dx, dgamma, dbeta }
}
