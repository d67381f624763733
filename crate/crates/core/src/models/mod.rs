//! The attention network variants, their inference outputs and the model
//! file format.

mod config;
mod io;
mod network;

pub use config::{LossKind, ModelConfig, Variant};
pub use io::{load_model, read_model, save_model, write_model, MAGIC};
pub use network::{Model, Outputs};

use crate::{Error, Result};

/// Sinusoidal encoding of 1-based position `t`: `sin` on odd (1-based)
/// coordinates, `cos` on even ones, wavelengths geometric in `10000^(2z/M)`.
pub fn positional_encoding(t: usize, m: usize) -> Result<Vec<f64>> {
    if m == 0 || !m.is_multiple_of(2) {
        return Err(Error::invalid(format!("positional encoding needs an even, positive size, got {m}")));
    }
    if t == 0 {
        return Err(Error::invalid("positions are 1-based"));
    }
    let mut p = Vec::with_capacity(m);
    for z in 0..m / 2 {
        let angle = t as f64 / 10000f64.powf(2.0 * z as f64 / m as f64);
        p.push(angle.sin());
        p.push(angle.cos());
    }
    Ok(p)
}

/// Per-chunk attention weights for one song.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionCurve {
    pub scores: Vec<f64>,
    pub chunk_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `[T][C]`; `None` for early fusion.
    pub chunk_level: Option<Vec<Vec<f64>>>,
    pub song_level: Vec<f64>,
}

/// `Σ_t α_t ŷ_t`.
pub fn late_fusion(chunk_level: &[Vec<f64>], attention: &AttentionCurve) -> Result<Vec<f64>> {
    if chunk_level.len() != attention.scores.len() || chunk_level.is_empty() {
        return Err(Error::invalid(format!(
            "{} chunk predictions for {} attention weights",
            chunk_level.len(),
            attention.scores.len()
        )));
    }
    let c = chunk_level[0].len();
    let mut out = vec![0.0; c];
    for (row, &a) in chunk_level.iter().zip(&attention.scores) {
        if row.len() != c {
            return Err(Error::invalid("ragged chunk predictions"));
        }
        for (o, &y) in out.iter_mut().zip(row) {
            *o += a * y;
        }
    }
    Ok(out)
}
