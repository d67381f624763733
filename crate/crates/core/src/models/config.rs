use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "RNAM_LF")]
    RnamLf,
    #[serde(rename = "NAM_LF_POS")]
    NamLfPos,
    #[serde(rename = "NAM_EF_POS")]
    NamEfPos,
    #[serde(rename = "NAM_LF")]
    NamLf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RnamLf, Variant::NamLfPos, Variant::NamEfPos, Variant::NamLf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RnamLf => "RNAM_LF",
            Variant::NamLfPos => "NAM_LF_POS",
            Variant::NamEfPos => "NAM_EF_POS",
            Variant::NamLf => "NAM_LF",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self == Variant::RnamLf
    }

    pub fn uses_positions(self) -> bool {
        matches!(self, Variant::NamLfPos | Variant::NamEfPos)
    }

    pub fn is_early_fusion(self) -> bool {
        self == Variant::NamEfPos
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_").replace(['(', ')'], "");
        Variant::ALL.into_iter().find(|v| v.name() == norm).ok_or_else(|| {
            Error::invalid(format!("unknown variant `{s}` (expected RNAM_LF, NAM_LF_POS, NAM_EF_POS or NAM_LF)"))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Multi-label targets.
    Bce,
    /// Single-label targets.
    Cce,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bce" => Ok(LossKind::Bce),
            "cce" => Ok(LossKind::Cce),
            _ => Err(Error::invalid(format!("unknown loss `{s}` (expected bce or cce)"))),
        }
    }
}

/// Architecture hyperparameters. The defaults are the full-size network;
/// smaller values exist for tests and toy models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_classes: usize,
    pub chunks_per_clip: usize,
    pub chunk_seconds: f64,
    pub loss_kind: LossKind,
    pub frames_per_chunk: usize,
    pub n_mels: usize,
    /// Output channels of the three convolutions; the last is the
    /// embedding size M.
    pub conv_channels: [usize; 3],
    pub attention_hidden: usize,
    pub lstm_hidden: usize,
    pub predictor_hidden: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, n_classes: usize, loss_kind: LossKind) -> Self {
        ModelConfig {
            variant,
            n_classes,
            chunks_per_clip: 8,
            chunk_seconds: 3.0,
            loss_kind,
            frames_per_chunk: crate::audio::FRAMES_PER_CHUNK,
            n_mels: crate::audio::N_MELS,
            conv_channels: [64, 128, 256],
            attention_hidden: 256,
            lstm_hidden: 512,
            predictor_hidden: 1024,
            dropout: 0.5,
        }
    }

    /// A network small enough for finite-difference checks: 25x8 chunks and
    /// single-digit layer widths.
    pub fn toy(variant: Variant, n_classes: usize, loss_kind: LossKind) -> Self {
        ModelConfig {
            frames_per_chunk: 25,
            n_mels: 8,
            conv_channels: [3, 4, 6],
            attention_hidden: 5,
            lstm_hidden: 3,
            predictor_hidden: 7,
            ..ModelConfig::new(variant, n_classes, loss_kind)
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.conv_channels[2]
    }

    /// Time lengths after each convolution.
    pub fn conv_lengths(&self) -> Option<[usize; 3]> {
        let t1 = self.frames_per_chunk.checked_sub(3)? / 2 + 1;
        let t2 = t1.checked_sub(4)? / 2 + 1;
        let t3 = t2.checked_sub(4)? / 2 + 1;
        Some([t1, t2, t3])
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(format!("invalid model config: {m}")));
        if self.n_classes < 2 {
            return fail(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if !self.embed_dim().is_multiple_of(2) {
            return fail(format!("embedding size {} must be even for positional encoding", self.embed_dim()));
        }
        if self.conv_lengths().is_none() {
            return fail(format!("{} frames per chunk is too short for the convolution stack", self.frames_per_chunk));
        }
        if self.n_mels == 0 || self.chunks_per_clip == 0 {
            return fail("n_mels and chunks_per_clip must be positive".into());
        }
        if !(self.chunk_seconds > 0.0 && self.chunk_seconds.is_finite()) {
            return fail(format!("chunk_seconds {} must be positive", self.chunk_seconds));
        }
        if [self.attention_hidden, self.lstm_hidden, self.predictor_hidden].contains(&0)
            || self.conv_channels.contains(&0)
        {
            return fail("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
