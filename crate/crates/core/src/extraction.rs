//! Fixed-length highlight search over attention and frame curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::{
    centroid_curve, chunk, energy_curve, log_compress, mel_from_spectrogram, rolloff_curve, AudioClip, CurveKind,
    FrameCurve, MelChunk, Spectrogram, FRAMES_PER_CHUNK, ROLLOFF_PERCENT, SAMPLE_RATE,
};
use crate::models::{AttentionCurve, Model};
use crate::{Error, Result};

pub const DEFAULT_TARGET_SEC: f64 = 30.0;

/// Slack for float window arithmetic such as `30 / 3`.
const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Attention,
    Energy,
    Centroid,
    Rolloff,
    Fused,
    Middle,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Attention => "attention",
            Source::Energy => "energy",
            Source::Centroid => "centroid",
            Source::Rolloff => "rolloff",
            Source::Fused => "fused",
            Source::Middle => "middle",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Source::Attention, Source::Energy, Source::Centroid, Source::Rolloff, Source::Fused, Source::Middle]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// A `[start_sec, end_sec)` interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub start_sec: f64,
    pub end_sec: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Highlight {
    pub fn len_sec(&self) -> f64 {
        self.end_sec - self.start_sec
    }
}

/// One line of `extract` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlightRecord {
    pub clip_id: String,
    #[serde(flatten)]
    pub highlight: Highlight,
}

/// Start index of the `window` consecutive values with the largest sum,
/// earliest on ties. A window longer than the curve covers all of it.
pub fn window_argmax(curve: &[f64], window: usize) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::invalid("cannot search an empty curve"));
    }
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if window >= curve.len() {
        return Ok(0);
    }
    // each window is summed left to right from scratch so equal windows
    // compare equal regardless of position
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=curve.len() - window {
        let s: f64 = curve[start..start + window].iter().sum();
        if s > best.1 {
            best = (start, s);
        }
    }
    Ok(best.0)
}

/// `[start, start + target)` moved left as needed to end inside the song;
/// the whole song when it is shorter than `target`.
fn place(start: f64, duration: f64, target: f64, source: Source, lambda: Option<f64>) -> Result<Highlight> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!("song duration {duration} must be positive")));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("target length {target} must be positive")));
    }
    let (start_sec, end_sec) = if duration <= target {
        (0.0, duration)
    } else {
        let start = start.min(duration - target).max(0.0);
        (start, start + target)
    };
    Ok(Highlight { start_sec, end_sec, source, lambda })
}

/// Best run of `ceil(target / chunk_seconds)` chunks.
pub fn extract_from_attention(alpha: &AttentionCurve, duration: f64, target_sec: f64) -> Result<Highlight> {
    if alpha.scores.is_empty() {
        return Err(Error::invalid("attention curve is empty"));
    }
    if !(alpha.chunk_seconds > 0.0) {
        return Err(Error::invalid("chunk_seconds must be positive"));
    }
    let window = (target_sec / alpha.chunk_seconds - EPS).ceil().max(1.0) as usize;
    let start = window_argmax(&alpha.scores, window)?;
    place(start as f64 * alpha.chunk_seconds, duration, target_sec, Source::Attention, None)
}

/// Piecewise-constant frame curve: frame `f` takes the score of the chunk
/// holding it. Frames past the last chunk repeat its score.
pub fn upsample_attention(alpha: &AttentionCurve, n_frames: usize, hop_seconds: f64) -> Result<FrameCurve> {
    if alpha.scores.is_empty() || n_frames == 0 {
        return Err(Error::invalid("cannot upsample an empty attention curve"));
    }
    let per_chunk = (alpha.chunk_seconds / hop_seconds).round().max(1.0) as usize;
    let covered = n_frames.div_ceil(per_chunk);
    if covered.abs_diff(alpha.scores.len()) > 1 {
        return Err(Error::invalid(format!(
            "{n_frames} frames span {covered} chunks of {per_chunk}, attention has {}",
            alpha.scores.len()
        )));
    }
    let last = alpha.scores.len() - 1;
    let values = (0..n_frames).map(|f| alpha.scores[(f / per_chunk).min(last)]).collect();
    Ok(FrameCurve { values, hop_seconds, kind: CurveKind::AttentionUpsampled })
}

/// Maps to `[0, 1]` by `(x - min) / (max - min)`; a constant curve maps to
/// zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / range).collect()
}

/// `lambda * energy + (1 - lambda) * attention`, both min-max normalized.
pub fn fuse_curves(energy: &FrameCurve, attention_up: &FrameCurve, lambda: f64) -> Result<FrameCurve> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("fusion weight {lambda} outside [0, 1]")));
    }
    if energy.len() != attention_up.len() {
        return Err(Error::invalid(format!("energy has {} frames, attention {}", energy.len(), attention_up.len())));
    }
    let e = min_max_normalize(&energy.values);
    let a = min_max_normalize(&attention_up.values);
    let values = e.iter().zip(&a).map(|(&e, &a)| lambda * e + (1.0 - lambda) * a).collect();
    Ok(FrameCurve { values, hop_seconds: energy.hop_seconds, kind: CurveKind::Fused })
}

fn frame_search(
    curve: &FrameCurve,
    duration: f64,
    target_sec: f64,
    source: Source,
    lambda: Option<f64>,
) -> Result<Highlight> {
    if !(curve.hop_seconds > 0.0) {
        return Err(Error::invalid("hop_seconds must be positive"));
    }
    let window = (target_sec / curve.hop_seconds + EPS).floor().max(1.0) as usize;
    let start = window_argmax(&curve.values, window)?;
    place(start as f64 * curve.hop_seconds, duration, target_sec, source, lambda)
}

/// Best run of `floor(target / hop)` frames (1291 for 30 s).
pub fn extract_from_frame_curve(curve: &FrameCurve, duration: f64, target_sec: f64) -> Result<Highlight> {
    let source = match curve.kind {
        CurveKind::Energy => Source::Energy,
        CurveKind::Centroid => Source::Centroid,
        CurveKind::Rolloff => Source::Rolloff,
        CurveKind::AttentionUpsampled => Source::Attention,
        CurveKind::Fused => Source::Fused,
    };
    frame_search(curve, duration, target_sec, source, None)
}

/// The middle `target_sec` of the song.
pub fn middle_baseline(duration: f64, target_sec: f64) -> Result<Highlight> {
    place(duration / 2.0 - target_sec / 2.0, duration, target_sec, Source::Middle, None)
}

/// Spectrogram, inference chunks and duration of one song.
#[derive(Clone, Debug)]
pub struct SongFeatures {
    pub duration: f64,
    pub spectrogram: Spectrogram,
    /// Log-mel chunks with the trailing partial chunk zero-padded.
    pub chunks: Vec<MelChunk>,
}

impl SongFeatures {
    pub fn from_clip(clip: &AudioClip) -> Result<Self> {
        let clip = clip.resampled(SAMPLE_RATE)?;
        let spectrogram = Spectrogram::compute(&clip)?;
        let mel = log_compress(mel_from_spectrogram(&spectrogram))?;
        let chunks = chunk(&mel, FRAMES_PER_CHUNK, true)?;
        Ok(SongFeatures { duration: clip.duration_sec(), spectrogram, chunks })
    }

    pub fn curve(&self, kind: CurveKind) -> Result<FrameCurve> {
        match kind {
            CurveKind::Energy => Ok(energy_curve(&self.spectrogram)),
            CurveKind::Centroid => Ok(centroid_curve(&self.spectrogram)),
            CurveKind::Rolloff => rolloff_curve(&self.spectrogram, ROLLOFF_PERCENT),
            other => Err(Error::invalid(format!("{other:?} is not a spectral curve"))),
        }
    }

    pub fn attention(&self, model: &Model) -> Result<AttentionCurve> {
        Ok(model.predict(&self.chunks)?.1)
    }
}

/// A highlight extraction method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Middle,
    /// Energy, centroid or roll-off curve, min-max normalized.
    Spectral(CurveKind),
    Attention,
    /// Energy fused with upsampled attention at weight `lambda` on energy.
    Fused(f64),
}

impl Method {
    pub fn needs_model(self) -> bool {
        matches!(self, Method::Attention | Method::Fused(_))
    }

    pub fn label(self) -> String {
        match self {
            Method::Middle => "middle".into(),
            Method::Spectral(k) => format!("{k:?}").to_lowercase(),
            Method::Attention => "attention".into(),
            Method::Fused(l) => format!("fused_{l}"),
        }
    }
}

/// Runs `method` on a song. Spectral curves are min-max normalized first,
/// which leaves the argmax unchanged and makes the fused curve at
/// `lambda = 1` identical to the energy curve searched here. At
/// `lambda = 0` the fused curve is constant within chunks and the search
/// runs at chunk resolution, exactly as for pure attention.
pub fn extract(song: &SongFeatures, method: Method, model: Option<&Model>, target_sec: f64) -> Result<Highlight> {
    let need_model = || model.ok_or_else(|| Error::invalid(format!("method {} needs a model", method.label())));
    match method {
        Method::Middle => middle_baseline(song.duration, target_sec),
        Method::Spectral(kind) => {
            let raw = song.curve(kind)?;
            let curve = FrameCurve { values: min_max_normalize(&raw.values), ..raw };
            extract_from_frame_curve(&curve, song.duration, target_sec)
        }
        Method::Attention => extract_from_attention(&song.attention(need_model()?)?, song.duration, target_sec),
        Method::Fused(lambda) => {
            let alpha = song.attention(need_model()?)?;
            if lambda == 0.0 {
                let h = extract_from_attention(&alpha, song.duration, target_sec)?;
                return Ok(Highlight { source: Source::Fused, lambda: Some(0.0), ..h });
            }
            let energy = song.curve(CurveKind::Energy)?;
            let up = upsample_attention(&alpha, energy.len(), energy.hop_seconds)?;
            let fused = fuse_curves(&energy, &up, lambda)?;
            frame_search(&fused, song.duration, target_sec, Source::Fused, Some(lambda))
        }
    }
}
