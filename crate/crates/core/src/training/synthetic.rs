//! Clips whose label is carried by one loud, band-limited burst placed in a
//! class-dependent chunk over a low noise floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{ClipSource, Dataset, DatasetDescriptor, LabeledClip, Split};
use crate::audio::{AudioClip, FRAMES_PER_CHUNK, HOP, SAMPLE_RATE};
use crate::{Error, Result};

/// Frames kept clear between the burst and its chunk's borders, so no
/// analysis window of a neighbouring chunk reaches the burst.
const EDGE_FRAMES: usize = 4;
const LOWEST_HZ: f64 = 200.0;
const HIGHEST_HZ: f64 = 4000.0;
const PARTIALS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub clip_seconds: f64,
    /// Standard deviation of the white noise floor.
    pub noise_level: f64,
    /// Peak amplitude of the burst before per-clip jitter.
    pub burst_level: f64,
    pub chunks_per_clip: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_classes: usize, per_class: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_classes,
            per_class,
            clip_seconds: 24.0,
            noise_level: 0.02,
            burst_level: 0.5,
            chunks_per_clip: 8,
            seed,
        }
    }

    /// 1-based chunk holding the burst for `class`.
    pub fn burst_chunk(&self, class: usize) -> usize {
        class % self.chunks_per_clip + 1
    }

    /// Centre frequency for `class`, geometric between 200 Hz and 4 kHz.
    pub fn center_hz(&self, class: usize) -> f64 {
        let ratio = HIGHEST_HZ / LOWEST_HZ;
        LOWEST_HZ * ratio.powf(class as f64 / (self.n_classes - 1) as f64)
    }

    /// Sample range `[start, end)` the burst occupies for `class`.
    pub fn burst_samples(&self, class: usize) -> (usize, usize) {
        let t = self.burst_chunk(class) - 1;
        let start = (t * FRAMES_PER_CHUNK + EDGE_FRAMES) * HOP;
        let end = ((t + 1) * FRAMES_PER_CHUNK - EDGE_FRAMES) * HOP;
        (start, end)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticClip {
    pub clip_id: String,
    pub audio: AudioClip,
    pub class: usize,
    /// 1-based.
    pub burst_chunk: usize,
}

fn check(spec: &SyntheticSpec) -> Result<usize> {
    if spec.n_classes < 2 {
        return Err(Error::invalid(format!("synthetic data needs at least 2 classes, got {}", spec.n_classes)));
    }
    if spec.chunks_per_clip == 0 || spec.per_class == 0 {
        return Err(Error::invalid("chunks_per_clip and per_class must be positive"));
    }
    if !(spec.noise_level >= 0.0 && spec.burst_level > 0.0 && spec.noise_level.is_finite() && spec.burst_level <= 1.0) {
        return Err(Error::invalid("noise level must be >= 0 and burst level in (0, 1]"));
    }
    let n = (spec.clip_seconds * SAMPLE_RATE as f64).round() as usize;
    let need = spec.chunks_per_clip * FRAMES_PER_CHUNK * HOP;
    if n < need {
        return Err(Error::invalid(format!(
            "{} s clips are too short for {} chunks",
            spec.clip_seconds, spec.chunks_per_clip
        )));
    }
    Ok(n)
}

/// Generates `n_classes * per_class` clips, classes interleaved. Each clip
/// draws from its own stream of the seed, so clip `i` does not depend on
/// how many clips come before it.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SyntheticClip>> {
    let n = check(spec)?;
    let total = spec.n_classes * spec.per_class;
    (0..total).map(|i| Ok(synth_clip(spec, i, n))).collect()
}

fn synth_clip(spec: &SyntheticSpec, i: usize, n: usize) -> SyntheticClip {
    let class = i % spec.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let noise = spec.noise_level * 3f64.sqrt();
    let mut samples: Vec<f64> = (0..n).map(|_| noise * rng.random_range(-1.0..1.0)).collect();

    let (start, end) = spec.burst_samples(class);
    let fc = spec.center_hz(class);
    let amp = spec.burst_level * rng.random_range(0.7..1.0) / PARTIALS as f64;
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| (fc * rng.random_range(0.95..1.05), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let fade = (0.02 * SAMPLE_RATE as f64) as usize;
    let len = end - start;
    for k in 0..len {
        let edge = k.min(len - 1 - k);
        let env = if edge < fade { 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / fade as f64).cos() } else { 1.0 };
        let t = k as f64 / SAMPLE_RATE as f64;
        let v: f64 = partials.iter().map(|&(f, ph)| (std::f64::consts::TAU * f * t + ph).sin()).sum();
        samples[start + k] += amp * env * v;
    }
    let samples = samples.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect();
    SyntheticClip {
        clip_id: format!("syn{i:05}"),
        audio: AudioClip::new(samples, SAMPLE_RATE).expect("non-empty clip at a positive rate"),
        class,
        burst_chunk: spec.burst_chunk(class),
    }
}

/// Wraps generated clips as a dataset. Within each class the last
/// `val_per_class` clips are marked for validation.
pub fn synthetic_dataset(spec: &SyntheticSpec, clips: Vec<SyntheticClip>, val_per_class: usize) -> Result<Dataset> {
    if val_per_class > spec.per_class {
        return Err(Error::invalid(format!("{val_per_class} validation clips per class exceeds {}", spec.per_class)));
    }
    let descriptor = DatasetDescriptor {
        n_classes: spec.n_classes,
        label_names: (0..spec.n_classes).map(|k| format!("class_{k}")).collect(),
    };
    let first_val = spec.per_class - val_per_class;
    let clips = clips
        .into_iter()
        .enumerate()
        .map(|(i, c)| LabeledClip {
            clip_id: c.clip_id,
            source: ClipSource::Audio(c.audio),
            labels: vec![c.class],
            split: Some(if i / spec.n_classes >= first_val { Split::Val } else { Split::Train }),
        })
        .collect();
    Ok(Dataset { descriptor, clips })
}
