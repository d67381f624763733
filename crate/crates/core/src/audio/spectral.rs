use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FRAMES_PER_CHUNK, HOP, HOP_SECONDS, N_BINS, N_FFT, N_MELS, SAMPLE_RATE};
use crate::{Error, Result};

/// Magnitude STFT: periodic Hamming window of [`N_FFT`] samples, hop [`HOP`],
/// frames centered on `k * HOP` after reflect-padding by `N_FFT / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    /// `[n_frames × N_BINS]`, row-major.
    magnitudes: Vec<f32>,
    n_frames: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn compute(clip: &AudioClip) -> Result<Self> {
        let x = clip.samples();
        if x.len() < N_FFT {
            return Err(Error::invalid(format!("clip has {} samples, need at least {N_FFT}", x.len())));
        }
        let pad = N_FFT / 2;
        let mut padded = Vec::with_capacity(x.len() + 2 * pad);
        padded.extend((1..=pad).rev().map(|i| x[i] as f64));
        padded.extend(x.iter().map(|&v| v as f64));
        padded.extend((0..pad).map(|i| x[x.len() - 2 - i] as f64));

        let n_frames = 1 + x.len() / HOP;
        let window: Vec<f64> = (0..N_FFT).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / N_FFT as f64).cos()).collect();
        let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(N_FFT);
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut magnitudes = Vec::with_capacity(n_frames * N_BINS);
        for f in 0..n_frames {
            let frame = &padded[f * HOP..f * HOP + N_FFT];
            for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
                *b = Complex::new(s * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            magnitudes.extend(buf[..N_BINS].iter().map(|c| c.norm() as f32));
        }
        Ok(Spectrogram { magnitudes, n_frames, sample_rate: clip.sample_rate() })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.magnitudes[i * N_BINS..(i + 1) * N_BINS]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.magnitudes.chunks_exact(N_BINS)
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / N_FFT as f64
    }

    pub fn hop_seconds(&self) -> f64 {
        HOP as f64 / self.sample_rate as f64
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    // linear below 1 kHz, logarithmic above
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        MIN_LOG_HZ / F_SP + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_MEL: f64 = 15.0;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= MIN_LOG_MEL {
        1000.0 * (logstep * (mel - MIN_LOG_MEL)).exp()
    } else {
        mel * F_SP
    }
}

/// `[N_MELS × N_BINS]` triangular filters equally spaced on the mel scale
/// from 0 Hz to Nyquist, each scaled to unit area in Hz.
pub fn mel_filterbank() -> Vec<f64> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..N_MELS + 2).map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64)).collect();
    let mut fb = vec![0.0; N_MELS * N_BINS];
    for m in 0..N_MELS {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..N_BINS {
            let f = k as f64 * SAMPLE_RATE as f64 / N_FFT as f64;
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            fb[m * N_BINS + k] = rise.min(fall).max(0.0) * norm;
        }
    }
    fb
}

/// Mel power spectrogram, `[n_frames × N_MELS]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    frames: Vec<f32>,
    n_frames: usize,
    compressed: bool,
}

impl MelSpectrogram {
    pub fn from_frames(frames: Vec<f32>, compressed: bool) -> Result<Self> {
        if !frames.len().is_multiple_of(N_MELS) {
            return Err(Error::invalid(format!("{} values is not a multiple of {N_MELS} mel bands", frames.len())));
        }
        if !compressed && frames.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("uncompressed mel power must be finite and non-negative"));
        }
        Ok(MelSpectrogram { n_frames: frames.len() / N_MELS, frames, compressed })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * N_MELS..(i + 1) * N_MELS]
    }

    pub fn data(&self) -> &[f32] {
        &self.frames
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    pub fn hop_seconds(&self) -> f64 {
        HOP_SECONDS
    }
}

pub fn mel_from_spectrogram(spec: &Spectrogram) -> MelSpectrogram {
    let fb = mel_filterbank();
    // each triangle is non-zero on one contiguous run of bins
    let spans: Vec<(usize, usize)> = fb
        .chunks_exact(N_BINS)
        .map(|row| {
            let lo = row.iter().position(|&w| w != 0.0).unwrap_or(0);
            let hi = row.iter().rposition(|&w| w != 0.0).map_or(lo, |i| i + 1);
            (lo, hi)
        })
        .collect();
    let mut frames = Vec::with_capacity(spec.n_frames() * N_MELS);
    let mut power = vec![0.0f64; N_BINS];
    for mag in spec.frames() {
        for (p, &m) in power.iter_mut().zip(mag) {
            *p = m as f64 * m as f64;
        }
        for (row, &(lo, hi)) in fb.chunks_exact(N_BINS).zip(&spans) {
            frames.push(row[lo..hi].iter().zip(&power[lo..hi]).map(|(w, p)| w * p).sum::<f64>() as f32);
        }
    }
    MelSpectrogram { n_frames: spec.n_frames(), frames, compressed: false }
}

pub fn mel_spectrogram(clip: &AudioClip) -> Result<MelSpectrogram> {
    if clip.sample_rate() != SAMPLE_RATE {
        return Err(Error::invalid(format!("mel front end expects {SAMPLE_RATE} Hz, got {}", clip.sample_rate())));
    }
    Ok(mel_from_spectrogram(&Spectrogram::compute(clip)?))
}

/// `g(x) = ln(1 + 10000 x)` elementwise.
pub fn log_compress(spec: MelSpectrogram) -> Result<MelSpectrogram> {
    if spec.compressed {
        return Err(Error::invalid("mel spectrogram is already log-compressed"));
    }
    let frames = spec.frames.into_iter().map(|v| (10000.0 * v as f64).ln_1p() as f32).collect();
    Ok(MelSpectrogram { frames, n_frames: spec.n_frames, compressed: true })
}

/// One `[FRAMES_PER_CHUNK × N_MELS]` block of log-mel frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MelChunk {
    pub data: Vec<f32>,
    /// 1-based position within the song.
    pub index: usize,
    /// Frames that came from audio rather than zero padding.
    pub valid_frames: usize,
}

/// Splits into consecutive non-overlapping blocks. A trailing partial block
/// is zero-padded when `pad_last`, dropped otherwise.
pub fn chunk(spec: &MelSpectrogram, frames_per_chunk: usize, pad_last: bool) -> Result<Vec<MelChunk>> {
    if !spec.compressed {
        return Err(Error::invalid("chunking expects a log-compressed spectrogram"));
    }
    if frames_per_chunk == 0 {
        return Err(Error::invalid("frames_per_chunk must be positive"));
    }
    let full = spec.n_frames / frames_per_chunk;
    let rest = spec.n_frames % frames_per_chunk;
    if full == 0 && !pad_last {
        return Err(Error::invalid(format!(
            "{} frames is shorter than one {frames_per_chunk}-frame chunk",
            spec.n_frames
        )));
    }
    let width = frames_per_chunk * N_MELS;
    let mut out: Vec<MelChunk> = spec
        .frames
        .chunks_exact(width)
        .enumerate()
        .map(|(i, block)| MelChunk { data: block.to_vec(), index: i + 1, valid_frames: frames_per_chunk })
        .collect();
    if pad_last && rest > 0 {
        let mut data = spec.frames[full * width..].to_vec();
        data.resize(width, 0.0);
        out.push(MelChunk { data, index: full + 1, valid_frames: rest });
    }
    Ok(out)
}

impl MelChunk {
    pub fn n_frames(&self) -> usize {
        self.data.len() / N_MELS
    }
}

/// Default chunking used throughout: [`FRAMES_PER_CHUNK`] frames per chunk.
pub fn song_chunks(clip: &AudioClip, pad_last: bool) -> Result<Vec<MelChunk>> {
    chunk(&log_compress(mel_spectrogram(clip)?)?, FRAMES_PER_CHUNK, pad_last)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Energy,
    Centroid,
    Rolloff,
    AttentionUpsampled,
    Fused,
}

/// One value per STFT frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCurve {
    pub values: Vec<f64>,
    pub hop_seconds: f64,
    pub kind: CurveKind,
}

impl FrameCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `time_sec,value` rows, time with six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_sec,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.6},{}", i as f64 * self.hop_seconds, v)?;
        }
        Ok(())
    }
}

/// Root-mean-square of each frame's magnitude spectrum.
pub fn energy_curve(spec: &Spectrogram) -> FrameCurve {
    let values =
        spec.frames().map(|m| (m.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / N_BINS as f64).sqrt()).collect();
    FrameCurve { values, hop_seconds: spec.hop_seconds(), kind: CurveKind::Energy }
}

/// Magnitude-weighted mean frequency in Hz; 0 for silent frames.
pub fn centroid_curve(spec: &Spectrogram) -> FrameCurve {
    let values = spec
        .frames()
        .map(|m| {
            let total: f64 = m.iter().map(|&v| v as f64).sum();
            if total == 0.0 {
                return 0.0;
            }
            m.iter().enumerate().map(|(k, &v)| spec.bin_hz(k) * v as f64).sum::<f64>() / total
        })
        .collect();
    FrameCurve { values, hop_seconds: spec.hop_seconds(), kind: CurveKind::Centroid }
}

/// Lowest bin frequency at which cumulative power reaches `percent` of the
/// frame total; 0 for silent frames.
pub fn rolloff_curve(spec: &Spectrogram, percent: f64) -> Result<FrameCurve> {
    if !(percent > 0.0 && percent < 1.0) {
        return Err(Error::invalid(format!("roll-off percent {percent} outside (0, 1)")));
    }
    let mut power = vec![0.0f64; N_BINS];
    let values = spec
        .frames()
        .map(|m| {
            for (p, &v) in power.iter_mut().zip(m) {
                *p = v as f64 * v as f64;
            }
            let total: f64 = power.iter().sum();
            if total == 0.0 {
                return 0.0;
            }
            let threshold = percent * total;
            let mut acc = 0.0;
            for (k, p) in power.iter().enumerate() {
                acc += p;
                if acc >= threshold {
                    return spec.bin_hz(k);
                }
            }
            spec.bin_hz(N_BINS - 1)
        })
        .collect();
    Ok(FrameCurve { values, hop_seconds: spec.hop_seconds(), kind: CurveKind::Rolloff })
}
