//! Audio input, the log-mel front end, and per-frame spectral curves.

mod resample;
mod spectral;

use std::path::Path;

pub use resample::resample;
pub use spectral::{
    centroid_curve, chunk, energy_curve, log_compress, mel_filterbank, mel_from_spectrogram, mel_spectrogram,
    rolloff_curve, song_chunks, CurveKind, FrameCurve, MelChunk, MelSpectrogram, Spectrogram,
};

use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 22050;
pub const N_FFT: usize = 2048;
pub const HOP: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 128;
pub const FRAMES_PER_CHUNK: usize = 129;
pub const HOP_SECONDS: f64 = HOP as f64 / SAMPLE_RATE as f64;
pub const ROLLOFF_PERCENT: f64 = 0.85;

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("audio clip is empty"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn resampled(&self, target_rate: u32) -> Result<AudioClip> {
        if target_rate == 0 {
            return Err(Error::invalid("target sample rate must be positive"));
        }
        AudioClip::new(resample(&self.samples, self.sample_rate, target_rate), target_rate)
    }
}

/// Decodes a PCM WAV file (16/24-bit integer or 32-bit float, mono or
/// stereo), averages channels and resamples to `target_rate`.
pub fn load_audio(path: impl AsRef<Path>, target_rate: u32) -> Result<AudioClip> {
    let path = path.as_ref();
    let wav_err = |err| Error::Wav { path: path.to_path_buf(), err };
    let unsupported = |detail: String| Error::UnsupportedAudio { path: path.to_path_buf(), detail };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(unsupported(format!("{channels} channels")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            reader.samples::<f32>().collect::<std::result::Result<_, _>>().map_err(wav_err)?
        }
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => return Err(unsupported(format!("{bits}-bit {fmt:?}"))),
    };
    if interleaved.len() < channels {
        return Err(unsupported("zero-length audio".into()));
    }
    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f32>() / channels as f32).clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| unsupported(e.to_string()))?.resampled(target_rate)
}

/// Writes a mono 32-bit float WAV. Floats round-trip exactly through
/// [`load_audio`] at the same rate.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    crate::write_atomic(path, |file| {
        let mut w = hound::WavWriter::new(file, spec).map_err(std::io::Error::other)?;
        for &s in &clip.samples {
            w.write_sample(s).map_err(std::io::Error::other)?;
        }
        w.finalize().map_err(std::io::Error::other)
    })
}
