//! Log-mel front end on a synthetic chirp: spectrogram frames, the 128 mel
//! bands and the 129-frame chunks the networks consume.
//!
//!     cargo run --example mel_chunks -- [seconds]

use highlighter::audio::{
    chunk, log_compress, mel_from_spectrogram, AudioClip, Spectrogram, FRAMES_PER_CHUNK, HOP_SECONDS, N_MELS,
    SAMPLE_RATE,
};

fn main() -> highlighter::Result<()> {
    let seconds: f64 = std::env::args().nth(1).map(|s| s.parse().expect("seconds")).unwrap_or(10.0);
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let sr = SAMPLE_RATE as f64;
    // 100 Hz to 5 kHz linear sweep
    let rate = (5000.0 - 100.0) / seconds;
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            (0.5 * (std::f64::consts::TAU * (100.0 * t + 0.5 * rate * t * t)).sin()) as f32
        })
        .collect();
    let clip = AudioClip::new(samples, SAMPLE_RATE)?;

    let spec = Spectrogram::compute(&clip)?;
    let mel = log_compress(mel_from_spectrogram(&spec))?;
    let chunks = chunk(&mel, FRAMES_PER_CHUNK, true)?;
    println!("{:.2} s -> {} frames of {:.1} ms", clip.duration_sec(), spec.n_frames(), HOP_SECONDS * 1e3);
    println!("{} chunks of {}x{}", chunks.len(), FRAMES_PER_CHUNK, N_MELS);

    for c in &chunks {
        // loudest mel band in the chunk, averaged over its valid frames
        let mut band = vec![0.0f64; N_MELS];
        for f in 0..c.valid_frames {
            for (b, v) in band.iter_mut().zip(&c.data[f * N_MELS..(f + 1) * N_MELS]) {
                *b += *v as f64;
            }
        }
        let peak = band.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        println!("  chunk {:>2}: {:>3} frames, peak band {peak}", c.index, c.valid_frames);
    }
    Ok(())
}
