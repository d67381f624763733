//! The signal-processing baselines on a song with a loud middle section.
//!
//!     cargo run --example spectral_baselines -- [song.wav]

use highlighter::audio::{load_audio, AudioClip, CurveKind, SAMPLE_RATE};
use highlighter::extraction::{extract, Method, SongFeatures, DEFAULT_TARGET_SEC};

fn loud_middle() -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let n = (120.0 * sr) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let amp = if (60.0..90.0).contains(&t) { 0.8 } else { 0.1 };
            (amp * (std::f64::consts::TAU * 440.0 * t).sin()) as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("valid clip")
}

fn main() -> highlighter::Result<()> {
    let clip = match std::env::args().nth(1) {
        Some(path) => load_audio(path, SAMPLE_RATE)?,
        None => loud_middle(),
    };
    let song = SongFeatures::from_clip(&clip)?;
    println!("duration {:.1} s", song.duration);
    let methods = [
        Method::Middle,
        Method::Spectral(CurveKind::Energy),
        Method::Spectral(CurveKind::Centroid),
        Method::Spectral(CurveKind::Rolloff),
    ];
    for m in methods {
        let h = extract(&song, m, None, DEFAULT_TARGET_SEC)?;
        println!("{:<9} {:>7.2} .. {:>7.2}", m.label(), h.start_sec, h.end_sec);
    }
    Ok(())
}
