//! Highlight extraction with a trained model: attention curve, the 30 s
//! attention highlight, and the energy and fused alternatives.
//!
//!     cargo run --release --example extract_highlight -- model.pmhl [song.wav]
//!
//! Without a song, a 90 s synthetic track is used whose 40-50 s stretch
//! carries a tone burst.

use highlighter::audio::{load_audio, AudioClip, CurveKind, SAMPLE_RATE};
use highlighter::extraction::{extract, Method, SongFeatures, DEFAULT_TARGET_SEC};
use highlighter::models::load_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn demo_track() -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples = (0..(90.0 * sr) as usize)
        .map(|i| {
            let t = i as f64 / sr;
            let burst = if (40.0..50.0).contains(&t) { 0.3 * (std::f64::consts::TAU * 660.0 * t).sin() } else { 0.0 };
            (burst + 0.02 * rng.random_range(-1.0..1.0)) as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("valid clip")
}

fn main() -> highlighter::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = load_model(args.next().expect("usage: extract_highlight MODEL [SONG]"))?;
    let clip = match args.next() {
        Some(p) => load_audio(p, SAMPLE_RATE)?,
        None => demo_track(),
    };
    let song = SongFeatures::from_clip(&clip)?;
    let alpha = song.attention(&model)?;
    println!("{} chunks, {:.1} s", alpha.scores.len(), song.duration);
    for (i, a) in alpha.scores.iter().enumerate() {
        println!("  {:>6.1} s  {:.4} {}", i as f64 * alpha.chunk_seconds, a, "#".repeat((a * 200.0) as usize));
    }
    for m in [Method::Attention, Method::Spectral(CurveKind::Energy), Method::Fused(0.5)] {
        let h = extract(&song, m, Some(&model), DEFAULT_TARGET_SEC)?;
        println!("{}", serde_json::to_string(&h).expect("serializable"));
    }
    Ok(())
}
