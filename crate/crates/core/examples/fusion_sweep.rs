//! Sweeps the fusion weight between the energy curve (lambda = 1) and the
//! attention curve (lambda = 0) and shows where the highlight moves.
//!
//!     cargo run --release --example fusion_sweep -- [model.pmhl]
//!
//! Without a model file an untrained network is used, which still shows
//! the endpoints agreeing with the two pure methods.

use highlighter::audio::{AudioClip, CurveKind, SAMPLE_RATE};
use highlighter::extraction::{extract, Method, SongFeatures};
use highlighter::models::{load_model, LossKind, Model, ModelConfig, Variant};

fn track() -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    // loud but plain opening, a quieter bright passage later
    let samples = (0..(120.0 * sr) as usize)
        .map(|i| {
            let t = i as f64 / sr;
            let v = if t < 30.0 {
                0.6 * (std::f64::consts::TAU * 110.0 * t).sin()
            } else if (70.0..95.0).contains(&t) {
                0.25 * ((std::f64::consts::TAU * 1760.0 * t).sin() + (std::f64::consts::TAU * 2640.0 * t).sin())
            } else {
                0.1 * (std::f64::consts::TAU * 220.0 * t).sin()
            };
            v as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("valid clip")
}

fn main() -> highlighter::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => load_model(p)?,
        None => Model::new(ModelConfig::new(Variant::NamLfPos, 8, LossKind::Bce), 3)?,
    };
    let song = SongFeatures::from_clip(&track())?;
    let energy = extract(&song, Method::Spectral(CurveKind::Energy), None, 30.0)?;
    let attention = extract(&song, Method::Attention, Some(&model), 30.0)?;
    println!("energy     {:>6.2} s", energy.start_sec);
    println!("attention  {:>6.2} s", attention.start_sec);
    for k in 0..=10 {
        let lambda = k as f64 / 10.0;
        let h = extract(&song, Method::Fused(lambda), Some(&model), 30.0)?;
        println!("lambda {lambda:.1} {:>6.2} s", h.start_sec);
    }
    Ok(())
}
