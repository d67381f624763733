#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use highlighter::audio::{write_wav, AudioClip, SAMPLE_RATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_highlighter"));
    c.env_remove("HIGHLIGHTER_JOBS").env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn highlighter")
}

pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn toy_model() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy_nam_lf_pos.pmhl")
}

/// Noise floor with a louder 440 Hz tone over `[loud.0, loud.1)` seconds.
pub fn loud_region_wav(path: &Path, seconds: f64, loud: (f64, f64), seed: u64) {
    let sr = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..(seconds * sr) as usize)
        .map(|i| {
            let t = i as f64 / sr;
            let tone = if t >= loud.0 && t < loud.1 { 0.5 * (std::f64::consts::TAU * 440.0 * t).sin() } else { 0.0 };
            (tone + 0.01 * rng.random_range(-1.0..1.0)) as f32
        })
        .collect();
    write_wav(path, &AudioClip::new(samples, SAMPLE_RATE).unwrap()).unwrap();
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
