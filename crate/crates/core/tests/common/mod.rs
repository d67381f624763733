//! Test-only oracles, written independently of the library code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

use highlighter::audio::MelChunk;
use highlighter::models::{LossKind, Model, ModelConfig, Variant};
use highlighter::Error;
use highlighter_nn::gradcheck::{check_params, CheckResult, DEFAULT_STEP};
use highlighter_nn::{NormMode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: f64 = 22050.0;

/// Slow reference log-mel spectrogram: direct DFT, explicit mirror padding,
/// filterbank built from closed-form mel breakpoints. Returns
/// `[n_frames][128]` log-compressed values.
pub fn reference_log_mel(x: &[f32]) -> Vec<Vec<f64>> {
    let fb = reference_filterbank();
    reference_power(x)
        .iter()
        .map(|power| {
            fb.iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(power).map(|(w, p)| w * p).sum();
                    (1.0 + 10000.0 * e).ln()
                })
                .collect()
        })
        .collect()
}

/// `[n_frames][1025]` power spectra of the centered, windowed frames.
pub fn reference_power(x: &[f32]) -> Vec<Vec<f64>> {
    let n = 2048usize;
    let hop = 512usize;
    let bins = n / 2 + 1;
    let len = x.len() as isize;
    let mirror = |i: isize| -> f64 {
        let j = if i < 0 {
            -i
        } else if i >= len {
            2 * (len - 1) - i
        } else {
            i
        };
        x[j as usize] as f64
    };
    let hamming: Vec<f64> = (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let mut cos_t = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    for i in 0..n {
        cos_t[i] = (2.0 * PI * i as f64 / n as f64).cos();
        sin_t[i] = (2.0 * PI * i as f64 / n as f64).sin();
    }
    let frames = x.len() / hop + 1;
    let mut out = Vec::with_capacity(frames);
    let mut seg = vec![0.0; n];
    for f in 0..frames {
        let center = (f * hop) as isize;
        for (i, s) in seg.iter_mut().enumerate() {
            *s = mirror(center - (n / 2) as isize + i as isize) * hamming[i];
        }
        let mut power = vec![0.0; bins];
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &s in &seg {
                re += s * cos_t[idx];
                im -= s * sin_t[idx];
                idx = (idx + k) % n;
            }
            *p = re * re + im * im;
        }
        out.push(power);
    }
    out
}

/// 128 slaney-style triangles from 0 to 11025 Hz, area-normalized.
pub fn reference_filterbank() -> Vec<Vec<f64>> {
    // 66.67 Hz per mel below 1 kHz; 27 mels per factor 6.4 above
    let to_mel = |f: f64| if f < 1000.0 { f * 3.0 / 200.0 } else { 15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln() };
    let to_hz = |m: f64| if m < 15.0 { m * 200.0 / 3.0 } else { 1000.0 * 6.4f64.powf((m - 15.0) / 27.0) };
    let top = to_mel(11025.0);
    let pts: Vec<f64> = (0..130).map(|i| to_hz(i as f64 * top / 129.0)).collect();
    (0..128)
        .map(|m| {
            (0..1025)
                .map(|k| {
                    let f = k as f64 * SR / 2048.0;
                    let w = if f <= pts[m] || f >= pts[m + 2] {
                        0.0
                    } else if f <= pts[m + 1] {
                        (f - pts[m]) / (pts[m + 1] - pts[m])
                    } else {
                        (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1])
                    };
                    w * 2.0 / (pts[m + 2] - pts[m])
                })
                .collect()
        })
        .collect()
}

/// Ten deterministic 3.2 s fixtures: sines, chirps and noise.
pub fn dsp_fixtures() -> Vec<(&'static str, Vec<f32>)> {
    let len = (3.2 * SR) as usize;
    let t = |i: usize| i as f64 / SR;
    let tone = |f: f64, a: f64| (0..len).map(|i| (a * (2.0 * PI * f * t(i)).sin()) as f32).collect::<Vec<_>>();
    let mut lcg = 0x2545_f491_4f6c_dd1du64;
    let mut noise = || {
        lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((lcg >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let white: Vec<f32> = (0..len).map(|_| (0.5 * noise()) as f32).collect();
    let mut brown = Vec::with_capacity(len);
    let mut acc = 0.0;
    for _ in 0..len {
        acc = 0.995 * acc + 0.02 * noise();
        brown.push(acc as f32);
    }
    let lin_chirp: Vec<f32> =
        (0..len).map(|i| (0.8 * (2.0 * PI * (100.0 * t(i) + 0.5 * 3000.0 * t(i) * t(i))).sin()) as f32).collect();
    let exp_chirp: Vec<f32> = (0..len)
        .map(|i| {
            // 50 Hz to 10 kHz, exponential sweep
            let k = (10000.0f64 / 50.0).ln() / 3.2;
            (0.6 * (2.0 * PI * 50.0 * ((k * t(i)).exp() - 1.0) / k).sin()) as f32
        })
        .collect();
    let chord: Vec<f32> = (0..len)
        .map(|i| [261.63, 329.63, 392.0].iter().map(|f| 0.3 * (2.0 * PI * f * t(i)).sin()).sum::<f64>() as f32)
        .collect();
    let am: Vec<f32> = (0..len)
        .map(|i| (0.7 * (1.0 + (2.0 * PI * 4.0 * t(i)).sin()) / 2.0 * (2.0 * PI * 2500.0 * t(i)).sin()) as f32)
        .collect();
    let burst: Vec<f32> = (0..len)
        .map(|i| if (1.0..1.5).contains(&t(i)) { (0.9 * (2.0 * PI * 700.0 * t(i)).sin()) as f32 } else { 0.0 })
        .collect();
    vec![
        ("sine_440", tone(440.0, 1.0)),
        ("sine_1000_quiet", tone(1000.0, 0.05)),
        ("sine_7000", tone(7000.0, 0.5)),
        ("linear_chirp", lin_chirp),
        ("exp_chirp", exp_chirp),
        ("white_noise", white),
        ("brown_noise", brown),
        ("c_major_chord", chord),
        ("am_tone", am),
        ("tone_burst_in_silence", burst),
    ]
}

/// Max over bins of |a - b| / max(|b|, 1e-6).
pub fn max_rel_err(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs() / y.abs().max(1e-6)).fold(0.0, f64::max)
}

pub fn sine(freq: f64, amp: f64, seconds: f64, rate: f64) -> Vec<f32> {
    (0..(seconds * rate) as usize).map(|i| (amp * (2.0 * PI * freq * i as f64 / rate).sin()) as f32).collect()
}

/// Case-by-case interval intersection, written without min/max.
pub fn brute_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = if a.0 > b.0 { a.0 } else { b.0 };
    let hi = if a.1 < b.1 { a.1 } else { b.1 };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// `(R, P, F, matched)` by scanning every section; first strict maximum wins.
pub fn brute_score(h: (f64, f64), sections: &[(f64, f64)]) -> (f64, f64, f64, Option<usize>) {
    let overlaps: Vec<f64> = sections.iter().map(|&s| brute_overlap(h, s)).collect();
    let mut idx = None;
    for (i, &o) in overlaps.iter().enumerate() {
        let better = match idx {
            None => o > 0.0,
            Some(j) => o > overlaps[j],
        };
        if better {
            idx = Some(i);
        }
    }
    match idx {
        None => (0.0, 0.0, 0.0, None),
        Some(i) => {
            let r = overlaps[i] / (sections[i].1 - sections[i].0);
            let p = overlaps[i] / (h.1 - h.0);
            (r, p, 2.0 * r * p / (r + p), Some(i))
        }
    }
}

const PRE_BN_SCALE: f64 = 10.0;

pub fn scaled_chunks(config: &ModelConfig, n: usize, seed: u64, scale: f32) -> Vec<MelChunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| MelChunk {
            data: (0..config.frames_per_chunk * config.n_mels).map(|_| rng.random_range(0.0..scale)).collect(),
            index: i + 1,
            valid_frames: config.frames_per_chunk,
        })
        .collect()
}

/// Finite-difference check of the whole NAM_LF_POS graph on a toy network:
/// two songs of two chunks, batch statistics, dropout off.
pub fn nam_lf_pos_check(seed: u64) -> CheckResult {
    let config = ModelConfig::toy(Variant::NamLfPos, 3, LossKind::Bce);
    let mut model = Model::<f32>::new(config.clone(), seed).unwrap().cast::<f64>();
    let chunks = scaled_chunks(&config, 4, seed + 100, 1.0);
    // Weights feeding a batch norm only matter up to scale, so the k-th
    // derivative grows like |w|^-k; evaluate at a larger scale where the same
    // function has curvature the fixed step can resolve.
    let pre_bn: Vec<_> = model
        .params()
        .iter()
        .filter(|(_, p)| {
            p.name.starts_with("features.conv")
                || p.name.starts_with("attention.fc")
                || p.name == "predictor.fc1.weight"
        })
        .map(|(id, _)| id)
        .collect();
    for id in pre_bn {
        let v = model.params().value(id).map(|w| w * PRE_BN_SCALE);
        model.params_mut().set(id, v).unwrap();
    }
    let refs: Vec<&MelChunk> = chunks.iter().collect();
    let input = model.input_tensor(&refs).unwrap();
    let target = Tensor::new(&[2, 3], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    check_params(model.params(), DEFAULT_STEP, |tape, store| {
        let mut m = model.clone();
        *m.params_mut() = store.clone();
        let x = tape.constant(input.clone());
        let out = m.record(tape, x, 2, NormMode::Train, None, &mut Vec::new()).map_err(|e| match e {
            Error::Nn(e) => e,
            other => panic!("{other}"),
        })?;
        tape.binary_cross_entropy(out.song_prediction, &target)
    })
    .unwrap()
}
