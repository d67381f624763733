mod common;

use std::f64::consts::PI;

use highlighter::audio::{
    centroid_curve, chunk, energy_curve, load_audio, log_compress, mel_filterbank, mel_spectrogram, rolloff_curve,
    write_wav, AudioClip, MelSpectrogram, Spectrogram, FRAMES_PER_CHUNK, HOP_SECONDS, N_BINS, N_MELS, SAMPLE_RATE,
};
use proptest::prelude::*;

fn clip(samples: Vec<f32>) -> AudioClip {
    AudioClip::new(samples, SAMPLE_RATE).unwrap()
}

fn write_int_wav(path: &std::path::Path, rate: u32, bits: u16, channels: &[Vec<f64>]) {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: rate,
        bits_per_sample: bits,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    let scale = ((1i64 << (bits - 1)) - 1) as f64;
    for i in 0..channels[0].len() {
        for ch in channels {
            w.write_sample((ch[i] * scale).round() as i32).unwrap();
        }
    }
    w.finalize().unwrap();
}

#[test]
fn log_mel_matches_reference_on_all_fixtures() {
    for (name, x) in common::dsp_fixtures() {
        let reference = common::reference_log_mel(&x);
        let mel = log_compress(mel_spectrogram(&clip(x)).unwrap()).unwrap();
        assert_eq!(mel.n_frames(), reference.len(), "{name}");
        let chunks = chunk(&mel, FRAMES_PER_CHUNK, false).unwrap();
        assert_eq!(chunks[0].data.len(), 129 * 128);
        for c in &chunks {
            for f in 0..FRAMES_PER_CHUNK {
                let row = &c.data[f * N_MELS..(f + 1) * N_MELS];
                let err = common::max_rel_err(row, &reference[(c.index - 1) * FRAMES_PER_CHUNK + f]);
                assert!(err < 1e-3, "{name} chunk {} frame {f}: {err}", c.index);
            }
        }
    }
}

#[test]
fn filterbank_matches_reference_construction() {
    let fb = mel_filterbank();
    for (m, row) in common::reference_filterbank().iter().enumerate() {
        for (k, &w) in row.iter().enumerate() {
            assert!((fb[m * N_BINS + k] - w).abs() <= 1e-12 * w.abs().max(1e-3), "band {m} bin {k}");
        }
    }
}

#[test]
fn sine_energy_lands_in_the_bands_covering_its_frequency() {
    let mel = mel_spectrogram(&clip(common::sine(440.0, 1.0, 2.0, 22050.0))).unwrap();
    let fb = mel_filterbank();
    let bin = (440.0f64 * 2048.0 / 22050.0).round() as usize;
    let covering: Vec<usize> = (0..N_MELS).filter(|&m| fb[m * N_BINS + bin] > 0.0).collect();
    for f in 5..mel.n_frames() - 5 {
        let row = mel.frame(f);
        let total: f32 = row.iter().sum();
        let inside: f32 = covering.iter().map(|&m| row[m]).sum();
        assert!(inside / total > 0.9, "frame {f}: {}", inside / total);
    }
}

#[test]
fn silence_gives_zero_mel_and_zero_curves() {
    let c = clip(vec![0.0; 22050]);
    let mel = mel_spectrogram(&c).unwrap();
    assert!(mel.data().iter().all(|&v| v == 0.0));
    let spec = Spectrogram::compute(&c).unwrap();
    assert!(energy_curve(&spec).values.iter().all(|&v| v == 0.0));
    assert!(centroid_curve(&spec).values.iter().all(|&v| v == 0.0));
    assert!(rolloff_curve(&spec, 0.85).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn three_seconds_cover_the_first_chunk() {
    let mel = mel_spectrogram(&clip(vec![0.01; 3 * 22050])).unwrap();
    assert!(mel.n_frames() >= 129);
    assert_eq!(mel.n_frames(), 1 + 3 * 22050 / 512);
    // a 24 s clip yields exactly eight training chunks
    let mel = log_compress(mel_spectrogram(&clip(vec![0.01; 24 * 22050])).unwrap()).unwrap();
    assert_eq!(mel.n_frames(), 1034);
    assert_eq!(chunk(&mel, 129, false).unwrap().len(), 8);
}

#[test]
fn short_clip_is_rejected() {
    assert!(mel_spectrogram(&clip(vec![0.1; 2047])).is_err());
    assert!(mel_spectrogram(&AudioClip::new(vec![0.1; 4096], 44100).unwrap()).is_err());
}

#[test]
fn energy_scales_linearly_with_amplitude() {
    let a = Spectrogram::compute(&clip(common::sine(523.0, 0.2, 1.0, 22050.0))).unwrap();
    let b = Spectrogram::compute(&clip(common::sine(523.0, 0.4, 1.0, 22050.0))).unwrap();
    for (x, y) in energy_curve(&a).values.iter().zip(&energy_curve(&b).values) {
        assert!((y - 2.0 * x).abs() <= 1e-5 * y.abs());
    }
}

#[test]
fn energy_step_is_located_at_the_nearest_frame() {
    let mut x = common::sine(300.0, 0.1, 10.0, 22050.0);
    for (i, v) in x.iter_mut().enumerate().skip(5 * 22050) {
        *v = (0.8 * (2.0 * PI * 300.0 * i as f64 / 22050.0).sin()) as f32;
    }
    let e = energy_curve(&Spectrogram::compute(&clip(x)).unwrap()).values;
    let jump = (1..e.len()).max_by(|&a, &b| (e[a] - e[a - 1]).total_cmp(&(e[b] - e[b - 1]))).unwrap();
    let nearest = (5.0 / HOP_SECONDS).round() as usize;
    assert!(jump.abs_diff(nearest) <= 1, "jump at {jump}, expected {nearest}");
}

#[test]
fn tone_rolloff_sits_on_the_tone() {
    let spec = Spectrogram::compute(&clip(common::sine(1000.0, 0.5, 2.0, 22050.0))).unwrap();
    let bin_width = 22050.0 / 2048.0;
    let r = rolloff_curve(&spec, 0.85).unwrap().values;
    for &v in &r[3..spec.n_frames() - 3] {
        assert!((v - 1000.0).abs() <= bin_width, "rolloff {v}");
    }
}

#[test]
fn tone_centroid_matches_direct_dft() {
    // Magnitude weighting lets the Hamming sidelobes pull a pure tone's
    // centroid ~10% above the tone, so compare against a direct DFT.
    let x = common::sine(1000.0, 0.5, 1.0, 22050.0);
    let c = centroid_curve(&Spectrogram::compute(&clip(x.clone())).unwrap()).values;
    for (f, power) in common::reference_power(&x).iter().enumerate() {
        let mags: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
        let want = mags.iter().enumerate().map(|(k, m)| k as f64 * 22050.0 / 2048.0 * m).sum::<f64>()
            / mags.iter().sum::<f64>();
        assert!((c[f] - want).abs() < 1e-4 * want, "frame {f}: {} vs {want}", c[f]);
        if f >= 3 && f + 3 < c.len() {
            assert!(c[f] > 1000.0 && c[f] < 1250.0, "frame {f}: {}", c[f]);
        }
    }
}

/// `E|S_k|` for a zero-mean complex Gaussian with the window-induced
/// covariance of the real and imaginary parts, by quadrature over angle.
fn expected_magnitude(window: &[f64], k: usize) -> f64 {
    let n = window.len();
    let (mut vr, mut vi, mut cov) = (0.0, 0.0, 0.0);
    for (i, w) in window.iter().enumerate() {
        let th = 2.0 * PI * (k * i % n) as f64 / n as f64;
        vr += w * w * th.cos() * th.cos();
        vi += w * w * th.sin() * th.sin();
        cov -= w * w * th.cos() * th.sin();
    }
    let mean = (vr + vi) / 2.0;
    let d = (((vr - vi) / 2.0).powi(2) + cov * cov).sqrt();
    let (l1, l2) = (mean + d, (mean - d).max(0.0));
    let steps = 2000;
    let avg: f64 = (0..steps)
        .map(|j| {
            let phi = 2.0 * PI * (j as f64 + 0.5) / steps as f64;
            (l1 * phi.cos().powi(2) + l2 * phi.sin().powi(2)).sqrt()
        })
        .sum::<f64>()
        / steps as f64;
    // E[R] for a standard Rayleigh radius
    (PI / 2.0).sqrt() * avg
}

#[test]
fn white_noise_centroid_matches_the_windowed_expectation() {
    let window: Vec<f64> = (0..2048).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / 2048.0).cos()).collect();
    let mags: Vec<f64> = (0..N_BINS).map(|k| expected_magnitude(&window, k)).collect();
    let hz = |k: usize| k as f64 * 22050.0 / 2048.0;
    let expected = (0..N_BINS).map(|k| hz(k) * mags[k]).sum::<f64>() / mags.iter().sum::<f64>();

    let mut state = 12345u64;
    let mut realizations = Vec::new();
    for _ in 0..6 {
        let x: Vec<f32> = (0..5 * 22050)
            .map(|_| {
                // sum of four uniforms: close to Gaussian and bounded
                (0..4)
                    .map(|_| {
                        state ^= state << 13;
                        state ^= state >> 7;
                        state ^= state << 17;
                        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    })
                    .sum::<f64>() as f32
                    * 0.4
            })
            .collect();
        let c = centroid_curve(&Spectrogram::compute(&clip(x)).unwrap()).values;
        realizations.extend_from_slice(&c[3..c.len() - 3]);
    }
    let mean = realizations.iter().sum::<f64>() / realizations.len() as f64;
    assert!((mean - expected).abs() < 0.003 * expected, "mean {mean} vs expected {expected}");
    // sanity: the windowed expectation is close to, but not exactly, half the band
    assert!((expected - 5512.5).abs() < 30.0);
}

#[test]
fn rolloff_rejects_bad_percent_and_is_monotone() {
    let spec = Spectrogram::compute(&clip(common::dsp_fixtures().swap_remove(5).1)).unwrap();
    assert!(rolloff_curve(&spec, 0.0).is_err());
    assert!(rolloff_curve(&spec, 1.0).is_err());
    let lo = rolloff_curve(&spec, 0.5).unwrap().values;
    let hi = rolloff_curve(&spec, 0.99).unwrap().values;
    assert!(lo.iter().zip(&hi).all(|(a, b)| b >= a));
}

#[test]
fn wav_loading_identity_downmix_and_resampling() {
    let dir = tempfile::tempdir().unwrap();

    let x: Vec<f64> = (0..4000).map(|i| ((i * 37 % 200) as f64 - 100.0) / 128.0).collect();
    let p = dir.path().join("mono16.wav");
    write_int_wav(&p, 22050, 16, std::slice::from_ref(&x));
    let c = load_audio(&p, 22050).unwrap();
    assert_eq!(c.samples().len(), 4000);
    for (a, b) in c.samples().iter().zip(&x) {
        assert!((*a as f64 - b).abs() < 1.0 / 32768.0 + 1e-9);
    }

    let p = dir.path().join("stereo24.wav");
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    write_int_wav(&p, 22050, 24, &[x.clone(), neg]);
    assert!(load_audio(&p, 22050).unwrap().samples().iter().all(|&v| v == 0.0));

    let p = dir.path().join("float.wav");
    let f = clip(common::sine(440.0, 0.3, 0.5, 22050.0));
    write_wav(&p, &f).unwrap();
    assert_eq!(load_audio(&p, 22050).unwrap(), f);

    let p = dir.path().join("hi_rate.wav");
    write_int_wav(&p, 44100, 16, &[common::sine(440.0, 0.5, 2.0, 44100.0).iter().map(|&v| v as f64).collect()]);
    let c = load_audio(&p, 22050).unwrap();
    assert_eq!(c.sample_rate(), 22050);
    let spec = Spectrogram::compute(&c).unwrap();
    let mid = spec.frame(spec.n_frames() / 2);
    let peak = (0..N_BINS).max_by(|&a, &b| mid[a].total_cmp(&mid[b])).unwrap();
    let want = 440.0 * 2048.0 / 22050.0;
    assert!((peak as f64 - want).abs() <= 1.0, "peak bin {peak}, want {want}");
}

#[test]
fn wav_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_audio(dir.path().join("missing.wav"), 22050).is_err());
    let p = dir.path().join("garbage.wav");
    std::fs::write(&p, b"not a wav file at all").unwrap();
    assert!(load_audio(&p, 22050).is_err());
    let p = dir.path().join("empty.wav");
    write_int_wav(&p, 22050, 16, &[vec![]]);
    assert!(load_audio(&p, 22050).is_err());
    let p = dir.path().join("8bit.wav");
    let spec =
        hound::WavSpec { channels: 1, sample_rate: 22050, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    w.write_sample(3i8).unwrap();
    w.finalize().unwrap();
    assert!(load_audio(&p, 22050).is_err());
}

#[test]
fn pipeline_is_deterministic() {
    let x = common::dsp_fixtures().swap_remove(3).1;
    let a = chunk(&log_compress(mel_spectrogram(&clip(x.clone())).unwrap()).unwrap(), 129, true).unwrap();
    let b = chunk(&log_compress(mel_spectrogram(&clip(x)).unwrap()).unwrap(), 129, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn curve_csv_format() {
    let spec = Spectrogram::compute(&clip(vec![0.0; 2048])).unwrap();
    let mut out = Vec::new();
    energy_curve(&spec).write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["time_sec,value", "0.000000,0", "0.023220,0", "0.046440,0", "0.069660,0", "0.092880,0"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunks_reassemble_to_the_spectrogram(n_frames in 1usize..400, pad in any::<bool>()) {
        let data: Vec<f32> = (0..n_frames * N_MELS).map(|i| (i % 977) as f32 * 0.01).collect();
        let mel = MelSpectrogram::from_frames(data.clone(), true).unwrap();
        match chunk(&mel, 129, pad) {
            Ok(chunks) => {
                let mut joined = Vec::new();
                for c in &chunks {
                    prop_assert_eq!(c.data.len(), 129 * N_MELS);
                    prop_assert!(c.valid_frames >= 1 && c.valid_frames <= 129);
                    joined.extend_from_slice(&c.data[..c.valid_frames * N_MELS]);
                }
                let kept = if pad { n_frames } else { n_frames / 129 * 129 };
                prop_assert_eq!(&joined[..], &data[..kept * N_MELS]);
            }
            Err(_) => prop_assert!(!pad && n_frames < 129),
        }
    }

    #[test]
    fn log_compress_is_monotone(a in 0.0f32..1e3, b in 0.0f32..1e3) {
        let m = MelSpectrogram::from_frames([vec![a; N_MELS], vec![b; N_MELS]].concat(), false).unwrap();
        let c = log_compress(m).unwrap();
        if a < b {
            prop_assert!(c.frame(0)[0] <= c.frame(1)[0]);
        }
        prop_assert!(c.frame(0)[0] >= 0.0);
    }

    #[test]
    fn curves_are_non_negative_with_one_value_per_frame(seed in 0u64..1000, len in 2048usize..9000) {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
        let x: Vec<f32> = (0..len).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 40) as f32 / (1u64 << 24) as f32) - 0.5 }).collect();
        let spec = Spectrogram::compute(&clip(x)).unwrap();
        let n = 1 + len / 512;
        for curve in [energy_curve(&spec), centroid_curve(&spec), rolloff_curve(&spec, 0.85).unwrap()] {
            prop_assert_eq!(curve.len(), n);
            prop_assert!(curve.values.iter().all(|&v| v >= 0.0));
        }
    }
}
