use highlighter::audio::{AudioClip, CurveKind, FrameCurve, HOP_SECONDS, SAMPLE_RATE};
use highlighter::extraction::*;
use highlighter::models::{AttentionCurve, LossKind, Model, ModelConfig, Variant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute force over integer-valued curves, where every sum is exact.
fn oracle_argmax(curve: &[i64], window: usize) -> usize {
    if window >= curve.len() {
        return 0;
    }
    let sums: Vec<i64> = (0..=curve.len() - window).map(|s| curve[s..s + window].iter().sum()).collect();
    let best = *sums.iter().max().unwrap();
    sums.iter().position(|&s| s == best).unwrap()
}

fn as_f64(c: &[i64]) -> Vec<f64> {
    c.iter().map(|&v| v as f64).collect()
}

fn curve(values: Vec<f64>, kind: CurveKind) -> FrameCurve {
    FrameCurve { values, hop_seconds: HOP_SECONDS, kind }
}

#[test]
fn window_argmax_examples() {
    // starts 1 and 2 both sum to 0.7; the earliest wins
    assert_eq!(window_argmax(&[0.1, 0.2, 0.5, 0.2], 2).unwrap(), 1);
    assert_eq!(window_argmax(&[0.1, 0.2, 0.5, 0.3], 2).unwrap(), 2);
    assert_eq!(window_argmax(&[0.3; 9], 4).unwrap(), 0);
    assert_eq!(window_argmax(&[1.0, 5.0, 2.0], 3).unwrap(), 0);
    assert_eq!(window_argmax(&[1.0, 5.0, 2.0], 7).unwrap(), 0);
    assert!(window_argmax(&[], 3).is_err());
    assert!(window_argmax(&[1.0], 0).is_err());
}

proptest! {
    #[test]
    fn window_argmax_matches_enumeration(c in prop::collection::vec(-50i64..50, 1..60), w in 1usize..70) {
        prop_assert_eq!(window_argmax(&as_f64(&c), w).unwrap(), oracle_argmax(&c, w));
    }

    #[test]
    fn window_argmax_ignores_scale_and_offset(
        c in prop::collection::vec(0i64..1000, 1..60),
        w in 1usize..30,
        k in -8i32..8,
        shift in -1000i64..1000,
    ) {
        let base = window_argmax(&as_f64(&c), w).unwrap();
        // powers of two and integer offsets keep every sum exact
        let scaled: Vec<f64> = c.iter().map(|&v| v as f64 * 2f64.powi(k)).collect();
        let shifted: Vec<f64> = c.iter().map(|&v| (v + shift) as f64).collect();
        prop_assert_eq!(window_argmax(&scaled, w).unwrap(), base);
        prop_assert_eq!(window_argmax(&shifted, w).unwrap(), base);
    }

    #[test]
    fn highlight_length_is_min_of_target_and_duration(
        scores in prop::collection::vec(0.0f64..1.0, 1..120),
        duration in 1.0f64..400.0,
        target in 5.0f64..60.0,
    ) {
        let alpha = AttentionCurve { scores, chunk_seconds: 3.0 };
        let h = extract_from_attention(&alpha, duration, target).unwrap();
        prop_assert!(h.start_sec >= 0.0 && h.end_sec <= duration + 1e-9);
        prop_assert!((h.len_sec() - target.min(duration)).abs() < 1e-9);
        let n = (duration / HOP_SECONDS) as usize + 1;
        let frames = curve((0..n).map(|i| ((i * 7919) % 101) as f64).collect(), CurveKind::Energy);
        let h = extract_from_frame_curve(&frames, duration, target).unwrap();
        prop_assert!(h.start_sec >= 0.0 && h.end_sec <= duration + 1e-9);
        prop_assert!((h.len_sec() - target.min(duration)).abs() < 1e-9);
        let m = middle_baseline(duration, target).unwrap();
        prop_assert!((m.len_sec() - target.min(duration)).abs() < 1e-9);
    }
}

#[test]
fn attention_window_examples() {
    let mut scores = vec![0.0; 60];
    scores[20] = 1.0;
    let h = extract_from_attention(&AttentionCurve { scores, chunk_seconds: 3.0 }, 180.0, 30.0).unwrap();
    // every window holding chunk 20 ties; the earliest starts at chunk 11
    assert_eq!((h.start_sec, h.end_sec), (33.0, 63.0));
    assert!(h.start_sec <= 60.0 && 63.0 <= h.end_sec);
    assert_eq!(h.source, Source::Attention);

    let short = extract_from_attention(&AttentionCurve { scores: vec![0.2, 0.5, 0.3], chunk_seconds: 3.0 }, 20.0, 30.0);
    assert_eq!(short.unwrap().end_sec, 20.0);
    let uniform =
        extract_from_attention(&AttentionCurve { scores: vec![1.0 / 40.0; 40], chunk_seconds: 3.0 }, 120.0, 30.0);
    let uniform = uniform.unwrap();
    assert_eq!((uniform.start_sec, uniform.end_sec), (0.0, 30.0));
    assert!(extract_from_attention(&AttentionCurve { scores: vec![], chunk_seconds: 3.0 }, 10.0, 30.0).is_err());
}

#[test]
fn late_peak_is_moved_inside_the_song() {
    let mut scores = vec![0.0; 20];
    scores[19] = 1.0;
    let h = extract_from_attention(&AttentionCurve { scores, chunk_seconds: 3.0 }, 58.0, 30.0).unwrap();
    assert_eq!((h.start_sec, h.end_sec), (28.0, 58.0));
}

#[test]
fn upsampling() {
    let alpha = AttentionCurve { scores: vec![0.25, 0.75], chunk_seconds: 3.0 };
    let up = upsample_attention(&alpha, 258, HOP_SECONDS).unwrap();
    assert!(up.values[..129].iter().all(|&v| v == 0.25));
    assert!(up.values[129..].iter().all(|&v| v == 0.75));
    assert_eq!(up.kind, CurveKind::AttentionUpsampled);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
    let alpha = AttentionCurve { scores: scores.clone(), chunk_seconds: 3.0 };
    let n = 129 * 8 + 40;
    let up = upsample_attention(&alpha, n, HOP_SECONDS).unwrap();
    let expect: f64 = scores[..8].iter().sum::<f64>() * 129.0 + scores[8] * 40.0;
    assert!((up.values.iter().sum::<f64>() - expect).abs() < 1e-9);

    let single =
        upsample_attention(&AttentionCurve { scores: vec![1.0], chunk_seconds: 3.0 }, 100, HOP_SECONDS).unwrap();
    assert!(single.values.iter().all(|&v| v == 1.0));
    assert!(upsample_attention(&alpha, 129 * 20, HOP_SECONDS).is_err());
    assert!(upsample_attention(&alpha, 10, HOP_SECONDS).is_err());
}

#[test]
fn fusion_endpoints_and_degenerate_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let e = curve((0..500).map(|_| rng.random_range(0.0..3.0)).collect(), CurveKind::Energy);
    let a = curve((0..500).map(|i| ((i / 129) as f64 + 1.0) * 0.1).collect(), CurveKind::AttentionUpsampled);
    assert_eq!(fuse_curves(&e, &a, 1.0).unwrap().values, min_max_normalize(&e.values));
    assert_eq!(fuse_curves(&e, &a, 0.0).unwrap().values, min_max_normalize(&a.values));
    let n = min_max_normalize(&e.values);
    assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(n.iter().copied().fold(f64::NAN, f64::min), 0.0);
    assert_eq!(n.iter().copied().fold(f64::NAN, f64::max), 1.0);

    let flat = curve(vec![2.0; 2000], CurveKind::Energy);
    let flat_a = curve(vec![0.5; 2000], CurveKind::AttentionUpsampled);
    let fused = fuse_curves(&flat, &flat_a, 0.4).unwrap();
    assert!(fused.values.iter().all(|&v| v == 0.0));
    assert_eq!(extract_from_frame_curve(&fused, 46.0, 30.0).unwrap().start_sec, 0.0);

    assert!(fuse_curves(&e, &curve(vec![0.0; 10], CurveKind::AttentionUpsampled), 0.5).is_err());
    assert!(fuse_curves(&e, &a, 1.5).is_err());
}

#[test]
fn frame_window_is_1291() {
    assert_eq!((30.0 * SAMPLE_RATE as f64 / 512.0).floor() as usize, 1291);
    // a plateau of exactly 1291 frames is found only by a 1291-frame window
    let mut values = vec![0.0; 4000];
    for v in &mut values[1000..2291] {
        *v = 1.0;
    }
    values[999] = 0.5;
    values[2291] = 0.6;
    let h = extract_from_frame_curve(&curve(values, CurveKind::Energy), 4000.0 * HOP_SECONDS, 30.0).unwrap();
    assert_eq!(h.start_sec, 1000.0 * HOP_SECONDS);
    assert_eq!(h.source, Source::Energy);
}

#[test]
fn energy_finds_the_loud_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sr = SAMPLE_RATE as usize;
    let samples: Vec<f32> = (0..120 * sr)
        .map(|i| if (40 * sr..80 * sr).contains(&i) { rng.random_range(-0.5..0.5) } else { 0.0 })
        .collect();
    let song = SongFeatures::from_clip(&AudioClip::new(samples, SAMPLE_RATE).unwrap()).unwrap();
    let h = extract(&song, Method::Spectral(CurveKind::Energy), None, 30.0).unwrap();
    assert!(h.start_sec >= 40.0 - HOP_SECONDS && h.end_sec <= 80.0 + HOP_SECONDS, "{h:?}");
    assert!(h.start_sec <= 50.0 + HOP_SECONDS);
    assert!((h.len_sec() - 30.0).abs() < 1e-9);
}

#[test]
fn middle_examples() {
    let m = |d| {
        let h = middle_baseline(d, 30.0).unwrap();
        (h.start_sec, h.end_sec)
    };
    assert_eq!(m(240.0), (105.0, 135.0));
    assert_eq!(m(30.0), (0.0, 30.0));
    assert_eq!(m(20.0), (0.0, 20.0));
}

#[test]
fn chunk_and_frame_search_agree_on_upsampled_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let t = rng.random_range(12..60);
        let mut scores: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..0.1)).collect();
        let best = rng.random_range(0..=t - 11);
        for s in &mut scores[best..best + 10] {
            *s += 1.0;
        }
        let alpha = AttentionCurve { scores, chunk_seconds: 3.0 };
        let n = 129 * t;
        let duration = 3.0 * t as f64;
        let chunk = extract_from_attention(&alpha, duration, 30.0).unwrap();
        let up = upsample_attention(&alpha, n, HOP_SECONDS).unwrap();
        let frame = extract_from_frame_curve(&up, duration, 30.0).unwrap();
        let frame_start = (frame.start_sec / HOP_SECONDS).round() as i64;
        assert_eq!(chunk.start_sec, best as f64 * 3.0);
        // the frame window is one frame longer than ten chunks
        assert!((frame_start - 129 * best as i64).abs() <= 1, "{frame_start} vs chunk {best}");
    }
}

#[test]
fn pipeline_fusion_endpoints_are_the_pure_methods() {
    let model = Model::new(ModelConfig::new(Variant::NamLfPos, 4, LossKind::Bce), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sr = SAMPLE_RATE as usize;
    for secs in [25usize, 47, 90] {
        let samples: Vec<f32> =
            (0..secs * sr).map(|i| rng.random_range(-0.1..0.1) * (1.0 + (i as f32 / sr as f32 * 0.2).sin())).collect();
        let song = SongFeatures::from_clip(&AudioClip::new(samples, SAMPLE_RATE).unwrap()).unwrap();
        let interval = |m| {
            let h = extract(&song, m, Some(&model), 30.0).unwrap();
            (h.start_sec, h.end_sec)
        };
        assert_eq!(interval(Method::Fused(1.0)), interval(Method::Spectral(CurveKind::Energy)));
        assert_eq!(interval(Method::Fused(0.0)), interval(Method::Attention));
    }
    let song = SongFeatures::from_clip(&AudioClip::new(vec![0.0; 4 * sr], SAMPLE_RATE).unwrap()).unwrap();
    assert!(extract(&song, Method::Attention, None, 30.0).is_err());
}

#[test]
fn highlight_json() {
    let rec = HighlightRecord { clip_id: "a".into(), highlight: middle_baseline(240.0, 30.0).unwrap() };
    assert_eq!(
        serde_json::to_string(&rec).unwrap(),
        r#"{"clip_id":"a","start_sec":105.0,"end_sec":135.0,"source":"middle"}"#
    );
    let fused = Highlight { start_sec: 1.0, end_sec: 31.0, source: Source::Fused, lambda: Some(0.5) };
    let text = serde_json::to_string(&fused).unwrap();
    assert!(text.contains(r#""lambda":0.5"#));
    assert_eq!(serde_json::from_str::<Highlight>(&text).unwrap(), fused);
    assert_eq!("Rolloff".parse::<Source>().unwrap(), Source::Rolloff);
}
