mod common;

use common::brute_score;
use highlighter::evaluation::*;
use highlighter::extraction::{Highlight, HighlightRecord, Source};
use proptest::prelude::*;

fn ann(duration: f64, sections: &[(f64, f64)]) -> ChorusAnnotation {
    ChorusAnnotation {
        clip_id: "song".into(),
        duration_sec: duration,
        sections: sections.iter().map(|&(s, e)| Section { start: s, end: e, label: "chorus".into() }).collect(),
    }
}

fn record(id: &str, start: f64, end: f64, source: Source) -> HighlightRecord {
    HighlightRecord {
        clip_id: id.into(),
        highlight: Highlight { start_sec: start, end_sec: end, source, lambda: None },
    }
}

#[test]
fn overlap_examples() {
    assert_eq!(interval_overlap((60.0, 90.0), (70.0, 95.0)).unwrap(), 20.0);
    assert_eq!(interval_overlap((0.0, 10.0), (20.0, 30.0)).unwrap(), 0.0);
    assert_eq!(interval_overlap((3.5, 33.5), (3.5, 33.5)).unwrap(), 30.0);
    assert!(interval_overlap((5.0, 5.0), (0.0, 1.0)).is_err());
    assert!(interval_overlap((0.0, 1.0), (9.0, 2.0)).is_err());
}

#[test]
fn worked_example() {
    let s = score_interval(60.0, 90.0, &ann(200.0, &[(70.0, 95.0)])).unwrap();
    assert_eq!(s.r, 0.8);
    assert!((s.p - 0.6667).abs() < 1e-4);
    assert!((s.f - 0.7273).abs() < 1e-4);
    assert_eq!(s.matched, Some(0));

    let inside = score_interval(50.0, 80.0, &ann(200.0, &[(45.0, 85.0)])).unwrap();
    assert_eq!((inside.p, inside.r), (1.0, 0.75));

    let none = score_interval(0.0, 30.0, &ann(200.0, &[(45.0, 85.0), (120.0, 150.0)])).unwrap();
    assert_eq!(none, Score::ZERO);
}

#[test]
fn nearest_section_is_largest_overlap_then_earliest() {
    let a = ann(300.0, &[(10.0, 40.0), (50.0, 70.0), (100.0, 130.0)]);
    assert_eq!(score_interval(45.0, 75.0, &a).unwrap().matched, Some(1));
    // 10 s overlap with each of two sections
    let b = ann(300.0, &[(0.0, 30.0), (50.0, 80.0)]);
    assert_eq!(score_interval(20.0, 60.0, &b).unwrap().matched, Some(0));
}

#[test]
fn scoring_errors() {
    assert!(score_interval(0.0, 30.0, &ann(100.0, &[])).is_err());
    assert!(score_interval(80.0, 110.0, &ann(100.0, &[(10.0, 20.0)])).is_err());
}

#[test]
fn upper_bound_examples() {
    let exact = upper_bound(&ann(200.0, &[(50.0, 80.0)]), 30.0, 0.1).unwrap();
    assert_eq!(exact.score.f, 1.0);
    assert_eq!(exact.start_sec, 50.0);

    let short = upper_bound(&ann(200.0, &[(100.0, 120.0)]), 30.0, 0.1).unwrap();
    assert_eq!(short.score.r, 1.0);
    assert!((short.score.p - 20.0 / 30.0).abs() < 1e-12);
    assert!((short.score.f - 0.8).abs() < 1e-12);

    // off-lattice chorus found through the alignment candidates
    let odd = upper_bound(&ann(200.0, &[(33.333, 63.333)]), 30.0, 0.1).unwrap();
    assert_eq!(odd.score.f, 1.0);

    let tiny = upper_bound(&ann(20.0, &[(5.0, 15.0)]), 30.0, 0.1).unwrap();
    assert_eq!((tiny.start_sec, tiny.score.r, tiny.score.p), (0.0, 1.0, 0.5));
}

#[test]
fn corpus_means() {
    let anns = vec![
        ChorusAnnotation { clip_id: "a".into(), ..ann(100.0, &[(10.0, 40.0)]) },
        ChorusAnnotation { clip_id: "b".into(), ..ann(100.0, &[(10.0, 40.0)]) },
    ];
    let hs = vec![record("a", 10.0, 40.0, Source::Energy), record("b", 60.0, 90.0, Source::Energy)];
    let rep = evaluate_corpus(&hs, &anns).unwrap();
    assert_eq!(rep.len(), 1);
    assert_eq!(rep[0].method, "energy");
    assert_eq!(rep[0].mean_f, 0.5);

    let single = evaluate_method("m", &hs[..1], &anns).unwrap();
    assert_eq!(single.mean_f, single.songs[0].score.f);
    assert_eq!(single.mean_r, single.songs[0].score.r);

    assert!(evaluate_method("m", &[record("zzz", 0.0, 30.0, Source::Middle)], &anns).is_err());
}

#[test]
fn methods_are_grouped_in_first_seen_order() {
    let anns = vec![ChorusAnnotation { clip_id: "a".into(), ..ann(100.0, &[(10.0, 40.0)]) }];
    let mut fused = record("a", 0.0, 30.0, Source::Fused);
    fused.highlight.lambda = Some(0.5);
    let hs = vec![record("a", 10.0, 40.0, Source::Middle), fused, record("a", 5.0, 35.0, Source::Attention)];
    let names: Vec<String> = evaluate_corpus(&hs, &anns).unwrap().into_iter().map(|r| r.method).collect();
    assert_eq!(names, ["middle", "fused_0.5", "attention"]);
}

#[test]
fn report_csv_layout() {
    let anns = vec![ChorusAnnotation { clip_id: "w".into(), ..ann(200.0, &[(70.0, 95.0)]) }];
    let rep = evaluate_corpus(&[record("w", 60.0, 90.0, Source::Attention)], &anns).unwrap();
    let mut out = Vec::new();
    write_report_csv(&rep, &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "method,clip_id,R,P,F\nattention,w,0.8000,0.6667,0.7273\nattention,__mean__,0.8000,0.6667,0.7273\n"
    );
}

#[test]
fn annotation_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    std::fs::write(
        &good,
        "{\"clip_id\": \"x\", \"duration_sec\": 200.0, \"sections\": [[70, 95, \"chorus A\"], [120, 140.5, \"chorus B\"]]}\n\n",
    )
    .unwrap();
    let anns = read_annotations(&good).unwrap();
    assert_eq!(anns[0].sections[1], Section { start: 120.0, end: 140.5, label: "chorus B".into() });
    let back: ChorusAnnotation = serde_json::from_str(&serde_json::to_string(&anns[0]).unwrap()).unwrap();
    assert_eq!(back, anns[0]);

    for bad in [
        r#"{"clip_id": "x", "duration_sec": 100.0, "sections": [[70, 120, "c"]]}"#,
        r#"{"clip_id": "x", "duration_sec": 100.0, "sections": [[50, 40, "c"]]}"#,
        r#"{"clip_id": "x", "duration_sec": 100.0, "sections": []}"#,
        "{\"clip_id\": \"x\", \"duration_sec\": 100.0, \"sections\": [[1, 2, \"c\"]]}\n{\"clip_id\": \"x\", \"duration_sec\": 100.0, \"sections\": [[1, 2, \"c\"]]}",
        "not json",
    ] {
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, bad).unwrap();
        assert!(read_annotations(&p).is_err(), "{bad}");
    }
}

fn sections_strategy() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
    (60.0f64..400.0).prop_flat_map(|d| {
        let sec = (0.0..d - 1.0).prop_flat_map(move |s| (Just(s), (s + 0.5)..d));
        (Just(d), prop::collection::vec(sec, 1..5))
    })
}

proptest! {
    #[test]
    fn scores_match_brute_force((d, secs) in sections_strategy(), start in 0.0f64..1.0, len in 1.0f64..60.0) {
        let len = len.min(d);
        let s = start * (d - len);
        let a = ann(d, &secs);
        let got = score_interval(s, s + len, &a).unwrap();
        let (r, p, f, m) = brute_score((s, s + len), &secs);
        prop_assert_eq!((got.r, got.p, got.f, got.matched), (r, p, f, m));
    }

    #[test]
    fn score_invariants((d, secs) in sections_strategy(), start in 0.0f64..1.0) {
        let len = 30.0f64.min(d);
        let s = start * (d - len);
        let a = ann(d, &secs);
        let sc = score_interval(s, s + len, &a).unwrap();
        for v in [sc.r, sc.p, sc.f] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        let any_overlap = secs.iter().any(|&(a0, a1)| a1.min(s + len) > a0.max(s));
        prop_assert_eq!(sc.f == 0.0, !any_overlap);
        if let Some(i) = sc.matched {
            let sec_len = secs[i].1 - secs[i].0;
            if sec_len < len { prop_assert!(sc.p <= sc.r); }
            if sec_len > len { prop_assert!(sc.r <= sc.p); }
            prop_assert!((sc.f - 2.0 * sc.r * sc.p / (sc.r + sc.p)).abs() < 1e-15);
        }
        let ub = upper_bound(&a, 30.0, 0.1).unwrap();
        // s is off the lattice in general, so allow the grid's effect on F
        prop_assert!(ub.score.f >= sc.f - 0.1 / len * 2.0 - 1e-9);
    }

    #[test]
    fn translation_leaves_scores_unchanged(
        secs in prop::collection::vec((0u32..400, 1u32..200), 1..4),
        h0 in 0u32..400,
        shift in 0u32..400,
    ) {
        // quarter-second values keep every subtraction exact
        let q = |v: u32| v as f64 * 0.25;
        let base: Vec<(f64, f64)> = secs.iter().map(|&(s, l)| (q(s), q(s + l))).collect();
        let moved: Vec<(f64, f64)> = secs.iter().map(|&(s, l)| (q(s + shift), q(s + l + shift))).collect();
        let a = ann(1000.0, &base);
        let b = ann(1000.0, &moved);
        let x = score_interval(q(h0), q(h0 + 120), &a).unwrap();
        let y = score_interval(q(h0 + shift), q(h0 + 120 + shift), &b).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn upper_bound_beats_lattice_starts((d, secs) in sections_strategy(), k in 0usize..4000) {
        let a = ann(d, &secs);
        let ub = upper_bound(&a, 30.0, 0.1).unwrap();
        let last = ((d - 30.0) * 10.0).floor().max(0.0) as usize;
        let start = (k.min(last)) as f64 / 10.0;
        if d > 30.0 {
            let sc = score_interval(start, start + 30.0, &a).unwrap();
            prop_assert!(ub.score.f >= sc.f - 1e-9);
        }
    }
}
