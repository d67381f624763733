//! Scoring highlights against chorus annotations, plus the oracle
//! placement that bounds every method.

use highlighter::evaluation::{
    evaluate_corpus, score_interval, upper_bound, write_report_csv, ChorusAnnotation, Section,
};
use highlighter::extraction::{middle_baseline, Highlight, HighlightRecord, Source};

fn ann(id: &str, duration: f64, sections: &[(f64, f64)]) -> ChorusAnnotation {
    ChorusAnnotation {
        clip_id: id.into(),
        duration_sec: duration,
        sections: sections.iter().map(|&(s, e)| Section { start: s, end: e, label: "chorus".into() }).collect(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let song = ann("a", 200.0, &[(70.0, 95.0)]);
    let s = score_interval(60.0, 90.0, &song)?;
    println!("[60, 90) vs chorus [70, 95): R={:.4} P={:.4} F={:.4}", s.r, s.p, s.f);

    let annotations = vec![song, ann("b", 240.0, &[(40.0, 70.0), (150.0, 180.0)]), ann("c", 180.0, &[(100.0, 125.0)])];
    for a in &annotations {
        let ub = upper_bound(a, 30.0, 0.1)?;
        println!("{}: best start {:.1} s, F={:.4}", a.clip_id, ub.start_sec, ub.score.f);
    }

    let mut records = Vec::new();
    for a in &annotations {
        let h = middle_baseline(a.duration_sec, 30.0)?;
        records.push(HighlightRecord { clip_id: a.clip_id.clone(), highlight: h });
        let early = Highlight { start_sec: 40.0, end_sec: 70.0, source: Source::Energy, lambda: None };
        records.push(HighlightRecord { clip_id: a.clip_id.clone(), highlight: early });
    }
    let reports = evaluate_corpus(&records, &annotations)?;
    write_report_csv(&reports, std::io::stdout().lock())?;
    Ok(())
}
