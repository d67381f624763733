//! Chorus-overlap scoring: recall, precision and F-measure of a highlight
//! against annotated chorus sections, plus the best achievable score.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extraction::{Highlight, HighlightRecord, Source};
use crate::{Error, Result};

/// Tolerance for a highlight touching the song's ends.
const EDGE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, String)", into = "(f64, f64, String)")]
pub struct Section {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl From<(f64, f64, String)> for Section {
    fn from((start, end, label): (f64, f64, String)) -> Self {
        Section { start, end, label }
    }
}

impl From<Section> for (f64, f64, String) {
    fn from(s: Section) -> Self {
        (s.start, s.end, s.label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChorusAnnotation {
    pub clip_id: String,
    pub duration_sec: f64,
    pub sections: Vec<Section>,
}

impl ChorusAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_sec > 0.0 && self.duration_sec.is_finite()) {
            return Err(Error::invalid(format!("`{}`: duration must be positive", self.clip_id)));
        }
        if self.sections.is_empty() {
            return Err(Error::invalid(format!("`{}` has no chorus sections", self.clip_id)));
        }
        for s in &self.sections {
            if !(0.0 <= s.start && s.start < s.end && s.end <= self.duration_sec) {
                return Err(Error::invalid(format!(
                    "`{}`: section [{}, {}) outside [0, {}]",
                    self.clip_id, s.start, s.end, self.duration_sec
                )));
            }
        }
        Ok(())
    }
}

/// Recall, precision and F-measure for one song; `matched` indexes the
/// section with the largest overlap, `None` when nothing overlaps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub r: f64,
    pub p: f64,
    pub f: f64,
    pub matched: Option<usize>,
}

impl Score {
    pub const ZERO: Score = Score { r: 0.0, p: 0.0, f: 0.0, matched: None };
}

/// Length of the intersection of two `[start, end)` intervals.
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (s, e) in [a, b] {
        if !(s < e) {
            return Err(Error::invalid(format!("malformed interval [{s}, {e})")));
        }
    }
    Ok((a.1.min(b.1) - a.0.max(b.0)).max(0.0))
}

/// Scores `[start, end)` against the section it overlaps most (earliest on
/// ties).
pub fn score_interval(start: f64, end: f64, ann: &ChorusAnnotation) -> Result<Score> {
    if ann.sections.is_empty() {
        return Err(Error::invalid(format!("`{}` has no chorus sections", ann.clip_id)));
    }
    if start < -EDGE_TOL || end > ann.duration_sec + EDGE_TOL {
        return Err(Error::invalid(format!(
            "highlight [{start}, {end}) outside `{}` (0 to {} s)",
            ann.clip_id, ann.duration_sec
        )));
    }
    let mut best = (0.0, None);
    for (i, s) in ann.sections.iter().enumerate() {
        let o = interval_overlap((start, end), (s.start, s.end))?;
        if o > best.0 {
            best = (o, Some(i));
        }
    }
    let (overlap, matched) = best;
    let Some(i) = matched else { return Ok(Score::ZERO) };
    let section = &ann.sections[i];
    let r = overlap / (section.end - section.start);
    let p = overlap / (end - start);
    let f = 2.0 * r * p / (r + p);
    Ok(Score { r, p, f, matched })
}

pub fn score_highlight(h: &Highlight, ann: &ChorusAnnotation) -> Result<Score> {
    score_interval(h.start_sec, h.end_sec, ann)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpperBound {
    pub score: Score,
    pub start_sec: f64,
}

/// Best F over highlight starts on a `grid_sec` lattice plus the last
/// possible start, every section start and `section end - target`. Songs
/// shorter than `target_sec` are scored with the whole-song highlight.
pub fn upper_bound(ann: &ChorusAnnotation, target_sec: f64, grid_sec: f64) -> Result<UpperBound> {
    ann.validate()?;
    if !(target_sec > 0.0 && grid_sec > 0.0) {
        return Err(Error::invalid("target and grid must be positive"));
    }
    let last = ann.duration_sec - target_sec;
    if last <= 0.0 {
        return Ok(UpperBound { score: score_interval(0.0, ann.duration_sec, ann)?, start_sec: 0.0 });
    }
    // k / 10 rather than k * 0.1 keeps lattice points like 3.0 exact
    let per_sec = 1.0 / grid_sec;
    let snap = (per_sec - per_sec.round()).abs() < 1e-9;
    let point = |k: usize| if snap { k as f64 / per_sec.round() } else { k as f64 * grid_sec };
    let steps = (last / grid_sec + 1e-9).floor() as usize;
    let mut candidates: Vec<f64> = (0..=steps).map(point).filter(|&s| s <= last).collect();
    candidates.push(last);
    for s in &ann.sections {
        candidates.extend([s.start, s.end - target_sec].into_iter().filter(|&c| (0.0..=last).contains(&c)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<UpperBound> = None;
    for start in candidates {
        let score = score_interval(start, start + target_sec, ann)?;
        if best.is_none_or(|b| score.f > b.score.f) {
            best = Some(UpperBound { score, start_sec: start });
        }
    }
    Ok(best.expect("the lattice always holds start 0"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SongScore {
    pub clip_id: String,
    pub score: Score,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub songs: Vec<SongScore>,
    pub mean_r: f64,
    pub mean_p: f64,
    pub mean_f: f64,
}

/// Scores one method's highlights; songs run in parallel, means are taken
/// in input order.
pub fn evaluate_method(
    method: &str,
    highlights: &[HighlightRecord],
    annotations: &[ChorusAnnotation],
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &ChorusAnnotation> = annotations.iter().map(|a| (a.clip_id.as_str(), a)).collect();
    let songs: Vec<SongScore> = highlights
        .par_iter()
        .map(|h| {
            let ann = by_id
                .get(h.clip_id.as_str())
                .ok_or_else(|| Error::invalid(format!("no annotation for clip `{}`", h.clip_id)))?;
            Ok(SongScore { clip_id: h.clip_id.clone(), score: score_highlight(&h.highlight, ann)? })
        })
        .collect::<Result<_>>()?;
    let n = songs.len().max(1) as f64;
    let mean = |g: fn(&Score) -> f64| songs.iter().map(|s| g(&s.score)).sum::<f64>() / n;
    Ok(EvalReport {
        method: method.to_string(),
        mean_r: mean(|s| s.r),
        mean_p: mean(|s| s.p),
        mean_f: mean(|s| s.f),
        songs,
    })
}

/// Method name of a highlight: its source, with the weight for fusion.
pub fn method_label(h: &Highlight) -> String {
    match (h.source, h.lambda) {
        (Source::Fused, Some(l)) => format!("fused_{l}"),
        (s, _) => s.name().to_string(),
    }
}

/// Groups highlights by method (first-seen order) and scores each group.
pub fn evaluate_corpus(highlights: &[HighlightRecord], annotations: &[ChorusAnnotation]) -> Result<Vec<EvalReport>> {
    let mut groups: Vec<(String, Vec<HighlightRecord>)> = Vec::new();
    for h in highlights {
        let label = method_label(&h.highlight);
        match groups.iter_mut().find(|(m, _)| *m == label) {
            Some((_, v)) => v.push(h.clone()),
            None => groups.push((label, vec![h.clone()])),
        }
    }
    groups.iter().map(|(m, hs)| evaluate_method(m, hs, annotations)).collect()
}

/// Clip id used for each method's mean row.
pub const SUMMARY_ID: &str = "__mean__";

/// `method,clip_id,R,P,F` rows, then one `__mean__` row per method.
pub fn write_report_csv<W: Write>(reports: &[EvalReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "method,clip_id,R,P,F")?;
    for rep in reports {
        for s in &rep.songs {
            writeln!(w, "{},{},{:.4},{:.4},{:.4}", rep.method, s.clip_id, s.score.r, s.score.p, s.score.f)?;
        }
    }
    for rep in reports {
        writeln!(w, "{},{SUMMARY_ID},{:.4},{:.4},{:.4}", rep.method, rep.mean_r, rep.mean_p, rep.mean_f)?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads and validates a JSON-lines annotation file.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<ChorusAnnotation>> {
    let path = path.as_ref();
    let anns: Vec<ChorusAnnotation> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for a in &anns {
        a.validate()?;
        if !seen.insert(a.clip_id.as_str()) {
            return Err(Error::invalid(format!("{}: duplicate clip_id `{}`", path.display(), a.clip_id)));
        }
    }
    Ok(anns)
}

/// Reads `extract` output.
pub fn read_highlights(path: impl AsRef<Path>) -> Result<Vec<HighlightRecord>> {
    read_jsonl(path.as_ref())
}
