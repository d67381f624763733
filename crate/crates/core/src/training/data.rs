//! Labelled clips, the JSON-lines manifest and conversion to chunk tensors.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{load_audio, song_chunks, AudioClip, MelChunk, SAMPLE_RATE};
use crate::{Error, Result};

/// File name of the dataset descriptor, looked up next to the manifest.
pub const DESCRIPTOR_FILE: &str = "dataset.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub n_classes: usize,
    pub label_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClipSource {
    Path(PathBuf),
    Audio(AudioClip),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub clip_id: String,
    pub source: ClipSource,
    /// Indices of the positive classes.
    pub labels: Vec<usize>,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub clips: Vec<LabeledClip>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    clip_id: String,
    audio: String,
    labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

fn read_descriptor(path: &Path) -> Result<DatasetDescriptor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: DatasetDescriptor = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    if d.n_classes < 2 {
        return Err(Error::invalid(format!("{}: n_classes must be at least 2", path.display())));
    }
    if !d.label_names.is_empty() && d.label_names.len() != d.n_classes {
        return Err(Error::invalid(format!(
            "{}: {} label names for {} classes",
            path.display(),
            d.label_names.len(),
            d.n_classes
        )));
    }
    Ok(d)
}

/// Reads a manifest and the `dataset.json` beside it. Every audio file must
/// open as WAV; rows keep manifest order.
pub fn ingest_dataset(manifest: impl AsRef<Path>) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let descriptor = read_descriptor(&dir.join(DESCRIPTOR_FILE))?;
    let file = std::fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut clips = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |detail: String| Error::Parse { path: manifest.to_path_buf(), line: i + 1, detail };
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if !seen.insert(row.clip_id.clone()) {
            return Err(parse(format!("duplicate clip_id `{}`", row.clip_id)));
        }
        if row.labels.is_empty() {
            return Err(parse(format!("clip `{}` has no labels", row.clip_id)));
        }
        if let Some(&bad) = row.labels.iter().find(|&&l| l >= descriptor.n_classes) {
            return Err(parse(format!("clip `{}`: label {bad} outside {} classes", row.clip_id, descriptor.n_classes)));
        }
        let audio = dir.join(&row.audio);
        hound::WavReader::open(&audio)
            .map_err(|e| parse(format!("clip `{}`: {}: {e}", row.clip_id, audio.display())))?;
        clips.push(LabeledClip {
            clip_id: row.clip_id,
            source: ClipSource::Path(audio),
            labels: row.labels,
            split: row.split,
        });
    }
    if clips.is_empty() {
        return Err(Error::invalid(format!("{}: empty dataset", manifest.display())));
    }
    Ok(Dataset { descriptor, clips })
}

/// Writes `manifest` and its descriptor. `audio` gives each clip's path
/// relative to the manifest's directory.
pub fn write_manifest(manifest: &Path, dataset: &Dataset, audio: &[String]) -> Result<()> {
    if audio.len() != dataset.clips.len() {
        return Err(Error::invalid("one audio path per clip is required"));
    }
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let descriptor = serde_json::to_string_pretty(&dataset.descriptor).map_err(std::io::Error::other);
    let descriptor = descriptor.map_err(|e| Error::io(manifest, e))?;
    crate::write_atomic(&dir.join(DESCRIPTOR_FILE), |w| writeln!(w, "{descriptor}"))?;
    crate::write_atomic(manifest, |w| {
        for (clip, path) in dataset.clips.iter().zip(audio) {
            let row = ManifestRow {
                clip_id: clip.clip_id.clone(),
                audio: path.clone(),
                labels: clip.labels.clone(),
                split: clip.split,
            };
            writeln!(w, "{}", serde_json::to_string(&row).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    })
}

/// A clip reduced to the network's input plus its target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub clip_id: String,
    pub chunks: Vec<MelChunk>,
    pub target: Vec<f32>,
}

impl Example {
    /// Chunks `clip` for training: partial trailing chunks are dropped and
    /// exactly `chunks_per_clip` must remain.
    pub fn from_audio(
        clip_id: &str,
        clip: &AudioClip,
        labels: &[usize],
        n_classes: usize,
        chunks_per_clip: usize,
    ) -> Result<Self> {
        let clip = clip.resampled(SAMPLE_RATE)?;
        let chunks = song_chunks(&clip, false)?;
        if chunks.len() != chunks_per_clip {
            return Err(Error::invalid(format!(
                "clip `{clip_id}` yields {} chunks, training needs {chunks_per_clip}",
                chunks.len()
            )));
        }
        let mut target = vec![0.0; n_classes];
        for &l in labels {
            *target.get_mut(l).ok_or_else(|| Error::invalid(format!("clip `{clip_id}`: label {l} out of range")))? =
                1.0;
        }
        Ok(Example { clip_id: clip_id.to_string(), chunks, target })
    }

    /// Index of the first positive class.
    pub fn label(&self) -> Option<usize> {
        self.target.iter().position(|&v| v > 0.5)
    }
}

/// Loads and chunks every clip, running up to `jobs` decoders at once.
/// Output order follows the dataset.
pub fn prepare_examples(dataset: &Dataset, chunks_per_clip: usize, jobs: usize) -> Result<Vec<Example>> {
    use rayon::prelude::*;
    let n_classes = dataset.descriptor.n_classes;
    let one = |c: &LabeledClip| -> Result<Example> {
        let loaded;
        let audio = match &c.source {
            ClipSource::Audio(a) => a,
            ClipSource::Path(p) => {
                loaded = load_audio(p, SAMPLE_RATE)?;
                &loaded
            }
        };
        Example::from_audio(&c.clip_id, audio, &c.labels, n_classes, chunks_per_clip)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| dataset.clips.par_iter().map(one).collect())
}

/// Manifest name used by [`write_dataset`].
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Writes in-memory clips as `audio/<clip_id>.wav` under `dir`, plus the
/// manifest and descriptor. Returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let mut paths = Vec::with_capacity(dataset.clips.len());
    for clip in &dataset.clips {
        let ClipSource::Audio(audio) = &clip.source else {
            return Err(Error::invalid(format!("clip `{}` has no in-memory audio to write", clip.clip_id)));
        };
        let rel = format!("audio/{}.wav", clip.clip_id);
        crate::audio::write_wav(dir.join(&rel), audio)?;
        paths.push(rel);
    }
    let manifest = dir.join(MANIFEST_FILE);
    write_manifest(&manifest, dataset, &paths)?;
    Ok(manifest)
}

/// Splits examples by the clips' `split` marks. When no clip is marked, a
/// seeded shuffle holds out `val_fraction` of them (at least one).
pub fn split_examples(
    dataset: &Dataset,
    examples: Vec<Example>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if examples.len() != dataset.clips.len() {
        return Err(Error::invalid("one example per clip is required"));
    }
    if dataset.clips.iter().any(|c| c.split.is_some()) {
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (ex, clip) in examples.into_iter().zip(&dataset.clips) {
            match clip.split {
                Some(Split::Val) => val.push(ex),
                _ => train.push(ex),
            }
        }
        return Ok((train, val));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid(format!("validation fraction {val_fraction} outside [0, 1)")));
    }
    let n = examples.len();
    let n_val =
        ((n as f64 * val_fraction).round() as usize).clamp(usize::from(val_fraction > 0.0), n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (ex, v) in examples.into_iter().zip(is_val) {
        if v {
            val.push(ex);
        } else {
            train.push(ex);
        }
    }
    Ok((train, val))
}
