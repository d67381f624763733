use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use highlighter::audio::{load_audio, CurveKind, FrameCurve, SAMPLE_RATE};
use highlighter::evaluation::{
    evaluate_corpus, read_annotations, read_highlights, upper_bound, write_report_csv, EvalReport, SongScore,
};
use highlighter::extraction::{
    extract, fuse_curves, upsample_attention, HighlightRecord, Method, SongFeatures, DEFAULT_TARGET_SEC,
};
use highlighter::models::{load_model, save_model, LossKind, Model, ModelConfig, Variant};
use highlighter::training::{
    epoch_timer, generate_synthetic, ingest_dataset, prepare_examples, split_examples, synthetic_dataset, train,
    write_dataset, write_log_csv, SyntheticSpec, TrainConfig,
};
use highlighter::write_atomic;

const DEFAULT_SEED: u64 = 1234;

#[derive(Parser)]
#[command(name = "highlighter", version, about = "Fixed-length highlight extraction for pop songs")]
struct Cli {
    /// Worker threads for per-file work.
    #[arg(long, global = true, env = "HIGHLIGHTER_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick a highlight for each audio file; one JSON line per file.
    Extract(ExtractArgs),
    /// Write per-frame curves of each audio file as CSV.
    Curves(CurvesArgs),
    /// Train an attention model on a manifest.
    Train(TrainArgs),
    /// Generate the synthetic burst dataset.
    Synth(SynthArgs),
    /// Score highlights against chorus annotations.
    Eval(EvalArgs),
    /// Seconds per training epoch for several variants.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Middle,
    Energy,
    Centroid,
    Rolloff,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, required_unless_present = "method", conflicts_with = "method")]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Baseline>,
    #[arg(long, required = true, num_args = 1..)]
    audio: Vec<PathBuf>,
    /// Highlight length in seconds.
    #[arg(long, default_value_t = DEFAULT_TARGET_SEC)]
    length: f64,
    /// Weight on the energy curve when fusing it with attention.
    #[arg(long, requires = "model")]
    lambda: Option<f64>,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each song's curves here.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, required = true, num_args = 1..)]
    audio: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Adds the upsampled attention curve.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Adds the fused curve at this energy weight.
    #[arg(long, requires = "model")]
    lambda: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "NAM_LF_POS")]
    variant: Variant,
    #[arg(long, default_value = "bce")]
    loss: LossKind,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_songs: usize,
    /// Held out when the manifest marks no validation clips.
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long)]
    out: PathBuf,
    /// Epoch log CSV; defaults to the model path with `.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 125)]
    per_class: usize,
    /// Clips per class marked for validation.
    #[arg(long, default_value_t = 25)]
    val_per_class: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    highlights: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Add the best achievable score per annotated song.
    #[arg(long)]
    upper_bound: bool,
    #[arg(long, default_value_t = DEFAULT_TARGET_SEC)]
    length: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "NAM_LF,RNAM_LF")]
    variants: Vec<Variant>,
    /// Training manifest; synthetic clips when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Synthetic clips per class when no manifest is given.
    #[arg(long, default_value_t = 8)]
    per_class: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_target(false).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build()?;
    let force = cli.force;
    pool.install(|| match cli.command {
        Command::Extract(a) => cmd_extract(a, force),
        Command::Curves(a) => cmd_curves(a, force),
        Command::Train(a) => cmd_train(a, force, cli.jobs),
        Command::Synth(a) => cmd_synth(a, force),
        Command::Eval(a) => cmd_eval(a, force),
        Command::Bench(a) => cmd_bench(a, force, cli.jobs),
    })
}

fn check_free(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to replace it", path.display());
    }
    Ok(())
}

/// Writes `text` atomically to `out`, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(write_atomic(p, |w| w.write_all(text.as_bytes()))?),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn clip_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_song(path: &Path) -> Result<SongFeatures> {
    let clip = load_audio(path, SAMPLE_RATE)?;
    Ok(SongFeatures::from_clip(&clip)?)
}

fn check_lambda(lambda: Option<f64>) -> Result<()> {
    if let Some(l) = lambda {
        if !(0.0..=1.0).contains(&l) {
            bail!("--lambda {l} outside [0, 1]");
        }
    }
    Ok(())
}

/// Curves for one song: the spectral ones, then attention and fusion when
/// a model is given.
fn song_curves(
    song: &SongFeatures,
    model: Option<&Model>,
    lambda: Option<f64>,
) -> Result<Vec<(&'static str, FrameCurve)>> {
    let mut out = vec![
        ("energy", song.curve(CurveKind::Energy)?),
        ("centroid", song.curve(CurveKind::Centroid)?),
        ("rolloff", song.curve(CurveKind::Rolloff)?),
    ];
    if let Some(m) = model {
        let up = upsample_attention(&song.attention(m)?, out[0].1.len(), out[0].1.hop_seconds)?;
        if let Some(l) = lambda {
            out.push(("fused", fuse_curves(&out[0].1, &up, l)?));
        }
        out.push(("attention", up));
    }
    Ok(out)
}

fn write_curves(dir: &Path, id: &str, curves: &[(&str, FrameCurve)], force: bool) -> Result<()> {
    for (name, c) in curves {
        let path = dir.join(format!("{id}.{name}.csv"));
        check_free(&path, force)?;
        write_atomic(&path, |w| c.write_csv(w))?;
    }
    Ok(())
}

fn for_each_input<T: Send>(inputs: &[PathBuf], f: impl Fn(&Path) -> Result<T> + Sync) -> Vec<Result<T>> {
    use rayon::prelude::*;
    inputs
        .par_iter()
        .map(|p| {
            let name = p.display().to_string();
            f(p).map_err(|e| if format!("{e:#}").contains(&name) { e } else { e.context(name) })
        })
        .collect()
}

fn cmd_extract(a: ExtractArgs, force: bool) -> Result<()> {
    check_lambda(a.lambda)?;
    if a.lambda.is_some() && a.model.is_none() {
        bail!("--lambda fuses energy with attention and needs --model");
    }
    if let Some(out) = &a.out {
        check_free(out, force)?;
    }
    let model = a.model.as_ref().map(load_model).transpose()?;
    let method = match (a.method, a.lambda) {
        (Some(Baseline::Middle), _) => Method::Middle,
        (Some(Baseline::Energy), _) => Method::Spectral(CurveKind::Energy),
        (Some(Baseline::Centroid), _) => Method::Spectral(CurveKind::Centroid),
        (Some(Baseline::Rolloff), _) => Method::Spectral(CurveKind::Rolloff),
        (None, Some(l)) => Method::Fused(l),
        (None, None) => Method::Attention,
    };
    if let Some(d) = &a.curves_dir {
        fs::create_dir_all(d).with_context(|| d.display().to_string())?;
    }
    let results = for_each_input(&a.audio, |path| {
        let song = load_song(path)?;
        let id = clip_id(path);
        let highlight = extract(&song, method, model.as_ref(), a.length)?;
        if let Some(d) = &a.curves_dir {
            write_curves(d, &id, &song_curves(&song, model.as_ref(), a.lambda)?, force)?;
        }
        Ok(serde_json::to_string(&HighlightRecord { clip_id: id, highlight })?)
    });
    let mut text = String::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(line) => {
                text.push_str(&line);
                text.push('\n');
            }
            Err(e) => {
                failed += 1;
                log::warn!("skipping {e:#}");
            }
        }
    }
    if failed == a.audio.len() {
        bail!("no input could be processed");
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_curves(a: CurvesArgs, force: bool) -> Result<()> {
    check_lambda(a.lambda)?;
    let model = a.model.as_ref().map(load_model).transpose()?;
    fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    let results = for_each_input(&a.audio, |path| {
        let song = load_song(path)?;
        write_curves(&a.out_dir, &clip_id(path), &song_curves(&song, model.as_ref(), a.lambda)?, force)
    });
    let failed = results.into_iter().filter_map(Result::err).inspect(|e| log::warn!("skipping {e:#}")).count();
    if failed == a.audio.len() {
        bail!("no input could be processed");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, force: bool, jobs: usize) -> Result<()> {
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"));
    check_free(&a.out, force)?;
    check_free(&log_path, force)?;
    let dataset = ingest_dataset(&a.manifest)?;
    let config = ModelConfig::new(a.variant, dataset.descriptor.n_classes, a.loss);
    let examples = prepare_examples(&dataset, config.chunks_per_clip, jobs)?;
    let (train_set, val_set) = split_examples(&dataset, examples, a.val_fraction, a.seed)?;
    log::info!("{} training clips, {} validation clips", train_set.len(), val_set.len());
    let tc = TrainConfig { batch_songs: a.batch_songs, epochs: a.epochs, lr: a.lr, seed: a.seed };
    let outcome = train(&train_set, &val_set, config, &tc)?;
    save_model(&outcome.model, &a.out)?;
    write_atomic(&log_path, |w| write_log_csv(&outcome.log, w))?;
    if outcome.best_epoch > 0 {
        log::info!("kept epoch {} of {}", outcome.best_epoch, outcome.log.len());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, force: bool) -> Result<()> {
    if a.out.exists() && fs::read_dir(&a.out)?.next().is_some() && !force {
        bail!("{} is not empty; pass --force to replace it", a.out.display());
    }
    let spec = SyntheticSpec { noise_level: a.noise, ..SyntheticSpec::new(a.classes, a.per_class, a.seed) };
    let dataset = synthetic_dataset(&spec, generate_synthetic(&spec)?, a.val_per_class)?;
    // build next to the target and swap it in only once complete
    let parent = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".synth-").tempdir_in(&parent)?;
    write_dataset(staging.path(), &dataset)?;
    if a.out.exists() {
        fs::remove_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    }
    fs::rename(staging.keep(), &a.out).with_context(|| a.out.display().to_string())?;
    log::info!("wrote {} clips to {}", dataset.clips.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs, force: bool) -> Result<()> {
    check_free(&a.out, force)?;
    let highlights = read_highlights(&a.highlights)?;
    let annotations = read_annotations(&a.annotations)?;
    let mut reports = evaluate_corpus(&highlights, &annotations)?;
    if a.upper_bound {
        let songs = annotations
            .iter()
            .map(|ann| Ok(SongScore { clip_id: ann.clip_id.clone(), score: upper_bound(ann, a.length, 0.1)?.score }))
            .collect::<Result<Vec<_>>>()?;
        let n = songs.len().max(1) as f64;
        let mean = |g: fn(&SongScore) -> f64| songs.iter().map(g).sum::<f64>() / n;
        reports.push(EvalReport {
            method: "upper_bound".into(),
            mean_r: mean(|s| s.score.r),
            mean_p: mean(|s| s.score.p),
            mean_f: mean(|s| s.score.f),
            songs,
        });
    }
    Ok(write_atomic(&a.out, |w| write_report_csv(&reports, w))?)
}

fn cmd_bench(a: BenchArgs, force: bool, jobs: usize) -> Result<()> {
    if let Some(out) = &a.out {
        check_free(out, force)?;
    }
    if a.variants.is_empty() || a.epochs == 0 {
        bail!("bench needs at least one variant and one measured epoch");
    }
    let dataset = match &a.manifest {
        Some(m) => ingest_dataset(m)?,
        None => {
            let spec = SyntheticSpec::new(8, a.per_class, a.seed);
            synthetic_dataset(&spec, generate_synthetic(&spec)?, 0)?
        }
    };
    let base = ModelConfig::new(a.variants[0], dataset.descriptor.n_classes, LossKind::Bce);
    let examples = prepare_examples(&dataset, base.chunks_per_clip, jobs)?;
    let tc = TrainConfig { seed: a.seed, ..TrainConfig::default() };
    let timings = epoch_timer(&a.variants, &examples, &base, &tc, a.warmup, a.epochs)?;
    let mut text = String::from("variant,seconds_per_epoch,epochs\n");
    for t in &timings {
        text.push_str(&format!("{},{:.4},{}\n", t.variant, t.mean(), t.seconds.len()));
    }
    emit(a.out.as_deref(), &text)
}
