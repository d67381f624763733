//! Trains an attention network on the synthetic burst task and checks where
//! its attention lands. Each class puts a tone burst in one known chunk of
//! an otherwise noisy clip, so a network that classifies well has to look
//! at that chunk.
//!
//!     cargo run --release --example train_synthetic -- \
//!         [--per-class 40] [--epochs 6] [--variant NAM_LF_POS] [--small] [--lr 1e-4] [--out model.pmhl]
//!
//! `--small` shrinks the layer widths (the input shape stays the same), which
//! is how the toy model used by the CLI tests was made.

use highlighter::extraction::extract_from_attention;
use highlighter::models::{save_model, LossKind, ModelConfig, Variant};
use highlighter::training::{
    argmax, generate_synthetic, prepare_examples, split_examples, synthetic_dataset, train, SyntheticSpec, TrainConfig,
};

struct Args {
    per_class: usize,
    epochs: usize,
    variant: Variant,
    small: bool,
    lr: f64,
    out: Option<String>,
}

fn parse() -> Args {
    let mut a = Args { per_class: 40, epochs: 6, variant: Variant::NamLfPos, small: false, lr: 1e-4, out: None };
    let mut it = std::env::args().skip(1);
    while let Some(flag) = it.next() {
        let mut val = || it.next().unwrap_or_else(|| panic!("{flag} needs a value"));
        match flag.as_str() {
            "--per-class" => a.per_class = val().parse().expect("--per-class"),
            "--epochs" => a.epochs = val().parse().expect("--epochs"),
            "--variant" => a.variant = val().parse().expect("--variant"),
            "--lr" => a.lr = val().parse().expect("--lr"),
            "--out" => a.out = Some(val()),
            "--small" => a.small = true,
            other => panic!("unknown flag {other}"),
        }
    }
    a
}

fn main() -> highlighter::Result<()> {
    let args = parse();
    let spec = SyntheticSpec::new(8, args.per_class, 7);
    let clips = generate_synthetic(&spec)?;
    let bursts: Vec<usize> = clips.iter().map(|c| c.burst_chunk).collect();
    let dataset = synthetic_dataset(&spec, clips, (args.per_class / 5).max(1))?;
    let examples = prepare_examples(&dataset, spec.chunks_per_clip, 1)?;
    let burst_of: std::collections::HashMap<String, usize> =
        examples.iter().map(|e| e.clip_id.clone()).zip(bursts).collect();
    let (train_set, val_set) = split_examples(&dataset, examples, 0.0, 0)?;
    println!("{} train / {} val clips", train_set.len(), val_set.len());

    let mut config = ModelConfig::new(args.variant, spec.n_classes, LossKind::Bce);
    if args.small {
        config.conv_channels = [16, 32, 64];
        config.attention_hidden = 64;
        config.lstm_hidden = 64;
        config.predictor_hidden = 128;
    }
    let tc = TrainConfig { epochs: args.epochs, lr: args.lr, seed: 1, ..TrainConfig::default() };
    let outcome = train(&train_set, &val_set, config, &tc)?;
    for e in &outcome.log {
        println!("epoch {:>2}  loss {:.4}  val acc {:.3}  {:.1} s", e.epoch, e.train_loss, e.val_accuracy, e.seconds);
    }
    println!("keeping epoch {}", outcome.best_epoch);

    let (mut on_burst, mut covered) = (0, 0);
    for ex in &val_set {
        let (_, att) = outcome.model.predict(&ex.chunks)?;
        let burst = burst_of[&ex.clip_id];
        if argmax(&att.scores) == Some(burst - 1) {
            on_burst += 1;
        }
        let h = extract_from_attention(&att, 24.0, 6.0)?;
        let (b0, b1) = ((burst - 1) as f64 * 3.0, burst as f64 * 3.0);
        if h.start_sec < b1 && b0 < h.end_sec {
            covered += 1;
        }
    }
    let n = val_set.len() as f64;
    println!("attention peak on the burst chunk: {:.1}%", 100.0 * on_burst as f64 / n);
    println!("6 s highlight overlaps the burst:  {:.1}%", 100.0 * covered as f64 / n);

    if let Some(out) = args.out {
        save_model(&outcome.model, &out)?;
        println!("saved {out}");
    }
    Ok(())
}
