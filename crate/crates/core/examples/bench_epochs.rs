//! Seconds per training epoch for the non-recurrent and recurrent
//! attention heads on the same synthetic batch schedule.
//!
//!     cargo run --release --example bench_epochs -- [clips_per_class]

use highlighter::models::{LossKind, ModelConfig, Variant};
use highlighter::training::{
    epoch_timer, generate_synthetic, prepare_examples, synthetic_dataset, SyntheticSpec, TrainConfig,
};

fn main() -> highlighter::Result<()> {
    let per_class: usize = std::env::args().nth(1).map(|s| s.parse().expect("count")).unwrap_or(8);
    let spec = SyntheticSpec::new(8, per_class, 5);
    let data = synthetic_dataset(&spec, generate_synthetic(&spec)?, 0)?;
    let examples = prepare_examples(&data, spec.chunks_per_clip, 1)?;
    let base = ModelConfig::new(Variant::NamLf, spec.n_classes, LossKind::Bce);
    let timings = epoch_timer(&[Variant::NamLf, Variant::RnamLf], &examples, &base, &TrainConfig::default(), 1, 3)?;
    for t in &timings {
        println!("{:<8} {:.3} s/epoch", t.variant, t.mean());
    }
    if let [nam, rnam] = &timings[..] {
        println!("RNAM / NAM = {:.2}", rnam.mean() / nam.mean());
    }
    Ok(())
}
