//! Attention curves from the four network variants on the same random
//! chunks. Untrained, so the shapes are what matters: every curve is a
//! distribution over chunks.

use highlighter::audio::MelChunk;
use highlighter::models::{LossKind, Model, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> highlighter::Result<()> {
    let t = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = ModelConfig::new(Variant::NamLf, 8, LossKind::Bce);
    let chunks: Vec<MelChunk> = (0..t)
        .map(|i| MelChunk {
            data: (0..base.frames_per_chunk * base.n_mels).map(|_| rng.random_range(0.0..6.0)).collect(),
            index: i + 1,
            valid_frames: base.frames_per_chunk,
        })
        .collect();
    for variant in Variant::ALL {
        let model = Model::<f32>::new(ModelConfig { variant, ..base.clone() }, 0)?;
        let (pred, att) = model.predict(&chunks)?;
        let curve: Vec<String> = att.scores.iter().map(|a| format!("{a:.3}")).collect();
        println!("{:<10} sum={:.6}  [{}]", variant, att.scores.iter().sum::<f64>(), curve.join(" "));
        println!("{:<10} song-level sum={:.6}", "", pred.song_level.iter().sum::<f64>());
    }
    Ok(())
}
