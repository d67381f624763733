//! Saving and loading a model file, and what a damaged one looks like.

use highlighter::models::{load_model, read_model, save_model, LossKind, Model, ModelConfig, Variant, MAGIC};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ModelConfig::new(Variant::NamLfPos, 8, LossKind::Bce);
    let model = Model::<f32>::new(config, 42)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("nam_lf_pos.pmhl");
    save_model(&model, &path)?;

    let bytes = std::fs::read(&path)?;
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + header_len]).expect("json header");
    println!("{} bytes, magic {:?}", bytes.len(), std::str::from_utf8(MAGIC).unwrap_or("?"));
    println!("variant {} with {} tensors", header["variant"], header["tensors"].as_array().map_or(0, Vec::len));

    let loaded = load_model(&path)?;
    println!("round trip identical: {}", loaded == model);

    let mut damaged = bytes.clone();
    damaged.truncate(bytes.len() - 1);
    match read_model(&damaged[..]) {
        Ok(_) => println!("truncated file loaded?"),
        Err(e) => println!("truncated file: {e}"),
    }
    Ok(())
}
