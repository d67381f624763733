//! Runs the finite-difference suite and prints one line per checked shape.
//!
//! cargo run -p highlighter-nn --example gradient_check [seed]

use highlighter_nn::gradcheck::{layer_suite, DEFAULT_STEP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut worst = 0.0f64;
    for e in layer_suite(seed, DEFAULT_STEP)? {
        worst = worst.max(e.result.rel_error);
        println!("{:<26} {:<28} rel_err {:.2e} ({} entries)", e.layer, e.shape, e.result.rel_error, e.result.entries);
    }
    println!("worst relative error: {worst:.2e}");
    Ok(())
}
