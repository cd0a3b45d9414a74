//! Generates the 250-figure synthetic benchmark and compares prior
//! strategies on its 50 held-out figures.
//!
//! cargo run --release --example synthetic_pipeline -- [seed]

use partprior::pipeline;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let seed = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));
    let ds = generate_synthetic(&SynthConfig { seed, ..SynthConfig::default() })?;
    println!(
        "{} labeled, {} pose-only figures at {}x{}",
        ds.labeled.len(),
        ds.pose_only.len(),
        ds.labeled[0].image.width(),
        ds.labeled[0].image.height()
    );
    let rows = pipeline::strategy_sweep(&ds, &[1, 3, 5, 7], partprior::prior::DEFAULT_STICK_WIDTH)?;
    print!("{}", pipeline::sweep_table(&rows));
    Ok(())
}
