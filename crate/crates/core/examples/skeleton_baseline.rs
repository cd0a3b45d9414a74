//! Scores the stick-figure label map against the part-level prior on the
//! held-out synthetic figures, across stick widths.
//!
//! cargo run --release --example skeleton_baseline -- [width ...]

use partprior::pipeline::{evaluate_prior_argmax, PriorConfig, Strategy};
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut widths: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("stick width")).collect();
    if widths.is_empty() {
        widths = vec![3.0, 5.0, 7.0, 9.0, 11.0];
    }
    let ds = generate_synthetic(&SynthConfig::default())?;
    for w in widths {
        let cfg = PriorConfig {
            stick_width: w,
            ..PriorConfig::with_strategy(Strategy::SkeletonMap)
        };
        println!("skeleton map, width {w:>4}: mIoU {:.4}", evaluate_prior_argmax(&ds, &cfg)?.mean);
    }
    let part = evaluate_prior_argmax(&ds, &PriorConfig::default())?;
    println!("part-level prior, k=3:     mIoU {:.4}", part.mean);
    Ok(())
}
