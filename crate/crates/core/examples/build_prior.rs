//! Builds the part-level prior for one keypoint-only target and writes its
//! color composite and argmax labels.
//!
//! cargo run --release --example build_prior -- [target_index] [k] [out_dir]

use std::path::PathBuf;

use partprior::dataset::{create_dir, write_rgb, write_segmentation};
use partprior::pipeline::{PriorConfig, PriorEngine};
use partprior::refiner::refine_argmax;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut args = std::env::args().skip(1);
    let which: usize = args.next().map_or(0, |a| a.parse().expect("target index"));
    let k: usize = args.next().map_or(3, |a| a.parse().expect("k"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "prior_out".into()));

    let ds = generate_synthetic(&SynthConfig::default())?;
    let engine = PriorEngine::new(&ds)?;
    let target = &ds.pose_only[which % ds.pose_only.len()];
    let cfg = PriorConfig {
        cluster_size: k,
        pool_size: k.max(5),
        ..PriorConfig::default()
    };
    let p = engine.prior_for(&target.id, &target.pose, target.image.dimensions(), &cfg, 0)?;
    println!("{}: cluster {}", p.id, p.cluster.join(" "));
    for (c, name) in p.prior.channel_names().iter().enumerate() {
        let ch = p.prior.channel(c);
        let mass: f32 = ch.iter().sum();
        let peak = ch.iter().copied().fold(0.0, f32::max);
        println!("  {name:<12} mass {mass:>7.1}  peak {peak:.3}");
    }
    create_dir(&out)?;
    write_rgb(&out.join("composite.png"), &p.prior.composite())?;
    write_segmentation(&out.join("argmax.png"), &refine_argmax(&p.prior)?.to_segmentation())?;
    p.prior.save(&out.join(format!("{}.ppri", p.id)))?;
    println!("wrote {}", out.display());
    Ok(())
}
