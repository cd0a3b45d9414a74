//! Trains the per-pixel refiner on a synthetic dataset and compares its
//! held-out labels with the plain prior argmax.
//!
//! cargo run --release --example train_refiner -- [learning_rate] [epochs]

use partprior::pipeline::{self, PriorConfig, PriorEngine};
use partprior::refiner::TrainingConfig;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut args = std::env::args().skip(1);
    let lr = args.next().map_or(partprior::refiner::DEFAULT_LEARNING_RATE, |a| a.parse().expect("learning rate"));
    let epochs = args.next().map_or(partprior::refiner::DEFAULT_EPOCHS, |a| a.parse().expect("epochs"));

    let ds = generate_synthetic(&SynthConfig::default())?;
    let sampling = PriorConfig { sample: true, ..PriorConfig::default() };
    let training = TrainingConfig { epochs, learning_rate: lr, ..TrainingConfig::default() };
    let start = std::time::Instant::now();
    let model = pipeline::train_on_dataset(&ds, &sampling, &training, (64, 64))?;
    let meta = model.meta();
    println!(
        "lr {lr}, {epochs} epochs: loss {:.5} -> {:.5} (ratio {:.3}) in {:.1?}",
        meta.initial_loss,
        meta.final_loss,
        meta.final_loss / meta.initial_loss,
        start.elapsed()
    );

    let engine = PriorEngine::new(&ds)?;
    let priors = engine.pose_only_priors(&ds, &PriorConfig::default())?;
    let names = pipeline::merged_class_names(&ds.topology);
    let argmax = pipeline::held_out_pairs(&ds, &priors, |p| {
        partprior::refiner::refine_argmax(&p.prior)?.merge_parts(&ds.topology)
    })?;
    let image_of = |id: &str| &ds.pose_only.iter().find(|e| e.id == id).expect("target").image;
    let refined = pipeline::held_out_pairs(&ds, &priors, |p| {
        pipeline::label_target(Some(&model), image_of(&p.id), &p.prior)?.merge_parts(&ds.topology)
    })?;
    let a = pipeline::score(names.clone(), &argmax)?;
    let r = pipeline::score(names, &refined)?;
    print!("{}", a.to_text("prior argmax"));
    print!("{}", r.to_text("refined").lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
    Ok(())
}
