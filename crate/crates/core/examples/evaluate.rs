//! Scores predicted label maps against ground truth: a per-class IoU table
//! for the prior argmax, both merged and per part.
//!
//! cargo run --release --example evaluate

use partprior::pipeline::{self, PriorConfig, PriorEngine};
use partprior::refiner::refine_argmax;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let ds = generate_synthetic(&SynthConfig::default())?;
    let priors = PriorEngine::new(&ds)?.pose_only_priors(&ds, &PriorConfig::default())?;

    let merged = pipeline::held_out_pairs(&ds, &priors, |p| pipeline::merged_argmax(&p.prior, &ds.topology))?;
    let report = pipeline::score(pipeline::merged_class_names(&ds.topology), &merged)?;
    print!("{}", report.to_text("merged prior argmax"));

    // Per-part scoring needs unmerged truth on both sides.
    let truth: std::collections::HashMap<_, _> = ds
        .pose_only
        .iter()
        .filter_map(|e| e.truth.as_ref().map(|t| (e.id.as_str(), t.to_part_labels())))
        .collect();
    let parts: Vec<_> = priors
        .iter()
        .map(|p| Ok((p.id.clone(), refine_argmax(&p.prior)?, truth[p.id.as_str()].clone())))
        .collect::<partprior::Result<_>>()?;
    let report = pipeline::score(pipeline::part_class_names(&ds.topology), &parts)?;
    print!("{}", report.to_text("per-part prior argmax"));
    Ok(())
}
