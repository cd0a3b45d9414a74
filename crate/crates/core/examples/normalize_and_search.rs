//! Normalizes keypoint poses and retrieves the most similar labeled figures
//! for one keypoint-only target, exactly and by pool sampling.
//!
//! cargo run --release --example normalize_and_search -- [target_index] [k]

use partprior::pose::normalize_pose;
use partprior::search::build_index;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut args = std::env::args().skip(1);
    let which: usize = args.next().map_or(0, |a| a.parse().expect("target index"));
    let k: usize = args.next().map_or(5, |a| a.parse().expect("k"));

    let ds = generate_synthetic(&SynthConfig::default())?;
    let topo = &ds.topology;
    let (index, skipped) = build_index(ds.labeled.iter().map(|e| (e.id.clone(), e.pose.clone())), topo)?;
    println!("indexed {} labeled poses, skipped {}", index.len(), skipped.len());

    let target = &ds.pose_only[which % ds.pose_only.len()];
    let norm = normalize_pose(&target.pose, topo)?;
    let t = topo.torso();
    let neck = norm.joints()[t.neck];
    println!("target {}: normalized neck at ({:.3}, {:.3})", target.id, neck.x, neck.y);

    println!("exact top-{k}:");
    for hit in index.query_topk(&norm, k, None)? {
        println!("  {:<10} {:.4}", hit.id, hit.distance);
    }
    let sampled = index.sample_cluster(&norm, 2 * k, k, 1, None)?;
    println!("{k} sampled from the nearest {}: {}", 2 * k, sampled.join(" "));
    Ok(())
}
