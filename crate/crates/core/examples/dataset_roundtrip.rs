//! Writes a synthetic dataset to disk in the on-disk layout, reads it back,
//! and lists what the manifest holds.
//!
//! cargo run --release --example dataset_roundtrip -- [out_dir] [count]

use std::path::PathBuf;

use partprior::dataset::{load_dataset, load_manifest, save_dataset, Split};
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "dataset_out".into()));
    let count: usize = args.next().map_or(20, |a| a.parse().expect("count"));

    let ds = generate_synthetic(&SynthConfig {
        count,
        ..SynthConfig::default()
    })?;
    save_dataset(&ds, &root)?;
    let manifest = load_manifest(&root)?;
    let labeled = manifest.examples.iter().filter(|e| e.split == Split::Labeled).count();
    println!(
        "{}: format {} v{}, {} labeled, {} pose-only",
        root.display(),
        manifest.format,
        manifest.version,
        labeled,
        manifest.examples.len() - labeled
    );
    if let Some(e) = manifest.examples.first() {
        println!("first entry: {}", serde_json::to_string(e).expect("entry serializes"));
    }
    let back = load_dataset(&root)?;
    println!("reloaded dataset identical: {}", back == ds);
    Ok(())
}
