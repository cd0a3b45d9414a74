//! Morphs one labeled figure's part masks onto another figure's pose and
//! scores each transferred part against the target's own mask.
//!
//! cargo run --release --example morph_part -- [source_index] [target_index] [out_dir]

use partprior::dataset::write_segmentation;
use partprior::morph::morph_part_segmentation;
use partprior::synth::{generate_synthetic, SynthConfig};

fn main() -> partprior::Result<()> {
    let mut args = std::env::args().skip(1);
    let src: usize = args.next().map_or(0, |a| a.parse().expect("source index"));
    let dst: usize = args.next().map_or(1, |a| a.parse().expect("target index"));
    let out = args.next();

    let ds = generate_synthetic(&SynthConfig::default())?;
    let (a, b) = (&ds.labeled[src], &ds.labeled[dst]);
    let (morphed, report) = morph_part_segmentation(&a.segmentation, &a.pose, &b.pose, &ds.topology, b.image.dimensions())?;
    println!("{} -> {}: {} of {} parts morphed", a.id, b.id, report.morphed(), report.outcomes.len());
    for (i, name) in ds.topology.part_names().iter().enumerate() {
        let (m, t) = (morphed.mask(i), b.segmentation.mask(i));
        let inter = m.intersection(t);
        let union = m.count() + t.count() - inter;
        let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        println!("  {name:<12} {:>4} px  IoU {iou:.3}  {:?}", m.count(), report.outcomes[i]);
    }
    if let Some(dir) = out {
        let dir = std::path::Path::new(&dir);
        partprior::dataset::create_dir(dir)?;
        write_segmentation(&dir.join("morphed.png"), &morphed)?;
        write_segmentation(&dir.join("target.png"), &b.segmentation)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
