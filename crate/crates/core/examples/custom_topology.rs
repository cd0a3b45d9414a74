//! Runs the prior pipeline on a non-human skeleton: hand-posed quadrupeds
//! with capsule part masks, one of which is held out as the target.
//!
//! cargo run --release --example custom_topology

use partprior::dataset::LabeledExample;
use partprior::geometry::for_each_capsule_pixel;
use partprior::mask::{PartMask, PartSegmentation};
use partprior::metrics::ConfusionMatrix;
use partprior::pipeline::{self, PriorConfig, PriorEngine};
use partprior::pose::Pose;
use partprior::topology::SkeletonTopology;
use rand::{Rng, SeedableRng};

const SIZE: u32 = 96;

/// A standing quadruped facing right with jittered limbs.
fn quadruped(rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let mut j = |x: f64, y: f64| (x + rng.random_range(-2.5..2.5), y + rng.random_range(-2.5..2.5));
    vec![
        j(80.0, 30.0), // nose
        j(72.0, 22.0), // head_top
        j(66.0, 34.0), // neck
        j(60.0, 40.0), // withers
        j(28.0, 42.0), // tail_base
        j(14.0, 30.0), // tail_tip
        j(60.0, 48.0), // lf_shoulder
        j(62.0, 64.0), // lf_knee
        j(63.0, 82.0), // lf_paw
        j(56.0, 48.0), // rf_shoulder
        j(54.0, 64.0), // rf_knee
        j(55.0, 82.0), // rf_paw
        j(32.0, 48.0), // lb_hip
        j(30.0, 64.0), // lb_knee
        j(33.0, 82.0), // lb_paw
        j(27.0, 48.0), // rb_hip
        j(25.0, 64.0), // rb_knee
        j(27.0, 82.0), // rb_paw
    ]
}

fn render(pose: &Pose, topo: &SkeletonTopology) -> PartSegmentation {
    let masks = topo
        .parts()
        .iter()
        .map(|part| {
            let (a, b) = part.segment(pose).expect("all joints visible");
            let width = if part.name == "body" { 16.0 } else { 5.0 };
            let mut m = PartMask::empty(SIZE, SIZE);
            for_each_capsule_pixel(a, b, width, SIZE, SIZE, |x, y| m.set(x, y, true));
            m
        })
        .collect();
    PartSegmentation::from_masks(masks).expect("equal sizes")
}

fn main() -> partprior::Result<()> {
    let topo = SkeletonTopology::quadruped();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let examples: Vec<LabeledExample> = (0..40)
        .map(|i| {
            let pose = Pose::from_points(&quadruped(&mut rng)).expect("finite");
            LabeledExample {
                id: format!("q{i:02}"),
                image: image::RgbImage::new(SIZE, SIZE),
                segmentation: render(&pose, &topo),
                pose,
            }
        })
        .collect();
    let (target, labeled) = examples.split_last().expect("non-empty");
    let engine = PriorEngine::from_parts(labeled, &topo)?;
    let p = engine.prior_for(&target.id, &target.pose, (SIZE, SIZE), &PriorConfig::default(), 0)?;
    println!("{} parts, {} merge groups; cluster {}", topo.part_count(), topo.merge_group_count(), p.cluster.join(" "));

    let pred = pipeline::merged_argmax(&p.prior, &topo)?;
    let truth = target.segmentation.to_merged_labels(&topo)?;
    let mut cm = ConfusionMatrix::new(pred.classes());
    cm.accumulate(&pred, &truth)?;
    let summary = cm.mean_iou()?;
    for (name, iou) in pipeline::merged_class_names(&topo).iter().zip(&summary.per_class) {
        println!("  {name:<11} {}", iou.map_or("-".into(), |v| format!("{:.3}", v)));
    }
    println!("mIoU {:.4}", summary.mean);
    Ok(())
}
