//! Morphing synthetic figures onto poses moved by a known motion.

use partprior::geometry::Point;
use partprior::morph::{morph_part_segmentation, PartTransform};
use partprior::pose::Pose;
use partprior::synth::{sample_figure, SynthConfig};
use partprior::topology::{human, SkeletonTopology};

fn config() -> SynthConfig {
    SynthConfig {
        width: 128,
        height: 128,
        ..SynthConfig::default()
    }
}

/// Whether every pixel of the part lands inside the frame after the move;
/// cropping would shift the centroid.
fn stays_in_frame(mask: &partprior::mask::PartMask, t: &PartTransform) -> bool {
    (0..mask.height()).all(|y| {
        (0..mask.width()).all(|x| {
            let p = t.apply(Point::new(x as f64, y as f64));
            !mask.get(x, y) || (0.0..=127.0).contains(&p.x) && (0.0..=127.0).contains(&p.y)
        })
    })
}

/// Compares each morphed part centroid with the source centroid moved
/// analytically. Returns how many parts were compared.
fn check(src: &Pose, moved: &Pose, motion: impl Fn(usize) -> Option<PartTransform>, index: usize) -> usize {
    let mut compared = 0;
    let topo = SkeletonTopology::human();
    let fig = sample_figure(&config(), index).unwrap();
    let (out, report) = morph_part_segmentation(&fig.segmentation, src, moved, &topo, (128, 128)).unwrap();
    assert_eq!(report.morphed(), topo.part_count());
    for part in 0..topo.part_count() {
        let Some(t) = motion(part) else { continue };
        let mask = fig.segmentation.mask(part);
        let Some(c) = mask.centroid() else { continue };
        if !stays_in_frame(mask, &t) {
            continue;
        }
        compared += 1;
        let want = t.apply(c);
        let got = out.mask(part).centroid().expect("morphed part stays in frame");
        assert!(
            got.distance(want) <= 2.0,
            "figure {index} part {part}: centroid {got:?}, expected {want:?}"
        );
    }
    compared
}

#[test]
fn whole_body_similarity_moves_every_centroid() {
    let mut compared = 0;
    for index in 0..20 {
        let fig = sample_figure(&config(), index).unwrap();
        let center = Point::new(64.0, 64.0);
        let angle = 0.1 + 0.02 * index as f64;
        let scale = 0.95 + 0.01 * index as f64;
        let t = PartTransform::translation(-center.x, -center.y)
            .then(&PartTransform::similarity(scale, angle, center.x + 3.0, center.y - 2.0));
        let moved = fig.pose.map_points(|p| t.apply(p)).unwrap();
        compared += check(&fig.pose, &moved, |_| Some(t), index);
    }
    assert!(compared >= 180, "only {compared} of 200 parts stayed in frame");
}

#[test]
fn bending_an_elbow_moves_only_the_lower_arm() {
    let mut compared = 0;
    for index in 0..20 {
        let fig = sample_figure(&config(), index).unwrap();
        let elbow = fig.pose.joints()[human::L_ELBOW].point();
        let bend = PartTransform::translation(-elbow.x, -elbow.y).then(&PartTransform::similarity(1.0, 0.4, elbow.x, elbow.y));
        let mut joints = fig.pose.joints().to_vec();
        let w = bend.apply(joints[human::L_WRIST].point());
        joints[human::L_WRIST].x = w.x;
        joints[human::L_WRIST].y = w.y;
        let moved = Pose::new(joints).unwrap();
        compared += check(
            &fig.pose,
            &moved,
            |part| match part {
                human::L_LOWER_ARM => Some(bend),
                _ => Some(PartTransform::IDENTITY),
            },
            index,
        );
    }
    assert!(compared >= 180, "only {compared} of 200 parts stayed in frame");
}
