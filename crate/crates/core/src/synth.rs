//! Procedural articulated figures for the default human topology.
//!
//! A figure is built by forward kinematics from the pelvis: torso and head
//! hang off a leaning spine, arms and legs are two-segment chains whose angles
//! are measured outward from the downward direction. Each part is rendered as
//! a filled capsule around its topology segment. Parts are painted in a fixed
//! z-order, later parts covering earlier ones:
//!
//! torso, upper legs, lower legs, upper arms, lower arms, head.
//!
//! Lengths and widths in [`SynthConfig`] are given for a 64 pixel canvas and
//! scale with the smaller image side.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledExample, PoseOnlyExample};
use crate::error::{Error, Result};
use crate::geometry::{for_each_capsule_pixel, Point};
use crate::mask::PartSegmentation;
use crate::palette::part_color;
use crate::pose::{Joint, Pose};
use crate::topology::{human, SkeletonTopology};

/// Paint order, first painted first.
pub const Z_ORDER: [usize; 10] = [
    human::TORSO,
    human::L_UPPER_LEG,
    human::R_UPPER_LEG,
    human::L_LOWER_LEG,
    human::R_LOWER_LEG,
    human::L_UPPER_ARM,
    human::R_UPPER_ARM,
    human::L_LOWER_ARM,
    human::R_LOWER_ARM,
    human::HEAD,
];

const MAX_ATTEMPTS: usize = 1000;
const REFERENCE_SIDE: f64 = 64.0;

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    /// Share of figures emitted without labels, rounded to the nearest count.
    pub pose_only_fraction: f64,
    /// Amplitude of uniform per-pixel, per-channel noise added to the image.
    pub noise: f64,
    /// Per-figure jitter applied to each part color channel.
    pub color_jitter: f64,
    pub seed: u64,

    pub scale: Span,
    pub lean: Span,
    pub head_tilt: Span,
    pub upper_arm_angle: Span,
    pub elbow_angle: Span,
    pub upper_leg_angle: Span,
    pub knee_angle: Span,

    pub torso_length: Span,
    pub head_length: Span,
    pub shoulder_offset: Span,
    pub hip_offset: Span,
    pub upper_arm_length: Span,
    pub lower_arm_length: Span,
    pub upper_leg_length: Span,
    pub lower_leg_length: Span,

    pub torso_width: Span,
    pub head_width: Span,
    pub arm_width: Span,
    pub leg_width: Span,
    /// Lower arm and leg width as a fraction of the upper segment width.
    pub lower_limb_taper: f64,

    pub background: Span,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 250,
            width: 64,
            height: 64,
            pose_only_fraction: 0.2,
            noise: 20.0,
            color_jitter: 15.0,
            seed: 7,
            scale: Span::new(0.9, 1.05),
            lean: Span::new(-0.25, 0.25),
            head_tilt: Span::new(-0.3, 0.3),
            upper_arm_angle: Span::new(0.15, 1.9),
            elbow_angle: Span::new(0.0, 1.0),
            upper_leg_angle: Span::new(0.05, 0.7),
            knee_angle: Span::new(-0.3, 0.6),
            torso_length: Span::new(15.0, 19.0),
            head_length: Span::new(8.0, 10.0),
            shoulder_offset: Span::new(4.0, 5.5),
            hip_offset: Span::new(2.5, 3.5),
            upper_arm_length: Span::new(8.0, 10.0),
            lower_arm_length: Span::new(7.0, 9.0),
            upper_leg_length: Span::new(10.0, 13.0),
            lower_leg_length: Span::new(9.0, 12.0),
            torso_width: Span::new(9.0, 13.0),
            head_width: Span::new(7.0, 9.0),
            arm_width: Span::new(3.0, 5.0),
            leg_width: Span::new(4.0, 6.0),
            lower_limb_taper: 0.8,
            background: Span::new(40.0, 110.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.count == 0 {
            return fail("count must be at least 1".into());
        }
        if self.width < 32 || self.height < 32 {
            return fail(format!("image is {}x{}, both sides must be at least 32", self.width, self.height));
        }
        if !(0.0..=1.0).contains(&self.pose_only_fraction) {
            return fail(format!("pose-only fraction {} is outside [0, 1]", self.pose_only_fraction));
        }
        if !(self.noise >= 0.0 && self.noise <= 255.0) || !(self.color_jitter >= 0.0 && self.color_jitter <= 255.0) {
            return fail("noise and color jitter must lie in [0, 255]".into());
        }
        let angles = [
            ("lean", self.lean),
            ("head_tilt", self.head_tilt),
            ("upper_arm_angle", self.upper_arm_angle),
            ("elbow_angle", self.elbow_angle),
            ("upper_leg_angle", self.upper_leg_angle),
            ("knee_angle", self.knee_angle),
        ];
        for (name, s) in angles {
            if !s.valid() || s.min < -std::f64::consts::PI || s.max > std::f64::consts::PI {
                return fail(format!("{name} range {s:?} must lie within [-pi, pi]"));
            }
        }
        let positive = [
            ("scale", self.scale),
            ("torso_length", self.torso_length),
            ("head_length", self.head_length),
            ("upper_arm_length", self.upper_arm_length),
            ("lower_arm_length", self.lower_arm_length),
            ("upper_leg_length", self.upper_leg_length),
            ("lower_leg_length", self.lower_leg_length),
        ];
        for (name, s) in positive {
            if !s.valid() || s.min <= 0.0 {
                return fail(format!("{name} range {s:?} must be positive"));
            }
        }
        for (name, s) in [("shoulder_offset", self.shoulder_offset), ("hip_offset", self.hip_offset)] {
            if !s.valid() || s.min < 0.0 {
                return fail(format!("{name} range {s:?} must be non-negative"));
            }
        }
        let widths = [
            ("torso_width", self.torso_width),
            ("head_width", self.head_width),
            ("arm_width", self.arm_width),
            ("leg_width", self.leg_width),
        ];
        for (name, s) in widths {
            if !s.valid() || s.min < 1.0 {
                return fail(format!("{name} range {s:?} must be at least 1 pixel"));
            }
        }
        if !(self.lower_limb_taper > 0.0 && self.lower_limb_taper <= 1.0) || self.arm_width.min * self.lower_limb_taper < 1.0 {
            return fail(format!("lower limb taper {} must lie in (0, 1] and keep limbs at least 1 pixel wide", self.lower_limb_taper));
        }
        if !self.background.valid() || self.background.min < 0.0 || self.background.max > 255.0 {
            return fail(format!("background range {:?} must lie in [0, 255]", self.background));
        }
        Ok(())
    }

    pub fn labeled_count(&self) -> usize {
        self.count - (self.count as f64 * self.pose_only_fraction).round() as usize
    }
}

/// One rendered figure with the geometry it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub pose: Pose,
    /// Capsule width of each part, indexed by part id.
    pub part_widths: Vec<f64>,
    pub segmentation: PartSegmentation,
    pub image: RgbImage,
}

fn rotate(v: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn sample_skeleton(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<f64>) {
    use human::*;
    let unit = f64::from(cfg.width.min(cfg.height)) / REFERENCE_SIDE * cfg.scale.sample(rng);
    let len = |s: Span, rng: &mut ChaCha8Rng| s.sample(rng) * unit;
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let pelvis = Point::new(
        w / 2.0 + rng.random_range(-4.0..=4.0) * unit,
        h * 0.55 + rng.random_range(-4.0..=4.0) * unit,
    );
    let lean = cfg.lean.sample(rng);
    let up = Point::new(lean.sin(), -lean.cos());
    let left = Point::new(lean.cos(), lean.sin());
    let down = up * -1.0;

    let torso = len(cfg.torso_length, rng);
    let neck = pelvis + up * torso;
    let thorax = pelvis + up * (0.85 * torso);
    let head_top = neck + rotate(up, cfg.head_tilt.sample(rng)) * len(cfg.head_length, rng);

    let mut j = vec![Point::new(0.0, 0.0); 16];
    j[PELVIS] = pelvis;
    j[THORAX] = thorax;
    j[UPPER_NECK] = neck;
    j[HEAD_TOP] = head_top;

    // side = +1 for the figure's left (image +x at zero lean), -1 for its right.
    let limb = |base: Point, side: f64, a: Span, bend: Span, l1: Span, l2: Span, rng: &mut ChaCha8Rng| {
        let a1 = a.sample(rng);
        let a2 = a1 + bend.sample(rng);
        let d1 = down * a1.cos() + left * (side * a1.sin());
        let d2 = down * a2.cos() + left * (side * a2.sin());
        let mid = base + d1 * len(l1, rng);
        let end = mid + d2 * len(l2, rng);
        (mid, end)
    };
    for (side, shoulder, elbow, wrist) in [(1.0, L_SHOULDER, L_ELBOW, L_WRIST), (-1.0, R_SHOULDER, R_ELBOW, R_WRIST)] {
        j[shoulder] = thorax + left * (side * len(cfg.shoulder_offset, rng));
        let (e, wr) = limb(j[shoulder], side, cfg.upper_arm_angle, cfg.elbow_angle, cfg.upper_arm_length, cfg.lower_arm_length, rng);
        j[elbow] = e;
        j[wrist] = wr;
    }
    let hip_offset = len(cfg.hip_offset, rng);
    for (side, hip, knee, ankle) in [(1.0, L_HIP, L_KNEE, L_ANKLE), (-1.0, R_HIP, R_KNEE, R_ANKLE)] {
        j[hip] = pelvis + left * (side * hip_offset);
        let (k, an) = limb(j[hip], side, cfg.upper_leg_angle, cfg.knee_angle, cfg.upper_leg_length, cfg.lower_leg_length, rng);
        j[knee] = k;
        j[ankle] = an;
    }

    let torso_w = len(cfg.torso_width, rng);
    let head_w = len(cfg.head_width, rng);
    let arm_w = len(cfg.arm_width, rng);
    let leg_w = len(cfg.leg_width, rng);
    let widths = vec![
        head_w,
        torso_w,
        arm_w,
        arm_w,
        arm_w * cfg.lower_limb_taper,
        arm_w * cfg.lower_limb_taper,
        leg_w,
        leg_w,
        leg_w * cfg.lower_limb_taper,
        leg_w * cfg.lower_limb_taper,
    ];
    (j, widths)
}

fn fits(topology: &SkeletonTopology, pose: &Pose, widths: &[f64], w: u32, h: u32) -> bool {
    topology.parts().iter().zip(widths).all(|(part, &width)| {
        let Some((a, b)) = part.segment(pose) else { return false };
        let r = width / 2.0 + 1.0;
        [a, b].iter().all(|p| p.x - r >= 0.0 && p.y - r >= 0.0 && p.x + r <= f64::from(w - 1) && p.y + r <= f64::from(h - 1))
    })
}

fn render(topology: &SkeletonTopology, pose: &Pose, widths: &[f64], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<(PartSegmentation, RgbImage)> {
    let (w, h) = (cfg.width, cfg.height);
    let mut index = vec![0u8; w as usize * h as usize];
    for &p in &Z_ORDER {
        let (a, b) = topology.parts()[p].segment(pose).expect("all joints visible");
        for_each_capsule_pixel(a, b, widths[p], w, h, |x, y| {
            index[y as usize * w as usize + x as usize] = p as u8 + 1;
        });
    }
    let bg = cfg.background.sample(rng);
    let jitter = cfg.color_jitter;
    let colors: Vec<[f64; 3]> = (0..topology.part_count())
        .map(|p| part_color(p).map(|c| f64::from(c) + if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 }))
        .collect();
    let noise = cfg.noise;
    let mut image = RgbImage::new(w, h);
    for (i, px) in image.pixels_mut().enumerate() {
        let base = match index[i] {
            0 => [bg; 3],
            v => colors[v as usize - 1],
        };
        *px = Rgb(base.map(|c| {
            let n = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
            (c + n).round().clamp(0.0, 255.0) as u8
        }));
    }
    Ok((PartSegmentation::from_index_map(w, h, &index, topology.part_count())?, image))
}

/// Draws figure `index` of the sequence defined by `cfg.seed`. Each figure has
/// its own random stream, so figures can be generated independently.
pub fn sample_figure(cfg: &SynthConfig, index: usize) -> Result<Figure> {
    cfg.validate()?;
    let topology = SkeletonTopology::human();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    for _ in 0..MAX_ATTEMPTS {
        let (points, part_widths) = sample_skeleton(cfg, &mut rng);
        let pose = Pose::new(points.iter().map(|p| Joint::visible(p.x, p.y)).collect())?;
        if !fits(&topology, &pose, &part_widths, cfg.width, cfg.height) {
            continue;
        }
        let (segmentation, image) = render(&topology, &pose, &part_widths, cfg, &mut rng)?;
        return Ok(Figure {
            pose,
            part_widths,
            segmentation,
            image,
        });
    }
    Err(Error::InvalidConfig(format!(
        "figure {index} did not fit in {}x{} after {MAX_ATTEMPTS} attempts",
        cfg.width, cfg.height
    )))
}

pub fn figure_id(index: usize) -> String {
    format!("fig_{index:05}")
}

/// Generates `cfg.count` figures; the first [`SynthConfig::labeled_count`]
/// are labeled, the rest are pose-only with their ground truth kept aside.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let figures = (0..cfg.count)
        .into_par_iter()
        .map(|i| sample_figure(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let labeled_count = cfg.labeled_count();
    let mut ds = Dataset {
        topology: SkeletonTopology::human(),
        labeled: Vec::with_capacity(labeled_count),
        pose_only: Vec::with_capacity(cfg.count - labeled_count),
    };
    for (i, f) in figures.into_iter().enumerate() {
        if i < labeled_count {
            ds.labeled.push(LabeledExample {
                id: figure_id(i),
                image: f.image,
                pose: f.pose,
                segmentation: f.segmentation,
            });
        } else {
            ds.pose_only.push(PoseOnlyExample {
                id: figure_id(i),
                image: f.image,
                pose: f.pose,
                truth: Some(f.segmentation),
            });
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::normalize_pose;

    fn small(count: usize) -> SynthConfig {
        SynthConfig {
            count,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_synthetic(&small(12)).unwrap();
        let b = generate_synthetic(&small(12)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 8, ..small(12) }).unwrap();
        assert_ne!(a.labeled[0].pose, c.labeled[0].pose);
    }

    #[test]
    fn split_sizes() {
        let ds = generate_synthetic(&small(250)).unwrap();
        assert_eq!(ds.labeled.len(), 200);
        assert_eq!(ds.pose_only.len(), 50);
        assert_eq!(ds.pose_only[0].id, "fig_00200");
        assert!(ds.pose_only.iter().all(|e| e.truth.is_some()));
        ds.validate().unwrap();
    }

    #[test]
    fn noiseless_colors_identify_parts() {
        let cfg = SynthConfig {
            count: 1,
            noise: 0.0,
            ..SynthConfig::default()
        };
        let f = sample_figure(&cfg, 0).unwrap();
        let labels = f.segmentation.to_index_map();
        let mut color_of = std::collections::HashMap::new();
        for (px, &l) in f.image.pixels().zip(&labels) {
            let prev = color_of.entry(l).or_insert(px.0);
            assert_eq!(*prev, px.0, "label {l} has two colors");
        }
        let distinct: std::collections::HashSet<_> = color_of.values().collect();
        assert_eq!(distinct.len(), color_of.len());
        assert_eq!(color_of.len(), 11);
    }

    #[test]
    fn every_figure_normalizes() {
        let t = SkeletonTopology::human();
        let cfg = small(250);
        for i in 0..cfg.count {
            let f = sample_figure(&cfg, i).unwrap();
            let n = normalize_pose(&f.pose, &t).unwrap();
            let j = n.joints();
            let mid = j[human::L_HIP].point().midpoint(j[human::R_HIP].point());
            assert!(mid.norm() < 1e-9);
            assert!((j[human::UPPER_NECK].point().distance(mid) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn part_centroids_sit_near_their_segments() {
        let t = SkeletonTopology::human();
        let cfg = small(250);
        for i in 0..cfg.count {
            let f = sample_figure(&cfg, i).unwrap();
            for (p, part) in t.parts().iter().enumerate() {
                let (a, b) = part.segment(&f.pose).unwrap();
                let c = f.segmentation.mask(p).centroid().expect("part is drawn");
                let d = c.distance(a.midpoint(b));
                assert!(d <= f.part_widths[p] / 2.0, "figure {i} part {}: centroid off by {d}", part.name);
            }
        }
    }

    #[test]
    fn bad_configs() {
        let bad = [
            SynthConfig { width: 16, ..small(1) },
            SynthConfig { count: 0, ..small(1) },
            SynthConfig { pose_only_fraction: 1.5, ..small(1) },
            SynthConfig { elbow_angle: Span::new(0.0, 4.0), ..small(1) },
            SynthConfig { arm_width: Span::new(0.5, 2.0), ..small(1) },
            SynthConfig { torso_length: Span::new(5.0, 1.0), ..small(1) },
        ];
        for c in bad {
            assert!(matches!(generate_synthetic(&c), Err(Error::InvalidConfig(_))), "{c:?}");
        }
        let huge = SynthConfig {
            torso_length: Span::new(80.0, 90.0),
            ..small(1)
        };
        assert!(matches!(generate_synthetic(&huge), Err(Error::InvalidConfig(_))));
    }
}
