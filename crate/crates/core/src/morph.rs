//! Pose-guided morphing: per-part planar transforms estimated from matching
//! pose segments, and nearest-neighbor inverse warping of binary masks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mask::{PartMask, PartSegmentation};
use crate::pose::Pose;
use crate::topology::SkeletonTopology;

const DEGENERATE_SEGMENT: f64 = 1e-6;
const SINGULAR_DET: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-9;

/// `p' = A p + b` with `A = [[a11, a12], [a21, a22]]` and `b = (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartTransform {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl PartTransform {
    pub const IDENTITY: PartTransform = PartTransform {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        PartTransform { tx, ty, ..Self::IDENTITY }
    }

    /// Rotation by `angle` radians (counter-clockwise in x-right, y-up terms)
    /// and uniform `scale`, then translation.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        PartTransform {
            a11: scale * c,
            a12: -scale * s,
            a21: scale * s,
            a22: scale * c,
            tx,
            ty,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a11 * p.x + self.a12 * p.y + self.tx,
            self.a21 * p.x + self.a22 * p.y + self.ty,
        )
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn is_identity(&self) -> bool {
        (self.a11 - 1.0).abs() < IDENTITY_TOL
            && self.a12.abs() < IDENTITY_TOL
            && self.a21.abs() < IDENTITY_TOL
            && (self.a22 - 1.0).abs() < IDENTITY_TOL
            && self.tx.abs() < IDENTITY_TOL
            && self.ty.abs() < IDENTITY_TOL
    }

    /// `None` when `|det A| <= 1e-12`.
    pub fn inverse(&self) -> Option<PartTransform> {
        let det = self.det();
        if !(det.abs() > SINGULAR_DET) {
            return None;
        }
        let (i11, i12, i21, i22) = (self.a22 / det, -self.a12 / det, -self.a21 / det, self.a11 / det);
        Some(PartTransform {
            a11: i11,
            a12: i12,
            a21: i21,
            a22: i22,
            tx: -(i11 * self.tx + i12 * self.ty),
            ty: -(i21 * self.tx + i22 * self.ty),
        })
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &PartTransform) -> PartTransform {
        PartTransform {
            a11: next.a11 * self.a11 + next.a12 * self.a21,
            a12: next.a11 * self.a12 + next.a12 * self.a22,
            a21: next.a21 * self.a11 + next.a22 * self.a21,
            a22: next.a21 * self.a12 + next.a22 * self.a22,
            tx: next.a11 * self.tx + next.a12 * self.ty + next.tx,
            ty: next.a21 * self.tx + next.a22 * self.ty + next.ty,
        }
    }
}

/// The similarity transform taking segment `src` onto segment `dst`: `src.0`
/// maps to `dst.0` and `src.1` to `dst.1`. Two correspondences fix exactly
/// rotation, uniform scale and translation, so no reflection is ever
/// produced. A source shorter than 1e-6 yields the pure translation
/// `dst.0 - src.0`.
pub fn estimate_segment_transform(src: (Point, Point), dst: (Point, Point)) -> Result<PartTransform> {
    let (p1, p2) = src;
    let (q1, q2) = dst;
    if ![p1, p2, q1, q2].iter().all(|p| p.is_finite()) {
        return Err(Error::NonFiniteInput("segment endpoint"));
    }
    let u = p2 - p1;
    let v = q2 - q1;
    let len2 = u.dot(u);
    if len2.sqrt() < DEGENERATE_SEGMENT {
        return Ok(PartTransform::translation(q1.x - p1.x, q1.y - p1.y));
    }
    // Complex ratio v / u = (a + ib) gives A = [[a, -b], [b, a]].
    let a = (v.x * u.x + v.y * u.y) / len2;
    let b = (v.y * u.x - v.x * u.y) / len2;
    let t = PartTransform {
        a11: a,
        a12: -b,
        a21: b,
        a22: a,
        tx: 0.0,
        ty: 0.0,
    };
    let mapped = t.apply(p1);
    Ok(PartTransform {
        tx: q1.x - mapped.x,
        ty: q1.y - mapped.y,
        ..t
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpOutcome {
    Warped,
    Copied,
    /// The transform was singular; the output is empty.
    Degenerate,
}

/// Inverse-mapping warp with nearest-neighbor sampling: each output pixel
/// center `c` reads the source pixel nearest to `A^-1 (c - b)`. Samples
/// outside the source are background.
pub fn warp_mask(mask: &PartMask, t: &PartTransform, out_width: u32, out_height: u32) -> (PartMask, WarpOutcome) {
    let mut out = PartMask::empty(out_width, out_height);
    if t.is_identity() {
        let w = out_width.min(mask.width());
        let h = out_height.min(mask.height());
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    out.set(x, y, true);
                }
            }
        }
        return (out, WarpOutcome::Copied);
    }
    let inv = match t.inverse() {
        Some(inv) if inv.is_finite() => inv,
        _ => return (out, WarpOutcome::Degenerate),
    };
    if mask.is_empty() {
        return (out, WarpOutcome::Warped);
    }
    let (sw, sh) = (f64::from(mask.width()), f64::from(mask.height()));
    for y in 0..out_height {
        for x in 0..out_width {
            let s = inv.apply(Point::new(f64::from(x), f64::from(y)));
            let rx = (s.x + 0.5).floor();
            let ry = (s.y + 0.5).floor();
            if rx >= 0.0 && ry >= 0.0 && rx < sw && ry < sh && mask.get(rx as u32, ry as u32) {
                out.set(x, y, true);
            }
        }
    }
    (out, WarpOutcome::Warped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartOutcome {
    Morphed,
    /// A driving joint is hidden in the source or target pose.
    MissingJoints,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphReport {
    pub outcomes: Vec<PartOutcome>,
}

impl MorphReport {
    pub fn morphed(&self) -> usize {
        self.outcomes.iter().filter(|o| **o == PartOutcome::Morphed).count()
    }

    /// Part ids that produced an empty mask for lack of joints or a singular transform.
    pub fn failed_parts(&self) -> Vec<usize> {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| **o != PartOutcome::Morphed)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Morphs every part mask of `seg` from `src_pose`'s frame into `dst_pose`'s.
///
/// Each part is warped independently by the similarity transform between its
/// driving segment in the two (raw, un-normalized) poses. Parts whose segment
/// is not visible in both poses come out empty and are flagged in the report.
pub fn morph_part_segmentation(
    seg: &PartSegmentation,
    src_pose: &Pose,
    dst_pose: &Pose,
    topology: &SkeletonTopology,
    out_dims: (u32, u32),
) -> Result<(PartSegmentation, MorphReport)> {
    seg.check_topology(topology)?;
    src_pose.check_topology(topology)?;
    dst_pose.check_topology(topology)?;
    let (ow, oh) = out_dims;
    let results: Vec<Result<(PartMask, PartOutcome)>> = topology
        .parts()
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let (Some(src), Some(dst)) = (part.segment(src_pose), part.segment(dst_pose)) else {
                return Ok((PartMask::empty(ow, oh), PartOutcome::MissingJoints));
            };
            let t = estimate_segment_transform(src, dst)?;
            let (mask, outcome) = warp_mask(seg.mask(i), &t, ow, oh);
            let outcome = match outcome {
                WarpOutcome::Degenerate => PartOutcome::Degenerate,
                _ => PartOutcome::Morphed,
            };
            Ok((mask, outcome))
        })
        .collect();
    let mut masks = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        let (m, o) = r?;
        masks.push(m);
        outcomes.push(o);
    }
    Ok((PartSegmentation::from_masks(masks)?, MorphReport { outcomes }))
}
