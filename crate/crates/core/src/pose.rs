//! Keypoint poses, torso normalization and pose-to-pose distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::topology::SkeletonTopology;

/// Poses sharing fewer visible joints than this are incomparable.
pub const MIN_SHARED_JOINTS: usize = 4;

const MIN_TORSO_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Joint {
    pub const fn visible(x: f64, y: f64) -> Self {
        Joint { x, y, visible: true }
    }

    pub const fn hidden() -> Self {
        Joint {
            x: 0.0,
            y: 0.0,
            visible: false,
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Keypoints of one person in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    joints: Vec<Joint>,
}

impl Pose {
    /// Fails with `NonFiniteInput` if a visible joint has a non-finite coordinate.
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.iter().any(|j| j.visible && !j.point().is_finite()) {
            return Err(Error::NonFiniteInput("visible joint coordinate"));
        }
        Ok(Pose { joints })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(x, y)| Joint::visible(x, y)).collect())
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn visible_point(&self, j: usize) -> Option<Point> {
        self.joints.get(j).filter(|j| j.visible).map(Joint::point)
    }

    /// Returns a copy with joint `j` marked invisible.
    pub fn with_hidden(&self, j: usize) -> Pose {
        let mut p = self.clone();
        p.joints[j].visible = false;
        p
    }

    /// Applies `f` to every joint position, keeping visibility.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Result<Pose> {
        Pose::new(
            self.joints
                .iter()
                .map(|j| {
                    let p = f(j.point());
                    Joint {
                        x: p.x,
                        y: p.y,
                        visible: j.visible,
                    }
                })
                .collect(),
        )
    }

    pub fn check_topology(&self, topology: &SkeletonTopology) -> Result<()> {
        if self.len() != topology.joint_count() {
            return Err(Error::TopologyMismatch(format!(
                "pose has {} joints, topology `{}` has {}",
                self.len(),
                topology.name(),
                topology.joint_count()
            )));
        }
        Ok(())
    }
}

/// A pose translated so the hip midpoint is at the origin and scaled so the
/// torso (hip midpoint to neck) has unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPose {
    joints: Vec<Joint>,
}

impl NormalizedPose {
    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn is_fully_visible(&self) -> bool {
        self.joints.iter().all(|j| j.visible)
    }

    /// Reinterprets the normalized coordinates as a raw pose.
    pub fn to_pose(&self) -> Pose {
        Pose {
            joints: self.joints.clone(),
        }
    }
}

/// Hip midpoint, or the single visible hip.
fn hip_reference(pose: &Pose, topology: &SkeletonTopology) -> Option<Point> {
    let t = topology.torso();
    match (pose.visible_point(t.left_hip), pose.visible_point(t.right_hip)) {
        (Some(l), Some(r)) => Some(l.midpoint(r)),
        (Some(h), None) | (None, Some(h)) => Some(h),
        (None, None) => None,
    }
}

pub fn normalize_pose(pose: &Pose, topology: &SkeletonTopology) -> Result<NormalizedPose> {
    pose.check_topology(topology)?;
    let neck = pose
        .visible_point(topology.torso().neck)
        .ok_or(Error::MissingReferenceJoints)?;
    let origin = hip_reference(pose, topology).ok_or(Error::MissingReferenceJoints)?;
    let torso = neck.distance(origin);
    if !(torso >= MIN_TORSO_LENGTH) {
        return Err(Error::DegenerateTorso(torso));
    }
    let joints = pose
        .joints()
        .iter()
        .map(|j| {
            if j.visible {
                Joint::visible((j.x - origin.x) / torso, (j.y - origin.y) / torso)
            } else {
                Joint { visible: false, ..*j }
            }
        })
        .collect();
    Ok(NormalizedPose { joints })
}

/// Mean Euclidean distance over joints visible in both poses, or
/// `f64::INFINITY` when fewer than [`MIN_SHARED_JOINTS`] are shared.
pub fn pose_distance(a: &NormalizedPose, b: &NormalizedPose) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::TopologyMismatch(format!(
            "poses have {} and {} joints",
            a.len(),
            b.len()
        )));
    }
    Ok(shared_mean_distance(&a.joints, &b.joints))
}

pub(crate) fn shared_mean_distance(a: &[Joint], b: &[Joint]) -> f64 {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (ja, jb) in a.iter().zip(b) {
        if ja.visible && jb.visible {
            sum += (ja.x - jb.x).hypot(ja.y - jb.y);
            shared += 1;
        }
    }
    if shared < MIN_SHARED_JOINTS {
        f64::INFINITY
    } else {
        sum / shared as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::human::*;
    use proptest::prelude::*;

    fn topo() -> SkeletonTopology {
        SkeletonTopology::human()
    }

    fn stick_figure() -> Pose {
        let mut pts = vec![(0.0, 0.0); 16];
        pts[R_ANKLE] = (44.0, 100.0);
        pts[R_KNEE] = (45.0, 80.0);
        pts[R_HIP] = (45.0, 60.0);
        pts[L_HIP] = (55.0, 60.0);
        pts[L_KNEE] = (56.0, 80.0);
        pts[L_ANKLE] = (57.0, 100.0);
        pts[PELVIS] = (50.0, 60.0);
        pts[THORAX] = (50.0, 15.0);
        pts[UPPER_NECK] = (50.0, 10.0);
        pts[HEAD_TOP] = (50.0, 0.0);
        pts[R_WRIST] = (30.0, 50.0);
        pts[R_ELBOW] = (35.0, 33.0);
        pts[R_SHOULDER] = (42.0, 16.0);
        pts[L_SHOULDER] = (58.0, 16.0);
        pts[L_ELBOW] = (65.0, 33.0);
        pts[L_WRIST] = (70.0, 50.0);
        Pose::from_points(&pts).unwrap()
    }

    fn close(a: &NormalizedPose, b: &NormalizedPose, tol: f64) -> bool {
        a.joints().iter().zip(b.joints()).all(|(p, q)| {
            p.visible == q.visible && (!p.visible || ((p.x - q.x).abs() < tol && (p.y - q.y).abs() < tol))
        })
    }

    #[test]
    fn neck_and_hips_land_on_reference() {
        let n = normalize_pose(&stick_figure(), &topo()).unwrap();
        let neck = n.joints()[UPPER_NECK];
        assert!((neck.x - 0.0).abs() < 1e-12 && (neck.y + 1.0).abs() < 1e-12);
        let mid = n.joints()[L_HIP].point().midpoint(n.joints()[R_HIP].point());
        assert!(mid.norm() < 1e-12);
    }

    #[test]
    fn translation_and_scale_invariant() {
        let p = stick_figure();
        let base = normalize_pose(&p, &topo()).unwrap();
        let shifted = p.map_points(|q| q + Point::new(100.0, 100.0)).unwrap();
        assert!(close(&normalize_pose(&shifted, &topo()).unwrap(), &base, 1e-12));
        let c = Point::new(-7.0, 13.0);
        let scaled = p.map_points(|q| c + (q - c) * 3.0).unwrap();
        assert!(close(&normalize_pose(&scaled, &topo()).unwrap(), &base, 1e-12));
    }

    #[test]
    fn one_hip_is_enough() {
        let p = stick_figure().with_hidden(R_HIP);
        let n = normalize_pose(&p, &topo()).unwrap();
        assert!(n.joints()[L_HIP].point().norm() < 1e-12);
        assert!(!n.joints()[R_HIP].visible);
    }

    #[test]
    fn missing_reference_joints() {
        let p = stick_figure().with_hidden(UPPER_NECK);
        assert!(matches!(normalize_pose(&p, &topo()), Err(Error::MissingReferenceJoints)));
        let p = stick_figure().with_hidden(L_HIP).with_hidden(R_HIP);
        assert!(matches!(normalize_pose(&p, &topo()), Err(Error::MissingReferenceJoints)));
    }

    #[test]
    fn degenerate_torso() {
        let p = stick_figure()
            .map_points(|q| if q == Point::new(50.0, 10.0) { Point::new(50.0, 60.0) } else { q })
            .unwrap();
        assert!(matches!(normalize_pose(&p, &topo()), Err(Error::DegenerateTorso(_))));
    }

    #[test]
    fn wrong_joint_count() {
        let p = Pose::from_points(&[(0.0, 0.0); 5]).unwrap();
        assert!(matches!(normalize_pose(&p, &topo()), Err(Error::TopologyMismatch(_))));
    }

    #[test]
    fn rejects_non_finite_visible_joint() {
        assert!(Pose::from_points(&[(f64::NAN, 0.0)]).is_err());
        assert!(Pose::new(vec![Joint { x: f64::NAN, y: 0.0, visible: false }]).is_ok());
    }

    fn normalized(joints: Vec<Joint>) -> NormalizedPose {
        NormalizedPose { joints }
    }

    #[test]
    fn distance_hand_computed() {
        let a = normalized(vec![
            Joint::visible(0.0, 0.0),
            Joint::visible(1.0, 0.0),
            Joint::visible(0.0, 1.0),
            Joint::visible(1.0, 1.0),
        ]);
        let mut b = a.clone();
        b.joints[2] = Joint::visible(0.3, 1.4);
        assert_eq!(pose_distance(&a, &a).unwrap(), 0.0);
        assert!((pose_distance(&a, &b).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn distance_needs_four_shared_joints() {
        let a = normalized(vec![Joint::visible(0.0, 0.0); 5]);
        let mut b = a.clone();
        b.joints[0].visible = false;
        b.joints[1].visible = false;
        b.joints[2].visible = false;
        assert_eq!(pose_distance(&a, &b).unwrap(), f64::INFINITY);
        b.joints[1].visible = true;
        b.joints[2].visible = true;
        assert_eq!(pose_distance(&a, &b).unwrap(), 0.0);
        assert!(matches!(
            pose_distance(&a, &normalized(vec![Joint::visible(0.0, 0.0); 4])),
            Err(Error::TopologyMismatch(_))
        ));
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        prop::collection::vec((-200.0..200.0f64, -200.0..200.0f64, prop::bool::weighted(0.85)), 16)
            .prop_map(|v| {
                let mut joints: Vec<Joint> = v.into_iter().map(|(x, y, visible)| Joint { x, y, visible }).collect();
                joints[UPPER_NECK].visible = true;
                joints[L_HIP].visible = true;
                Pose::new(joints).unwrap()
            })
            .prop_filter("torso not degenerate", |p| normalize_pose(p, &SkeletonTopology::human()).is_ok())
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(p in arb_pose()) {
            let t = topo();
            let once = normalize_pose(&p, &t).unwrap();
            let twice = normalize_pose(&once.to_pose(), &t).unwrap();
            prop_assert!(close(&once, &twice, 1e-9));
        }

        #[test]
        fn distance_symmetric_and_similarity_invariant(
            a in arb_pose(),
            b in arb_pose(),
            dx in -500.0..500.0f64,
            dy in -500.0..500.0f64,
            s in 0.05..20.0f64,
        ) {
            let t = topo();
            let (na, nb) = (normalize_pose(&a, &t).unwrap(), normalize_pose(&b, &t).unwrap());
            let d = pose_distance(&na, &nb).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, pose_distance(&nb, &na).unwrap());
            let f = |q: Point| Point::new(q.x * s + dx, q.y * s + dy);
            let ta = normalize_pose(&a.map_points(f).unwrap(), &t).unwrap();
            let tb = normalize_pose(&b.map_points(f).unwrap(), &t).unwrap();
            let d2 = pose_distance(&ta, &tb).unwrap();
            if d.is_finite() {
                prop_assert!((d - d2).abs() < 1e-9);
            } else {
                prop_assert!(d2.is_infinite());
            }
            let self_d = pose_distance(&na, &na).unwrap();
            prop_assert!(self_d == 0.0 || self_d.is_infinite());
        }
    }
}
