//! Skeleton topologies: joint names, body parts and their driving segments,
//! and the left/right merge groups used for evaluation.
//!
//! Topologies are loaded from a JSON document:
//!
//! ```json
//! {
//!   "name": "human16",
//!   "joints": ["r_ankle", "r_knee", "..."],
//!   "torso": { "neck": "upper_neck", "left_hip": "l_hip", "right_hip": "r_hip" },
//!   "merge_groups": ["head", "torso", "..."],
//!   "parts": [
//!     { "name": "head", "from": "head_top", "to": "upper_neck", "group": "head" },
//!     { "name": "torso", "from": "upper_neck", "to": { "midpoint": ["l_hip", "r_hip"] }, "group": "torso" }
//!   ],
//!   "sticks": [["r_ankle", "r_knee"]]
//! }
//! ```
//!
//! A part endpoint is either a joint name or the midpoint of two joints.
//! The part id is its position in `parts`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::pose::Pose;

/// One end of a part's driving segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Joint(usize),
    Midpoint(usize, usize),
}

impl Anchor {
    /// Resolves the anchor against a pose; `None` if any joint it uses is invisible.
    pub fn locate(&self, pose: &Pose) -> Option<Point> {
        match *self {
            Anchor::Joint(j) => pose.visible_point(j),
            Anchor::Midpoint(a, b) => Some(pose.visible_point(a)?.midpoint(pose.visible_point(b)?)),
        }
    }

    fn joints(&self) -> [usize; 2] {
        match *self {
            Anchor::Joint(j) => [j, j],
            Anchor::Midpoint(a, b) => [a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartSpec {
    pub name: String,
    pub from: Anchor,
    pub to: Anchor,
    pub merge_group: usize,
}

impl PartSpec {
    /// The part's segment in `pose`, if both endpoints are visible.
    pub fn segment(&self, pose: &Pose) -> Option<(Point, Point)> {
        Some((self.from.locate(pose)?, self.to.locate(pose)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorsoJoints {
    pub neck: usize,
    pub left_hip: usize,
    pub right_hip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    name: String,
    joint_names: Vec<String>,
    parts: Vec<PartSpec>,
    merge_groups: Vec<String>,
    torso: TorsoJoints,
    sticks: Vec<(usize, usize)>,
}

impl SkeletonTopology {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[PartSpec] {
        &self.parts
    }

    pub fn part_names(&self) -> Vec<String> {
        self.parts.iter().map(|p| p.name.clone()).collect()
    }

    pub fn merge_group_count(&self) -> usize {
        self.merge_groups.len()
    }

    pub fn merge_group_names(&self) -> &[String] {
        &self.merge_groups
    }

    pub fn torso(&self) -> TorsoJoints {
        self.torso
    }

    pub fn sticks(&self) -> &[(usize, usize)] {
        &self.sticks
    }

    /// Part id to merged class id.
    pub fn merge_map(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.merge_group).collect()
    }

    /// Built-in 16-joint human skeleton (MPII joint order) with 10 parts
    /// merged into 6 classes.
    pub fn human() -> Self {
        Self::from_json_str(HUMAN_JSON).expect("built-in human topology is valid")
    }

    /// Built-in quadruped skeleton, mainly for demonstrating custom topologies.
    pub fn quadruped() -> Self {
        Self::from_json_str(QUADRUPED_JSON).expect("built-in quadruped topology is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: TopologyConfig = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<topology>".into(),
            source: e,
        })?;
        Self::from_config(&config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading topology {}", path.display()), e))?;
        let config: TopologyConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_config(&config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_config()).expect("topology serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(format!("writing topology {}", path.display()), e))
    }

    pub fn from_config(config: &TopologyConfig) -> Result<Self> {
        let bad = |m: String| Error::InvalidTopology(m);
        if config.joints.is_empty() {
            return Err(bad("no joints".into()));
        }
        let mut index = HashMap::new();
        for (i, name) in config.joints.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(bad(format!("duplicate joint `{name}`")));
            }
        }
        let joint = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| bad(format!("unknown joint `{name}`")))
        };
        let anchor = |a: &AnchorConfig| -> Result<Anchor> {
            Ok(match a {
                AnchorConfig::Joint(n) => Anchor::Joint(joint(n)?),
                AnchorConfig::Midpoint { midpoint: [a, b] } => Anchor::Midpoint(joint(a)?, joint(b)?),
            })
        };
        let group_index: HashMap<&str, usize> = config
            .merge_groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        if group_index.len() != config.merge_groups.len() {
            return Err(bad("duplicate merge group".into()));
        }
        if config.parts.is_empty() {
            return Err(bad("no parts".into()));
        }
        let mut parts = Vec::with_capacity(config.parts.len());
        for p in &config.parts {
            let merge_group = *group_index
                .get(p.group.as_str())
                .ok_or_else(|| bad(format!("part `{}` uses unknown group `{}`", p.name, p.group)))?;
            parts.push(PartSpec {
                name: p.name.clone(),
                from: anchor(&p.from)?,
                to: anchor(&p.to)?,
                merge_group,
            });
        }
        for g in 0..config.merge_groups.len() {
            if !parts.iter().any(|p| p.merge_group == g) {
                return Err(bad(format!("merge group `{}` has no parts", config.merge_groups[g])));
            }
        }
        let torso = TorsoJoints {
            neck: joint(&config.torso.neck)?,
            left_hip: joint(&config.torso.left_hip)?,
            right_hip: joint(&config.torso.right_hip)?,
        };
        let sticks = config
            .sticks
            .iter()
            .map(|[a, b]| Ok((joint(a)?, joint(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let topo = SkeletonTopology {
            name: config.name.clone(),
            joint_names: config.joints.clone(),
            parts,
            merge_groups: config.merge_groups.clone(),
            torso,
            sticks,
        };
        debug_assert!(topo
            .parts
            .iter()
            .flat_map(|p| p.from.joints().into_iter().chain(p.to.joints()))
            .all(|j| j < topo.joint_count()));
        Ok(topo)
    }

    pub fn to_config(&self) -> TopologyConfig {
        let name = |j: usize| self.joint_names[j].clone();
        let anchor = |a: &Anchor| match *a {
            Anchor::Joint(j) => AnchorConfig::Joint(name(j)),
            Anchor::Midpoint(a, b) => AnchorConfig::Midpoint {
                midpoint: [name(a), name(b)],
            },
        };
        TopologyConfig {
            name: self.name.clone(),
            joints: self.joint_names.clone(),
            torso: TorsoConfig {
                neck: name(self.torso.neck),
                left_hip: name(self.torso.left_hip),
                right_hip: name(self.torso.right_hip),
            },
            merge_groups: self.merge_groups.clone(),
            parts: self
                .parts
                .iter()
                .map(|p| PartConfig {
                    name: p.name.clone(),
                    from: anchor(&p.from),
                    to: anchor(&p.to),
                    group: self.merge_groups[p.merge_group].clone(),
                })
                .collect(),
            sticks: self.sticks.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub name: String,
    pub joints: Vec<String>,
    pub torso: TorsoConfig,
    pub merge_groups: Vec<String>,
    pub parts: Vec<PartConfig>,
    #[serde(default)]
    pub sticks: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsoConfig {
    pub neck: String,
    pub left_hip: String,
    pub right_hip: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartConfig {
    pub name: String,
    pub from: AnchorConfig,
    pub to: AnchorConfig,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorConfig {
    Joint(String),
    Midpoint { midpoint: [String; 2] },
}

const HUMAN_JSON: &str = include_str!("../topologies/human16.json");
const QUADRUPED_JSON: &str = include_str!("../topologies/quadruped.json");

/// Joint indices of the built-in human topology.
pub mod human {
    pub const R_ANKLE: usize = 0;
    pub const R_KNEE: usize = 1;
    pub const R_HIP: usize = 2;
    pub const L_HIP: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const L_ANKLE: usize = 5;
    pub const PELVIS: usize = 6;
    pub const THORAX: usize = 7;
    pub const UPPER_NECK: usize = 8;
    pub const HEAD_TOP: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const R_ELBOW: usize = 11;
    pub const R_SHOULDER: usize = 12;
    pub const L_SHOULDER: usize = 13;
    pub const L_ELBOW: usize = 14;
    pub const L_WRIST: usize = 15;

    pub const HEAD: usize = 0;
    pub const TORSO: usize = 1;
    pub const L_UPPER_ARM: usize = 2;
    pub const R_UPPER_ARM: usize = 3;
    pub const L_LOWER_ARM: usize = 4;
    pub const R_LOWER_ARM: usize = 5;
    pub const L_UPPER_LEG: usize = 6;
    pub const R_UPPER_LEG: usize = 7;
    pub const L_LOWER_LEG: usize = 8;
    pub const R_LOWER_LEG: usize = 9;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_has_ten_parts_six_groups() {
        let t = SkeletonTopology::human();
        assert_eq!(t.joint_count(), 16);
        assert_eq!(t.part_count(), 10);
        assert_eq!(t.merge_group_count(), 6);
        assert_eq!(t.joint_index("l_wrist"), Some(human::L_WRIST));
        assert_eq!(t.parts()[human::L_LOWER_ARM].name, "l_lower_arm");
        assert_eq!(t.parts()[human::TORSO].to, Anchor::Midpoint(human::L_HIP, human::R_HIP));
        assert_eq!(t.torso().neck, human::UPPER_NECK);
    }

    #[test]
    fn config_round_trip() {
        for t in [SkeletonTopology::human(), SkeletonTopology::quadruped()] {
            let json = serde_json::to_string(&t.to_config()).unwrap();
            assert_eq!(SkeletonTopology::from_json_str(&json).unwrap(), t);
        }
    }

    #[test]
    fn rejects_unknown_joint_and_empty_group() {
        let mut c = SkeletonTopology::human().to_config();
        c.parts[0].from = AnchorConfig::Joint("nose".into());
        assert!(matches!(SkeletonTopology::from_config(&c), Err(Error::InvalidTopology(_))));

        let mut c = SkeletonTopology::human().to_config();
        c.merge_groups.push("tail".into());
        assert!(matches!(SkeletonTopology::from_config(&c), Err(Error::InvalidTopology(_))));
    }
}
