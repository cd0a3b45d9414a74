//! Pose-similar cluster retrieval over a labeled set.
//!
//! Results are defined by an exhaustive scan: the `k` entries with the
//! smallest finite [`pose_distance`](crate::pose::pose_distance), ascending,
//! ties broken by ascending example id. Fully visible entries are additionally
//! sorted by the x coordinate of their joint centroid; for a fully visible
//! query the mean joint distance is bounded below by the centroid distance,
//! which lets the scan stop early without changing the answer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pose::{normalize_pose, shared_mean_distance, NormalizedPose, Pose};
use crate::topology::SkeletonTopology;

pub const DEFAULT_CLUSTER_SIZE: usize = 3;
pub const DEFAULT_POOL_SIZE: usize = 5;

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    pose: NormalizedPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// An entry left out of the index because its pose could not be normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPose {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PoseIndex {
    entries: Vec<Entry>,
    joints: usize,
    /// (centroid x, entry) for fully visible entries, sorted by centroid x.
    by_centroid: Vec<(f64, usize)>,
    /// Entries with hidden joints; always scanned.
    partial: Vec<usize>,
}

fn centroid_x(pose: &NormalizedPose) -> f64 {
    pose.joints().iter().map(|j| j.x).sum::<f64>() / pose.len() as f64
}

pub fn build_index<I>(poses: I, topology: &SkeletonTopology) -> Result<(PoseIndex, Vec<SkippedPose>)>
where
    I: IntoIterator<Item = (String, Pose)>,
{
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (id, pose) in poses {
        match normalize_pose(&pose, topology) {
            Ok(pose) => entries.push(Entry { id, pose }),
            Err(e) => skipped.push(SkippedPose {
                id,
                reason: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut by_centroid = Vec::new();
    let mut partial = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.pose.is_fully_visible() {
            by_centroid.push((centroid_x(&e.pose), i));
        } else {
            partial.push(i);
        }
    }
    by_centroid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    skipped.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((
        PoseIndex {
            entries,
            joints: topology.joint_count(),
            by_centroid,
            partial,
        },
        skipped,
    ))
}

/// Keeps the best `k` candidates ordered by (distance, entry index).
struct TopK {
    k: usize,
    best: Vec<(f64, usize)>,
}

impl TopK {
    fn offer(&mut self, d: f64, i: usize) {
        if !d.is_finite() {
            return;
        }
        let key = (d, i);
        let before = |a: &(f64, usize), b: &(f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
        if self.best.len() == self.k && !before(&key, self.best.last().expect("k >= 1")) {
            return;
        }
        let pos = self.best.partition_point(|c| before(c, &key));
        self.best.insert(pos, key);
        self.best.truncate(self.k);
    }

    /// True when no candidate at distance >= `bound` can enter the list.
    fn closed_below(&self, bound: f64) -> bool {
        self.best.len() == self.k && {
            let worst = self.best.last().expect("k >= 1").0;
            bound > worst + 1e-9 * (1.0 + worst)
        }
    }
}

impl PoseIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&NormalizedPose> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i].pose)
    }

    /// The `k` nearest entries, skipping `exclude` if given.
    pub fn query_topk(&self, target: &NormalizedPose, k: usize, exclude: Option<&str>) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidConfig("cluster size must be at least 1".into()));
        }
        if target.len() != self.joints {
            return Err(Error::TopologyMismatch(format!(
                "query has {} joints, index has {}",
                target.len(),
                self.joints
            )));
        }
        let mut top = TopK {
            k,
            best: Vec::with_capacity(k + 1),
        };
        let skip = |i: usize| exclude.is_some_and(|x| self.entries[i].id == x);
        let score = |i: usize, top: &mut TopK| {
            if !skip(i) {
                top.offer(shared_mean_distance(target.joints(), self.entries[i].pose.joints()), i);
            }
        };

        if target.is_fully_visible() {
            for &i in &self.partial {
                score(i, &mut top);
            }
            let cx = centroid_x(target);
            let start = self.by_centroid.partition_point(|&(x, _)| x < cx);
            let (mut lo, mut hi) = (start, start);
            let (mut lo_open, mut hi_open) = (true, true);
            while lo_open || hi_open {
                if hi_open {
                    match self.by_centroid.get(hi) {
                        Some(&(x, i)) if !top.closed_below(x - cx) => {
                            score(i, &mut top);
                            hi += 1;
                        }
                        _ => hi_open = false,
                    }
                }
                if lo_open {
                    match lo.checked_sub(1).map(|l| self.by_centroid[l]) {
                        Some((x, i)) if !top.closed_below(cx - x) => {
                            score(i, &mut top);
                            lo -= 1;
                        }
                        _ => lo_open = false,
                    }
                }
            }
        } else {
            for i in 0..self.entries.len() {
                score(i, &mut top);
            }
        }

        if top.best.is_empty() {
            return Err(Error::NoComparablePose);
        }
        Ok(top
            .best
            .into_iter()
            .map(|(distance, i)| Neighbor {
                id: self.entries[i].id.clone(),
                distance,
            })
            .collect())
    }

    /// Uniformly samples `k` ids without replacement from the `n` nearest
    /// entries. The result keeps nearest-first order.
    pub fn sample_cluster(
        &self,
        target: &NormalizedPose,
        n: usize,
        k: usize,
        seed: u64,
        exclude: Option<&str>,
    ) -> Result<Vec<String>> {
        if k == 0 || k > n {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= cluster size <= pool size, got k={k}, n={n}"
            )));
        }
        let pool = self.query_topk(target, n, exclude)?;
        if pool.len() <= k {
            return Ok(pool.into_iter().map(|nb| nb.id).collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| pool[i].id.clone()).collect())
    }
}
