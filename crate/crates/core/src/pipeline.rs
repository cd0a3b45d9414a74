//! End-to-end steps shared by the command line and the acceptance suite:
//! priors for every target, refiner training data, transfer, and scoring.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::mask::{LabelMap, PartSegmentation};
use crate::metrics::{ConfusionMatrix, IouReport};
use crate::pose::{normalize_pose, Pose};
use crate::prior::{add_background, build_prior, merge_left_right, skeleton_label_map, PartPrior, BACKGROUND};
use crate::refiner::{apply_refiner, refine_argmax, train_refiner, RefinerModel, TrainingConfig, TrainingSample};
use crate::search::{build_index, PoseIndex, SkippedPose, DEFAULT_CLUSTER_SIZE, DEFAULT_POOL_SIZE};
use crate::topology::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    PartPrior,
    SkeletonMap,
    /// Part prior from the single nearest neighbor.
    NearestOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::PartPrior, Strategy::SkeletonMap, Strategy::NearestOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::PartPrior => "part-prior",
            Strategy::SkeletonMap => "skeleton-map",
            Strategy::NearestOnly => "nearest-only",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub strategy: Strategy,
    pub cluster_size: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub stick_width: f64,
    /// Drop the target's own entry from its cluster when it is in the index.
    pub exclude_self: bool,
    /// Draw the cluster at random from the `pool_size` nearest instead of
    /// taking the `cluster_size` nearest.
    pub sample: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            strategy: Strategy::PartPrior,
            cluster_size: DEFAULT_CLUSTER_SIZE,
            pool_size: DEFAULT_POOL_SIZE,
            seed: 0,
            stick_width: crate::prior::DEFAULT_STICK_WIDTH,
            exclude_self: true,
            sample: false,
        }
    }
}

impl PriorConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        PriorConfig {
            strategy,
            ..Self::default()
        }
    }

    pub fn effective_cluster_size(&self) -> usize {
        match self.strategy {
            Strategy::NearestOnly => 1,
            _ => self.cluster_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.effective_cluster_size();
        if k == 0 {
            return Err(Error::InvalidConfig("cluster size must be at least 1".into()));
        }
        if self.sample && k > self.pool_size {
            return Err(Error::InvalidConfig(format!(
                "cluster size {k} exceeds pool size {}",
                self.pool_size
            )));
        }
        if !(self.stick_width >= 1.0) {
            return Err(Error::InvalidConfig(format!("stick width {} is below 1", self.stick_width)));
        }
        Ok(())
    }
}

/// A prior for one target, with one channel per part plus background.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPrior {
    pub id: String,
    pub prior: PartPrior,
    /// Ids of the labeled examples that were morphed; empty for the skeleton map.
    pub cluster: Vec<String>,
}

/// Seed for item `i` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng.next_u64()
}

/// Pose index over a dataset's labeled examples.
pub struct PriorEngine<'a> {
    labeled: &'a [LabeledExample],
    topology: &'a SkeletonTopology,
    index: PoseIndex,
    skipped: Vec<SkippedPose>,
}

impl<'a> PriorEngine<'a> {
    pub fn new(dataset: &'a Dataset) -> Result<Self> {
        Self::from_parts(&dataset.labeled, &dataset.topology)
    }

    pub fn from_parts(labeled: &'a [LabeledExample], topology: &'a SkeletonTopology) -> Result<Self> {
        let (index, skipped) = build_index(labeled.iter().map(|e| (e.id.clone(), e.pose.clone())), topology)?;
        Ok(PriorEngine {
            labeled,
            topology,
            index,
            skipped,
        })
    }

    pub fn index(&self) -> &PoseIndex {
        &self.index
    }

    /// Labeled examples whose poses could not be normalized.
    pub fn skipped(&self) -> &[SkippedPose] {
        &self.skipped
    }

    fn labeled(&self, id: &str) -> &LabeledExample {
        let i = self
            .labeled
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .or_else(|| self.labeled.iter().position(|e| e.id == id))
            .expect("index ids come from the labeled set");
        &self.labeled[i]
    }

    /// Cluster ids for a target, nearest first.
    pub fn cluster(&self, id: &str, pose: &Pose, config: &PriorConfig, item: u64) -> Result<Vec<String>> {
        let target = normalize_pose(pose, self.topology)?;
        let exclude = config.exclude_self.then_some(id);
        let k = config.effective_cluster_size();
        if config.sample {
            self.index
                .sample_cluster(&target, config.pool_size, k, derive_seed(config.seed, item), exclude)
        } else {
            Ok(self.index.query_topk(&target, k, exclude)?.into_iter().map(|n| n.id).collect())
        }
    }

    /// Part prior (parts plus background) for one target.
    ///
    /// `item` picks the random stream when `config.sample` is set; pass the
    /// target's position in a stable ordering.
    pub fn prior_for(&self, id: &str, pose: &Pose, dims: (u32, u32), config: &PriorConfig, item: u64) -> Result<TargetPrior> {
        config.validate()?;
        let (raw, cluster) = match config.strategy {
            Strategy::SkeletonMap => (skeleton_label_map(pose, self.topology, config.stick_width, dims)?, Vec::new()),
            Strategy::PartPrior | Strategy::NearestOnly => {
                let ids = self.cluster(id, pose, config, item)?;
                let members: Vec<(&Pose, &PartSegmentation)> = ids
                    .iter()
                    .map(|m| {
                        let e = self.labeled(m);
                        (&e.pose, &e.segmentation)
                    })
                    .collect();
                (build_prior(pose, dims, &members, self.topology)?.0, ids)
            }
        };
        Ok(TargetPrior {
            id: id.to_string(),
            prior: add_background(&raw)?,
            cluster,
        })
    }

    /// Priors for every pose-only example, in dataset order. The first
    /// failing target aborts with its id attached.
    pub fn pose_only_priors(&self, dataset: &Dataset, config: &PriorConfig) -> Result<Vec<TargetPrior>> {
        dataset
            .pose_only
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                self.prior_for(&e.id, &e.pose, e.image.dimensions(), config, i as u64)
                    .map_err(|err| err.for_example(&e.id))
            })
            .collect()
    }

    /// Refiner training samples from the labeled set: each example gets a
    /// prior from a cluster that excludes itself, so its own mask never
    /// leaks into its input.
    pub fn training_samples(&self, config: &PriorConfig, working_size: (u32, u32)) -> Result<Vec<TrainingSample>> {
        let config = PriorConfig {
            exclude_self: true,
            ..*config
        };
        self.labeled
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let p = self
                    .prior_for(&e.id, &e.pose, e.image.dimensions(), &config, i as u64)
                    .map_err(|err| err.for_example(&e.id))?;
                Ok(TrainingSample {
                    image: resize_image(&e.image, working_size),
                    prior: resize_prior(&p.prior, working_size)?,
                    truth: resize_segmentation(&e.segmentation, working_size)?,
                })
            })
            .collect()
    }
}

fn nearest_source(dst: u32, src_len: u32, dst_len: u32) -> u32 {
    // Pixel centers at integer coordinates; map the destination center back.
    let s = ((f64::from(dst) + 0.5) * f64::from(src_len) / f64::from(dst_len)).floor() as u32;
    s.min(src_len - 1)
}

fn resample<T: Copy>(data: &[T], from: (u32, u32), to: (u32, u32)) -> Vec<T> {
    if from == to {
        return data.to_vec();
    }
    let xs: Vec<usize> = (0..to.0).map(|x| nearest_source(x, from.0, to.0) as usize).collect();
    let mut out = Vec::with_capacity(to.0 as usize * to.1 as usize);
    for y in 0..to.1 {
        let row = nearest_source(y, from.1, to.1) as usize * from.0 as usize;
        out.extend(xs.iter().map(|&x| data[row + x]));
    }
    out
}

pub fn resize_image(image: &RgbImage, size: (u32, u32)) -> RgbImage {
    if image.dimensions() == size {
        return image.clone();
    }
    let px: Vec<[u8; 3]> = image.pixels().map(|p| p.0).collect();
    let out = resample(&px, image.dimensions(), size);
    RgbImage::from_raw(size.0, size.1, out.concat()).expect("buffer sized for the image")
}

pub fn resize_prior(prior: &PartPrior, size: (u32, u32)) -> Result<PartPrior> {
    if prior.dims() == size {
        return Ok(prior.clone());
    }
    let channels = prior.channels().iter().map(|c| resample(c, prior.dims(), size)).collect();
    PartPrior::from_channels(size.0, size.1, prior.channel_names().to_vec(), channels, prior.has_background())
}

pub fn resize_labels(labels: &LabelMap, size: (u32, u32)) -> LabelMap {
    if labels.dims() == size {
        return labels.clone();
    }
    LabelMap::from_raw(size.0, size.1, labels.classes(), resample(labels.values(), labels.dims(), size))
}

pub fn resize_segmentation(seg: &PartSegmentation, size: (u32, u32)) -> Result<PartSegmentation> {
    if seg.dims() == size {
        return Ok(seg.clone());
    }
    let idx = resample(&seg.to_index_map(), seg.dims(), size);
    PartSegmentation::from_index_map(size.0, size.1, &idx, seg.part_count())
}

/// Trains a refiner on priors built for the labeled set.
pub fn train_on_dataset(
    dataset: &Dataset,
    prior: &PriorConfig,
    training: &TrainingConfig,
    working_size: (u32, u32),
) -> Result<RefinerModel> {
    let engine = PriorEngine::new(dataset)?;
    let samples = engine.training_samples(prior, working_size)?;
    let mut model = train_refiner(&samples, training)?;
    model.set_working_size(working_size);
    Ok(model)
}

/// Part label map (parts plus background) for one target at its own size.
/// Without a model this is the prior's argmax; with one, the image and
/// prior are resampled to the model's working size and the labels back.
pub fn label_target(model: Option<&RefinerModel>, image: &RgbImage, prior: &PartPrior) -> Result<LabelMap> {
    let Some(model) = model else {
        return refine_argmax(prior);
    };
    let size = model.meta().working_size;
    let (_, labels) = apply_refiner(model, &resize_image(image, size), &resize_prior(prior, size)?)?;
    Ok(resize_labels(&labels, prior.dims()))
}

/// Argmax of the left/right-merged prior with a fresh background channel.
pub fn merged_argmax(prior: &PartPrior, topology: &SkeletonTopology) -> Result<LabelMap> {
    let parts = part_channels(prior)?;
    refine_argmax(&add_background(&merge_left_right(&parts, topology)?)?)
}

/// The prior without its background channel.
pub fn part_channels(prior: &PartPrior) -> Result<PartPrior> {
    if !prior.has_background() {
        return Ok(prior.clone());
    }
    let n = prior.foreground_count();
    PartPrior::from_channels(
        prior.width(),
        prior.height(),
        prior.channel_names()[..n].to_vec(),
        prior.channels()[..n].to_vec(),
        false,
    )
}

pub fn merged_class_names(topology: &SkeletonTopology) -> Vec<String> {
    let mut names = topology.merge_group_names().to_vec();
    names.push(BACKGROUND.to_string());
    names
}

pub fn part_class_names(topology: &SkeletonTopology) -> Vec<String> {
    let mut names = topology.part_names();
    names.push(BACKGROUND.to_string());
    names
}

/// Pixel-aggregated scores of `(id, prediction, truth)` triples. Predictions
/// must already use the class layout of `names`.
pub fn score(names: Vec<String>, items: &[(String, LabelMap, LabelMap)]) -> Result<IouReport> {
    let classes = names.len();
    let cm = items
        .par_iter()
        .map(|(id, pred, truth)| {
            let mut cm = ConfusionMatrix::new(classes);
            cm.accumulate(pred, truth).map_err(|e| e.for_example(id))?;
            Ok(cm)
        })
        .try_reduce(
            || ConfusionMatrix::new(classes),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )?;
    IouReport::new(names, &cm, items.len())
}

/// Merged-class mIoU of a strategy's prior argmax on the pose-only examples
/// that carry ground truth.
pub fn evaluate_prior_argmax(dataset: &Dataset, config: &PriorConfig) -> Result<IouReport> {
    let engine = PriorEngine::new(dataset)?;
    let priors = engine.pose_only_priors(dataset, config)?;
    let items = held_out_pairs(dataset, &priors, |p| merged_argmax(&p.prior, &dataset.topology))?;
    score(merged_class_names(&dataset.topology), &items)
}

/// Pairs each prior's prediction with the merged ground truth of its target.
pub fn held_out_pairs(
    dataset: &Dataset,
    priors: &[TargetPrior],
    predict: impl Fn(&TargetPrior) -> Result<LabelMap> + Sync,
) -> Result<Vec<(String, LabelMap, LabelMap)>> {
    let truth: std::collections::HashMap<&str, &PartSegmentation> = dataset
        .pose_only
        .iter()
        .filter_map(|e| e.truth.as_ref().map(|t| (e.id.as_str(), t)))
        .collect();
    let items: Vec<_> = priors
        .par_iter()
        .filter_map(|p| truth.get(p.id.as_str()).map(|t| (p, *t)))
        .map(|(p, t)| {
            let pred = predict(p).map_err(|e| e.for_example(&p.id))?;
            Ok((p.id.clone(), pred, t.to_merged_labels(&dataset.topology)?))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(items)
}

/// One row of a strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub strategy: Strategy,
    pub cluster_size: Option<usize>,
    pub report: IouReport,
}

/// The skeleton-map baseline followed by the part prior at each cluster size.
pub fn strategy_sweep(dataset: &Dataset, cluster_sizes: &[usize], stick_width: f64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let skeleton = PriorConfig {
        stick_width,
        ..PriorConfig::with_strategy(Strategy::SkeletonMap)
    };
    rows.push(SweepRow {
        method: "skeleton label map".into(),
        strategy: Strategy::SkeletonMap,
        cluster_size: None,
        report: evaluate_prior_argmax(dataset, &skeleton)?,
    });
    for &k in cluster_sizes {
        let cfg = PriorConfig {
            cluster_size: k,
            ..PriorConfig::default()
        };
        rows.push(SweepRow {
            method: format!("part-level prior k={k}"),
            strategy: Strategy::PartPrior,
            cluster_size: Some(k),
            report: evaluate_prior_argmax(dataset, &cfg)?,
        });
    }
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let text = r.report.to_text(&r.method);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            out.push_str(header);
            out.push('\n');
        }
        for l in lines {
            out.push_str(l);
            out.push('\n');
        }
    }
    out
}
