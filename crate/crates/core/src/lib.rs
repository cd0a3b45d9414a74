//! Dense body-part priors from sparse keypoints.
//!
//! Given a small set of images with part masks and keypoints, and a larger
//! set with keypoints only, this crate finds pose-similar labeled examples
//! for every keypoint-only target, morphs their part masks onto the target
//! pose one part at a time, and averages the results into a part-level
//! prior. Priors can be refined with image evidence, turned into label maps,
//! and scored by mean intersection-over-union.
//!
//! ```
//! use partprior::{synth, prior, refiner, search, pose, topology::SkeletonTopology};
//!
//! let ds = synth::generate_synthetic(&synth::SynthConfig { count: 12, ..Default::default() })?;
//! let topo = SkeletonTopology::human();
//! let (index, _) = search::build_index(
//!     ds.labeled.iter().map(|e| (e.id.clone(), e.pose.clone())),
//!     &topo,
//! )?;
//! let target = &ds.pose_only[0];
//! let hits = index.query_topk(&pose::normalize_pose(&target.pose, &topo)?, 3, None)?;
//! let cluster: Vec<_> = hits
//!     .iter()
//!     .map(|h| {
//!         let e = ds.labeled_by_id(&h.id).unwrap();
//!         (&e.pose, &e.segmentation)
//!     })
//!     .collect();
//! let (p, _) = prior::build_prior(&target.pose, target.image.dimensions(), &cluster, &topo)?;
//! let merged = prior::add_background(&prior::merge_left_right(&p, &topo)?)?;
//! let labels = refiner::refine_argmax(&merged)?;
//! assert_eq!(labels.classes(), 7);
//! # Ok::<(), partprior::Error>(())
//! ```

pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod morph;
pub mod palette;
pub mod pipeline;
pub mod pose;
pub mod prior;
pub mod refiner;
pub mod search;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};
