//! Part-level priors: averaged morphed segmentations of a pose-similar
//! cluster, left/right merging, the background channel, and the
//! skeleton-stick baseline.
//!
//! # Container format
//!
//! Priors are stored as a little-endian binary file:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PPRI`                            |
//! | 4      | 1    | version (1)                             |
//! | 5      | 1    | flags; bit 0 set = last channel is background |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 4    | width (u32)                             |
//! | 12     | 4    | height (u32)                            |
//! | 16     | 4    | channel count `c` (u32)                 |
//! | 20     | ...  | `c` names: u16 byte length then UTF-8   |
//! | ...    | ...  | `c` planes of `width * height` f32, row-major |

use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::for_each_capsule_pixel;
use crate::mask::{LabelMap, PartSegmentation};
use crate::morph::{morph_part_segmentation, MorphReport};
use crate::palette::part_color;
use crate::pose::Pose;
use crate::topology::SkeletonTopology;

pub const DEFAULT_STICK_WIDTH: f64 = 7.0;
pub const BACKGROUND: &str = "background";

const MAGIC: &[u8; 4] = b"PPRI";
const VERSION: u8 = 1;

/// Per-channel probability maps in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartPrior {
    width: u32,
    height: u32,
    names: Vec<String>,
    channels: Vec<Vec<f32>>,
    has_background: bool,
}

impl PartPrior {
    pub fn zeros(width: u32, height: u32, names: Vec<String>) -> Self {
        let n = width as usize * height as usize;
        PartPrior {
            width,
            height,
            channels: vec![vec![0.0; n]; names.len()],
            names,
            has_background: false,
        }
    }

    /// Builds a prior from raw planes. Values must lie in `[0, 1]`.
    pub fn from_channels(
        width: u32,
        height: u32,
        names: Vec<String>,
        channels: Vec<Vec<f32>>,
        has_background: bool,
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if names.len() != channels.len() || channels.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "{} names and {} planes for a {width}x{height} prior",
                names.len(),
                channels.len()
            )));
        }
        if has_background && channels.is_empty() {
            return Err(Error::ShapeMismatch("background flag on an empty prior".into()));
        }
        if channels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch("prior value outside [0, 1]".into()));
        }
        Ok(PartPrior {
            width,
            height,
            names,
            channels,
            has_background,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn has_background(&self) -> bool {
        self.has_background
    }

    /// Channels excluding the background.
    pub fn foreground_count(&self) -> usize {
        self.channels.len() - usize::from(self.has_background)
    }

    pub fn get(&self, c: usize, x: u32, y: u32) -> f32 {
        self.channels[c][y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Binary prior with one channel per part.
    pub fn from_segmentation(seg: &PartSegmentation, names: Vec<String>) -> Result<Self> {
        if names.len() != seg.part_count() {
            return Err(Error::ShapeMismatch("one name per part required".into()));
        }
        let channels = seg
            .masks()
            .iter()
            .map(|m| m.values().iter().map(|&v| f32::from(v)).collect())
            .collect();
        Self::from_channels(seg.width(), seg.height(), names, channels, false)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, u8::from(self.has_background), 0, 0])?;
        for v in [self.width, self.height, self.channels.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for name in &self.names {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        let mut buf = Vec::with_capacity(self.pixel_count() * 4);
        for plane in &self.channels {
            buf.clear();
            for v in plane {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read, path: &Path) -> Result<Self> {
        let bad = |message: &str| Error::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let io = |e| Error::io(format!("reading prior {}", path.display()), e);
        let mut header = [0u8; 20];
        r.read_exact(&mut header).map_err(io)?;
        if &header[0..4] != MAGIC {
            return Err(bad("not a prior container"));
        }
        if header[4] != VERSION {
            return Err(bad("unsupported prior container version"));
        }
        let has_background = header[5] & 1 == 1;
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
        let (width, height, count) = (u32_at(8), u32_at(12), u32_at(16) as usize);
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len).map_err(io)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut name).map_err(io)?;
            names.push(String::from_utf8(name).map_err(|_| bad("channel name is not UTF-8"))?);
        }
        let n = width as usize * height as usize;
        let mut raw = vec![0u8; n * 4];
        let mut channels = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut raw).map_err(io)?;
            channels.push(
                raw.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect(),
            );
        }
        Self::from_channels(width, height, names, channels, has_background).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }

    /// Color composite for inspection: each foreground channel's color
    /// weighted by its value, saturating.
    pub fn composite(&self) -> RgbImage {
        let fg = self.foreground_count();
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let mut acc = [0f32; 3];
            for c in 0..fg {
                let v = self.get(c, x, y);
                let col = part_color(c);
                for k in 0..3 {
                    acc[k] += v * f32::from(col[k]);
                }
            }
            image::Rgb(acc.map(|a| a.round().clamp(0.0, 255.0) as u8))
        })
    }
}

/// Averages the cluster's segmentations after morphing each onto the target
/// pose. Every member counts in the denominator, including members whose
/// morph left a part empty. The result has one channel per part and no
/// background.
pub fn build_prior(
    target_pose: &Pose,
    target_dims: (u32, u32),
    cluster: &[(&Pose, &PartSegmentation)],
    topology: &SkeletonTopology,
) -> Result<(PartPrior, Vec<MorphReport>)> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let (w, h) = target_dims;
    let n = w as usize * h as usize;
    let parts = topology.part_count();
    let mut counts = vec![vec![0u32; n]; parts];
    let mut reports = Vec::with_capacity(cluster.len());
    for &(pose, seg) in cluster {
        let (morphed, report) = morph_part_segmentation(seg, pose, target_pose, topology, target_dims)?;
        for (count, mask) in counts.iter_mut().zip(morphed.masks()) {
            for (c, &v) in count.iter_mut().zip(mask.values()) {
                *c += u32::from(v);
            }
        }
        reports.push(report);
    }
    let k = cluster.len() as f32;
    let channels = counts
        .into_iter()
        .map(|c| c.into_iter().map(|v| v as f32 / k).collect())
        .collect();
    Ok((
        PartPrior::from_channels(w, h, topology.part_names(), channels, false)?,
        reports,
    ))
}

/// Max-pools the part channels of each merge group into one channel.
pub fn merge_left_right(prior: &PartPrior, topology: &SkeletonTopology) -> Result<PartPrior> {
    if prior.has_background || prior.channel_count() != topology.part_count() {
        return Err(Error::TopologyMismatch(format!(
            "prior has {} channels (background: {}), topology `{}` has {} parts",
            prior.channel_count(),
            prior.has_background,
            topology.name(),
            topology.part_count()
        )));
    }
    let n = prior.pixel_count();
    let mut merged = vec![vec![0f32; n]; topology.merge_group_count()];
    for (part, plane) in topology.parts().iter().zip(&prior.channels) {
        for (m, &v) in merged[part.merge_group].iter_mut().zip(plane) {
            *m = m.max(v);
        }
    }
    PartPrior::from_channels(
        prior.width,
        prior.height,
        topology.merge_group_names().to_vec(),
        merged,
        false,
    )
}

/// Appends `1 - max(foreground)` as a trailing background channel.
pub fn add_background(prior: &PartPrior) -> Result<PartPrior> {
    if prior.has_background {
        return Err(Error::ShapeMismatch("prior already has a background channel".into()));
    }
    let n = prior.pixel_count();
    let mut bg = vec![1f32; n];
    for plane in &prior.channels {
        for (b, &v) in bg.iter_mut().zip(plane) {
            *b = b.min(1.0 - v);
        }
    }
    for b in &mut bg {
        *b = b.clamp(0.0, 1.0);
    }
    let mut out = prior.clone();
    out.channels.push(bg);
    out.names.push(BACKGROUND.to_string());
    out.has_background = true;
    Ok(out)
}

/// Baseline prior: each part whose segment is visible becomes a binary
/// channel holding a stick of `stick_width` pixels (a capsule around the
/// segment). Overlapping sticks set every covering channel.
pub fn skeleton_label_map(
    pose: &Pose,
    topology: &SkeletonTopology,
    stick_width: f64,
    dims: (u32, u32),
) -> Result<PartPrior> {
    if !(stick_width >= 1.0) {
        return Err(Error::InvalidConfig(format!("stick width {stick_width} is below 1")));
    }
    pose.check_topology(topology)?;
    let (w, h) = dims;
    let mut channels = vec![vec![0f32; w as usize * h as usize]; topology.part_count()];
    for (plane, part) in channels.iter_mut().zip(topology.parts()) {
        if let Some((a, b)) = part.segment(pose) {
            for_each_capsule_pixel(a, b, stick_width, w, h, |x, y| {
                plane[y as usize * w as usize + x as usize] = 1.0;
            });
        }
    }
    PartPrior::from_channels(w, h, topology.part_names(), channels, false)
}

/// Per-pixel argmax over channels; ties go to the lowest channel index.
pub(crate) fn argmax_channels(channels: &[Vec<f32>], width: u32, height: u32) -> LabelMap {
    let n = width as usize * height as usize;
    let values = (0..n)
        .map(|i| {
            let mut best = 0usize;
            for c in 1..channels.len() {
                if channels[c][i] > channels[best][i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::from_raw(width, height, channels.len(), values)
}
