//! Binary part masks, multi-part segmentations and integer label maps.
//!
//! Label maps use the channel order of priors: class `c < parts` is part `c`
//! and class `parts` is background.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::topology::SkeletonTopology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PartMask {
    pub fn empty(width: u32, height: u32) -> Self {
        PartMask {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a mask from row-major values, which must all be 0 or 1.
    pub fn from_values(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} mask",
                data.len()
            )));
        }
        if let Some(&v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::ShapeMismatch(format!("mask value {v} is not binary")));
        }
        Ok(PartMask { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
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

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[y as usize * self.width as usize + x as usize] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Mean pixel position of the foreground, `None` for an empty mask.
    pub fn centroid(&self) -> Option<Point> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += f64::from(x);
                    sy += f64::from(y);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
    }

    /// Number of pixels set in both masks.
    pub fn intersection(&self, other: &PartMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 && **b != 0)
            .count()
    }
}

/// One binary mask per body part, all sharing the image grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartSegmentation {
    width: u32,
    height: u32,
    masks: Vec<PartMask>,
}

impl PartSegmentation {
    pub fn empty(parts: usize, width: u32, height: u32) -> Self {
        PartSegmentation {
            width,
            height,
            masks: vec![PartMask::empty(width, height); parts],
        }
    }

    pub fn from_masks(masks: Vec<PartMask>) -> Result<Self> {
        let (width, height) = masks
            .first()
            .map(PartMask::dims)
            .ok_or_else(|| Error::ShapeMismatch("segmentation needs at least one mask".into()))?;
        if masks.iter().any(|m| m.dims() != (width, height)) {
            return Err(Error::ShapeMismatch("part masks differ in size".into()));
        }
        Ok(PartSegmentation { width, height, masks })
    }

    /// Decodes an index map where 0 is background and `i + 1` is part `i`.
    /// Values above `parts` are rejected.
    pub fn from_index_map(width: u32, height: u32, indices: &[u8], parts: usize) -> Result<Self> {
        if indices.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} indices for a {width}x{height} label map",
                indices.len()
            )));
        }
        let mut seg = Self::empty(parts, width, height);
        for (i, &v) in indices.iter().enumerate() {
            if v as usize > parts {
                return Err(Error::ClassOutOfRange {
                    class: v as usize,
                    classes: parts + 1,
                });
            }
            if v > 0 {
                seg.masks[v as usize - 1].data[i] = 1;
            }
        }
        Ok(seg)
    }

    /// Index map with 0 for background and `i + 1` for part `i`. Where masks
    /// overlap the lowest part id wins.
    pub fn to_index_map(&self) -> Vec<u8> {
        (0..self.pixel_count())
            .map(|i| {
                self.masks
                    .iter()
                    .position(|m| m.data[i] != 0)
                    .map_or(0, |p| (p + 1) as u8)
            })
            .collect()
    }

    /// Label map over parts plus a trailing background class.
    pub fn to_part_labels(&self) -> LabelMap {
        let bg = self.masks.len() as u8;
        let values = self
            .to_index_map()
            .into_iter()
            .map(|v| if v == 0 { bg } else { v - 1 })
            .collect();
        LabelMap::from_raw(self.width, self.height, self.masks.len() + 1, values)
    }

    /// Label map over the topology's merge groups plus a trailing background class.
    pub fn to_merged_labels(&self, topology: &SkeletonTopology) -> Result<LabelMap> {
        self.check_topology(topology)?;
        self.to_part_labels().merge_parts(topology)
    }

    pub fn check_topology(&self, topology: &SkeletonTopology) -> Result<()> {
        if self.masks.len() != topology.part_count() {
            return Err(Error::TopologyMismatch(format!(
                "segmentation has {} masks, topology `{}` has {} parts",
                self.masks.len(),
                topology.name(),
                topology.part_count()
            )));
        }
        Ok(())
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

    pub fn part_count(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[PartMask] {
        &self.masks
    }

    pub fn mask(&self, part: usize) -> &PartMask {
        &self.masks[part]
    }

    pub fn mask_mut(&mut self, part: usize) -> &mut PartMask {
        &mut self.masks[part]
    }

    fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Per-pixel class ids in `[0, classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    classes: usize,
    values: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, classes: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(&v) = values.iter().find(|&&v| v as usize >= classes) {
            return Err(Error::ClassOutOfRange {
                class: v as usize,
                classes,
            });
        }
        Ok(Self::from_raw(width, height, classes, values))
    }

    pub(crate) fn from_raw(width: u32, height: u32, classes: usize, values: Vec<u8>) -> Self {
        debug_assert!(values.iter().all(|&v| (v as usize) < classes));
        LabelMap {
            width,
            height,
            classes,
            values,
        }
    }

    pub fn filled(width: u32, height: u32, classes: usize, class: u8) -> Self {
        Self::from_raw(width, height, classes, vec![class; width as usize * height as usize])
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

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Maps a parts-plus-background label map onto merge groups plus background.
    pub fn merge_parts(&self, topology: &SkeletonTopology) -> Result<LabelMap> {
        let parts = topology.part_count();
        if self.classes != parts + 1 {
            return Err(Error::TopologyMismatch(format!(
                "label map has {} classes, expected {} parts plus background",
                self.classes, parts
            )));
        }
        let groups = topology.merge_group_count();
        let map = topology.merge_map();
        let values = self
            .values
            .iter()
            .map(|&v| if v as usize == parts { groups as u8 } else { map[v as usize] as u8 })
            .collect();
        Ok(Self::from_raw(self.width, self.height, groups + 1, values))
    }

    /// Inverse of [`PartSegmentation::to_part_labels`].
    pub fn to_segmentation(&self) -> PartSegmentation {
        let parts = self.classes - 1;
        let indices: Vec<u8> = self
            .values
            .iter()
            .map(|&v| if v as usize == parts { 0 } else { v + 1 })
            .collect();
        PartSegmentation::from_index_map(self.width, self.height, &indices, parts)
            .expect("labels are in range")
    }
}
