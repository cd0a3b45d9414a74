//! On-disk datasets.
//!
//! ```text
//! root/
//!   manifest.json          example list (see `Manifest`)
//!   topology.json          skeleton topology; built-in human topology if absent
//!   images/<id>.png        RGB image
//!   keypoints/<id>.txt     one `name x y visible` line per joint
//!   labels/<id>.png        part label map (labeled examples)
//!   truth/<id>.png         held-out label map (pose-only examples, optional)
//! ```
//!
//! Label maps are 8-bit indexed PNGs: palette index 0 is background and
//! index `i + 1` is part `i`. Grayscale PNGs with the same value convention
//! are also accepted on load. Any other value is rejected.
//!
//! Keypoint files list joints by topology name, in any order; `#` starts a
//! comment. Joints that are not listed are treated as hidden.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::PartSegmentation;
use crate::palette::label_palette;
use crate::pose::{Joint, Pose};
use crate::topology::SkeletonTopology;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOPOLOGY_FILE: &str = "topology.json";
const FORMAT: &str = "partprior-dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub image: RgbImage,
    pub pose: Pose,
    pub segmentation: PartSegmentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseOnlyExample {
    pub id: String,
    pub image: RgbImage,
    pub pose: Pose,
    /// Ground truth kept aside for evaluation; never used to build priors.
    pub truth: Option<PartSegmentation>,
}

/// A mask-labeled set and a keypoint-only set sharing one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub topology: SkeletonTopology,
    pub labeled: Vec<LabeledExample>,
    pub pose_only: Vec<PoseOnlyExample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Labeled,
    PoseOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub image: String,
    pub keypoints: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    pub examples: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let u = self.topology.part_count();
        let check_seg = |id: &str, seg: &PartSegmentation, image: &RgbImage| -> Result<()> {
            seg.check_topology(&self.topology).map_err(|e| e.for_example(id))?;
            if seg.dims() != image.dimensions() {
                return Err(Error::ShapeMismatch(format!(
                    "segmentation is {:?}, image is {:?}",
                    seg.dims(),
                    image.dimensions()
                ))
                .for_example(id));
            }
            debug_assert_eq!(seg.part_count(), u);
            Ok(())
        };
        for e in &self.labeled {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::ShapeMismatch(format!("duplicate id `{}`", e.id)));
            }
            e.pose.check_topology(&self.topology).map_err(|x| x.for_example(&e.id))?;
            check_seg(&e.id, &e.segmentation, &e.image)?;
        }
        for e in &self.pose_only {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::ShapeMismatch(format!("duplicate id `{}`", e.id)));
            }
            e.pose.check_topology(&self.topology).map_err(|x| x.for_example(&e.id))?;
            if let Some(t) = &e.truth {
                check_seg(&e.id, t, &e.image)?;
            }
        }
        Ok(())
    }

    pub fn labeled_by_id(&self, id: &str) -> Option<&LabeledExample> {
        self.labeled.iter().find(|e| e.id == id)
    }
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("reading {}", path.display()), e)
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(read_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    fs::write(path, text + "\n").map_err(write_err(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

pub fn read_keypoints(path: &Path, topology: &SkeletonTopology) -> Result<Pose> {
    let text = fs::read_to_string(path).map_err(read_err(path))?;
    parse_keypoints(&text, topology, path)
}

pub fn parse_keypoints(text: &str, topology: &SkeletonTopology, path: &Path) -> Result<Pose> {
    let bad = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut joints = vec![Joint::hidden(); topology.joint_count()];
    let mut seen = vec![false; joints.len()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, x, y, vis] = fields[..] else {
            return Err(bad(n + 1, format!("expected `name x y visible`, got `{line}`")));
        };
        let j = topology.joint_index(name).ok_or_else(|| Error::UnknownJointName {
            path: path.to_path_buf(),
            name: name.to_string(),
        })?;
        if std::mem::replace(&mut seen[j], true) {
            return Err(bad(n + 1, format!("joint `{name}` listed twice")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(n + 1, format!("bad coordinate `{s}`")));
        let visible = match vis {
            "1" => true,
            "0" => false,
            other => return Err(bad(n + 1, format!("visibility must be 0 or 1, got `{other}`"))),
        };
        joints[j] = Joint {
            x: parse(x)?,
            y: parse(y)?,
            visible,
        };
    }
    Pose::new(joints).map_err(|e| bad(0, e.to_string()))
}

pub fn format_keypoints(pose: &Pose, topology: &SkeletonTopology) -> String {
    let mut out = String::from("# joint x y visible\n");
    for (name, j) in topology.joint_names().iter().zip(pose.joints()) {
        out.push_str(&format!("{name} {} {} {}\n", j.x, j.y, u8::from(j.visible)));
    }
    out
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a label PNG as a raw index map.
pub fn read_index_png(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let bad = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(read_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let (width, height, color, depth) = {
        let info = reader.info();
        (info.width, info.height, info.color_type, info.bit_depth)
    };
    if !matches!(color, png::ColorType::Indexed | png::ColorType::Grayscale) {
        return Err(bad(format!("label maps must be indexed or grayscale, got {color:?}")));
    }
    let bits = match depth {
        png::BitDepth::One => 1,
        png::BitDepth::Two => 2,
        png::BitDepth::Four => 4,
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => return Err(bad("16-bit label maps are not supported".into())),
    };
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let stride = frame.line_size;
    let mut out = Vec::with_capacity(width as usize * height as usize);
    for row in buf[..frame.buffer_size()].chunks_exact(stride).take(height as usize) {
        if bits == 8 {
            out.extend_from_slice(&row[..width as usize]);
        } else {
            let per_byte = 8 / bits;
            let mask = (1u8 << bits) - 1;
            for x in 0..width as usize {
                let byte = row[x / per_byte];
                let shift = 8 - bits * (x % per_byte + 1);
                out.push((byte >> shift) & mask);
            }
        }
    }
    Ok((width, height, out))
}

pub fn write_index_png(path: &Path, width: u32, height: u32, indices: &[u8], palette_parts: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(write_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let max = indices.iter().copied().max().unwrap_or(0) as usize;
    enc.set_palette(label_palette(palette_parts.max(max)));
    let err = |e: png::EncodingError| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = enc.write_header().map_err(err)?;
    w.write_image_data(indices).map_err(err)?;
    w.finish().map_err(err)
}

pub fn read_segmentation(path: &Path, parts: usize, expect_dims: (u32, u32)) -> Result<PartSegmentation> {
    let (w, h, idx) = read_index_png(path)?;
    if (w, h) != expect_dims {
        return Err(Error::BadMaskShape {
            path: path.to_path_buf(),
            got_width: w,
            got_height: h,
            want_width: expect_dims.0,
            want_height: expect_dims.1,
        });
    }
    if let Some(&value) = idx.iter().find(|&&v| v as usize > parts) {
        return Err(Error::NonBinaryMask {
            path: path.to_path_buf(),
            value,
        });
    }
    PartSegmentation::from_index_map(w, h, &idx, parts)
}

pub fn write_segmentation(path: &Path, seg: &PartSegmentation) -> Result<()> {
    write_index_png(path, seg.width(), seg.height(), &seg.to_index_map(), seg.part_count())
}

enum Loaded {
    Labeled(LabeledExample),
    PoseOnly(PoseOnlyExample),
}

fn load_entry(root: &Path, e: &ManifestEntry, topology: &SkeletonTopology) -> Result<Loaded> {
    let image = read_rgb(&root.join(&e.image))?;
    let pose = read_keypoints(&root.join(&e.keypoints), topology)?;
    pose.check_topology(topology)?;
    let seg = |rel: &str| read_segmentation(&root.join(rel), topology.part_count(), image.dimensions());
    Ok(match e.split {
        Split::Labeled => {
            let rel = e.labels.as_deref().ok_or_else(|| Error::Format {
                path: root.join(MANIFEST_FILE),
                message: format!("labeled example `{}` has no labels", e.id),
            })?;
            let segmentation = seg(rel)?;
            Loaded::Labeled(LabeledExample {
                id: e.id.clone(),
                image,
                pose,
                segmentation,
            })
        }
        Split::PoseOnly => {
            let truth = e.truth.as_deref().map(seg).transpose()?;
            Loaded::PoseOnly(PoseOnlyExample {
                id: e.id.clone(),
                image,
                pose,
                truth,
            })
        }
    })
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let m: Manifest = read_json(&path)?;
    if m.format != FORMAT {
        return Err(Error::Format {
            path,
            message: format!("unexpected format `{}`", m.format),
        });
    }
    Ok(m)
}

pub fn load_topology(root: &Path, manifest: &Manifest) -> Result<SkeletonTopology> {
    match &manifest.topology {
        Some(rel) => SkeletonTopology::load(&root.join(rel)),
        None => Ok(SkeletonTopology::human()),
    }
}

/// Loads and validates a dataset. The first malformed entry aborts the load
/// with an error naming the example and file.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest = load_manifest(root)?;
    let topology = load_topology(root, &manifest)?;
    let mut seen = HashMap::new();
    for (i, e) in manifest.examples.iter().enumerate() {
        if seen.insert(e.id.as_str(), i).is_some() {
            return Err(Error::Format {
                path: root.join(MANIFEST_FILE),
                message: format!("duplicate id `{}`", e.id),
            });
        }
    }
    let loaded: Vec<Result<Loaded>> = manifest
        .examples
        .par_iter()
        .map(|e| load_entry(root, e, &topology).map_err(|err| err.for_example(&e.id)))
        .collect();
    let mut ds = Dataset {
        topology,
        labeled: Vec::new(),
        pose_only: Vec::new(),
    };
    for l in loaded {
        match l? {
            Loaded::Labeled(e) => ds.labeled.push(e),
            Loaded::PoseOnly(e) => ds.pose_only.push(e),
        }
    }
    ds.labeled.sort_by(|a, b| a.id.cmp(&b.id));
    ds.pose_only.sort_by(|a, b| a.id.cmp(&b.id));
    ds.validate()?;
    Ok(ds)
}

fn rel(dir: &str, id: &str, ext: &str) -> String {
    format!("{dir}/{id}.{ext}")
}

/// Writes a dataset in the layout above, examples ordered by id.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    ds.validate()?;
    for d in ["images", "keypoints", "labels", "truth"] {
        create_dir(&root.join(d))?;
    }
    ds.topology.save(&root.join(TOPOLOGY_FILE))?;
    let mut entries = Vec::new();
    for e in &ds.labeled {
        entries.push(ManifestEntry {
            id: e.id.clone(),
            split: Split::Labeled,
            image: rel("images", &e.id, "png"),
            keypoints: rel("keypoints", &e.id, "txt"),
            labels: Some(rel("labels", &e.id, "png")),
            truth: None,
        });
    }
    for e in &ds.pose_only {
        entries.push(ManifestEntry {
            id: e.id.clone(),
            split: Split::PoseOnly,
            image: rel("images", &e.id, "png"),
            keypoints: rel("keypoints", &e.id, "txt"),
            labels: None,
            truth: e.truth.as_ref().map(|_| rel("truth", &e.id, "png")),
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));

    let labeled: HashMap<&str, &LabeledExample> = ds.labeled.iter().map(|e| (e.id.as_str(), e)).collect();
    let pose_only: HashMap<&str, &PoseOnlyExample> = ds.pose_only.iter().map(|e| (e.id.as_str(), e)).collect();
    entries.par_iter().try_for_each(|entry| -> Result<()> {
        let (image, pose, seg) = match entry.split {
            Split::Labeled => {
                let e = labeled[entry.id.as_str()];
                (&e.image, &e.pose, Some(&e.segmentation))
            }
            Split::PoseOnly => {
                let e = pose_only[entry.id.as_str()];
                (&e.image, &e.pose, e.truth.as_ref())
            }
        };
        write_rgb(&root.join(&entry.image), image)?;
        let kp = root.join(&entry.keypoints);
        fs::write(&kp, format_keypoints(pose, &ds.topology)).map_err(write_err(&kp))?;
        if let (Some(seg), Some(p)) = (seg, entry.labels.as_ref().or(entry.truth.as_ref())) {
            write_segmentation(&root.join(p), seg)?;
        }
        Ok(())
    })?;
    write_json(
        &root.join(MANIFEST_FILE),
        &Manifest {
            format: FORMAT.to_string(),
            version: 1,
            topology: Some(TOPOLOGY_FILE.to_string()),
            examples: entries,
        },
    )
}

/// Loads every `<id>.png` label map in `dir`, keyed by id, as part segmentations.
pub fn load_label_dir(dir: &Path, parts: usize) -> Result<Vec<(String, PartSegmentation)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(read_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    paths.sort();
    paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let (w, h, idx) = read_index_png(p)?;
            if let Some(&value) = idx.iter().find(|&&v| v as usize > parts) {
                return Err(Error::NonBinaryMask { path: p.clone(), value });
            }
            Ok((id, PartSegmentation::from_index_map(w, h, &idx, parts)?))
        })
        .collect()
}

/// Part label maps keyed by id, from either a dataset root (labels of
/// labeled examples, ground truth of pose-only ones) or a plain directory of
/// `<id>.png` files, which is read with `fallback` as its topology.
pub fn load_label_source(path: &Path, fallback: &SkeletonTopology) -> Result<(SkeletonTopology, Vec<(String, PartSegmentation)>)> {
    if !path.join(MANIFEST_FILE).is_file() {
        if !path.is_dir() {
            return Err(Error::MissingManifest(path.join(MANIFEST_FILE)));
        }
        let maps = load_label_dir(path, fallback.part_count())?;
        return Ok((fallback.clone(), maps));
    }
    let manifest = load_manifest(path)?;
    let topology = load_topology(path, &manifest)?;
    let parts = topology.part_count();
    let mut maps = manifest
        .examples
        .par_iter()
        .filter_map(|e| e.labels.as_ref().or(e.truth.as_ref()).map(|rel| (e, rel)))
        .map(|(e, rel)| {
            let p = path.join(rel);
            let (w, h, idx) = read_index_png(&p).map_err(|x| x.for_example(&e.id))?;
            if let Some(&value) = idx.iter().find(|&&v| v as usize > parts) {
                return Err(Error::NonBinaryMask { path: p, value }.for_example(&e.id));
            }
            Ok((e.id.clone(), PartSegmentation::from_index_map(w, h, &idx, parts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    maps.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((topology, maps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoint_text_round_trip() {
        let t = SkeletonTopology::human();
        let mut joints: Vec<Joint> = (0..16).map(|i| Joint::visible(i as f64 * 1.1, 0.1 + i as f64 / 3.0)).collect();
        joints[4] = Joint { x: 2.5, y: -1.0, visible: false };
        let pose = Pose::new(joints).unwrap();
        let text = format_keypoints(&pose, &t);
        assert_eq!(parse_keypoints(&text, &t, Path::new("k.txt")).unwrap(), pose);
    }

    #[test]
    fn keypoint_errors() {
        let t = SkeletonTopology::human();
        let p = Path::new("k.txt");
        assert!(matches!(
            parse_keypoints("nose 1 2 1\n", &t, p),
            Err(Error::UnknownJointName { name, .. }) if name == "nose"
        ));
        assert!(matches!(parse_keypoints("r_knee 1 2\n", &t, p), Err(Error::Format { .. })));
        assert!(matches!(parse_keypoints("r_knee 1 2 1\nr_knee 1 2 1\n", &t, p), Err(Error::Format { .. })));
        assert!(matches!(parse_keypoints("r_knee 1 x 1\n", &t, p), Err(Error::Format { .. })));
        let pose = parse_keypoints("# only one\nr_knee 1 2 1\n", &t, p).unwrap();
        assert_eq!(pose.joints().iter().filter(|j| j.visible).count(), 1);
    }
}
