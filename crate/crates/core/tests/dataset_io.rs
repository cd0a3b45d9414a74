use std::fs;
use std::path::Path;

use partprior::dataset::{self, format_keypoints, load_dataset, save_dataset, write_index_png, write_rgb};
use partprior::synth::{generate_synthetic, sample_figure, SynthConfig};
use partprior::topology::SkeletonTopology;
use partprior::Error;

const MANIFEST: &str = r#"{
  "format": "partprior-dataset",
  "version": 1,
  "examples": [
    { "id": "b", "split": "pose_only", "image": "b.png", "keypoints": "b.txt" },
    { "id": "a", "split": "labeled", "image": "a.png", "keypoints": "a.txt", "labels": "a_labels.png" }
  ]
}"#;

/// Two figures written by hand: one labeled, one keypoints only.
fn write_fixture(root: &Path) {
    let topo = SkeletonTopology::human();
    let cfg = SynthConfig::default();
    for (i, id) in ["a", "b"].into_iter().enumerate() {
        let fig = sample_figure(&cfg, i).unwrap();
        write_rgb(&root.join(format!("{id}.png")), &fig.image).unwrap();
        fs::write(root.join(format!("{id}.txt")), format_keypoints(&fig.pose, &topo)).unwrap();
        if id == "a" {
            let seg = &fig.segmentation;
            write_index_png(&root.join("a_labels.png"), seg.width(), seg.height(), &seg.to_index_map(), seg.part_count())
                .unwrap();
        }
    }
    fs::write(root.join("manifest.json"), MANIFEST).unwrap();
}

#[test]
fn loads_a_hand_written_two_example_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let ds = load_dataset(tmp.path()).unwrap();
    assert_eq!(ds.labeled.len(), 1);
    assert_eq!(ds.pose_only.len(), 1);
    assert_eq!(ds.labeled[0].id, "a");
    assert_eq!(ds.pose_only[0].truth, None);
    assert_eq!(ds.topology, SkeletonTopology::human());
    let fig = sample_figure(&SynthConfig::default(), 0).unwrap();
    assert_eq!(ds.labeled[0].segmentation, fig.segmentation);
    assert_eq!(ds.labeled[0].image, fig.image);
}

#[test]
fn stray_label_value_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let (w, h) = (64, 64);
    let mut values = vec![0u8; (w * h) as usize];
    values[100] = 127;
    image::GrayImage::from_raw(w, h, values)
        .unwrap()
        .save(tmp.path().join("a_labels.png"))
        .unwrap();
    let err = load_dataset(tmp.path()).unwrap_err();
    assert!(
        matches!(err.root_cause(), Error::NonBinaryMask { value: 127, .. }),
        "{err}"
    );
    assert!(err.to_string().contains("a_labels.png"), "{err}");
}

#[test]
fn wrong_label_size_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    write_index_png(&tmp.path().join("a_labels.png"), 32, 64, &vec![0; 32 * 64], 10).unwrap();
    let err = load_dataset(tmp.path()).unwrap_err();
    assert!(matches!(err.root_cause(), Error::BadMaskShape { got_width: 32, .. }), "{err}");
}

#[test]
fn missing_keypoints_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    fs::remove_file(tmp.path().join("b.txt")).unwrap();
    let err = load_dataset(tmp.path()).unwrap_err();
    assert!(err.to_string().contains("b.txt"), "{err}");
}

#[test]
fn save_then_load_is_lossless() {
    let ds = generate_synthetic(&SynthConfig {
        count: 12,
        ..SynthConfig::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_dataset(&ds, tmp.path()).unwrap();
    let back = load_dataset(tmp.path()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn saved_dataset_can_be_rewritten_identically() {
    let ds = generate_synthetic(&SynthConfig {
        count: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_dataset(&ds, a.path()).unwrap();
    save_dataset(&load_dataset(a.path()).unwrap(), b.path()).unwrap();
    for rel in ["manifest.json", "topology.json", "images/fig_00000.png", "labels/fig_00000.png"] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn label_source_accepts_a_plain_png_directory() {
    let ds = generate_synthetic(&SynthConfig {
        count: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for e in &ds.labeled {
        dataset::write_segmentation(&tmp.path().join(format!("{}.png", e.id)), &e.segmentation).unwrap();
    }
    let (topo, labels) = dataset::load_label_source(tmp.path(), &ds.topology).unwrap();
    assert_eq!(topo, ds.topology);
    assert_eq!(labels.len(), ds.labeled.len());
    for ((id, seg), e) in labels.iter().zip(&ds.labeled) {
        assert_eq!(id, &e.id);
        assert_eq!(seg, &e.segmentation);
    }
}
