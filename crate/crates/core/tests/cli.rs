use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partprior::cli::MODEL_FILE;
use partprior::dataset::load_dataset;
use partprior::pipeline::{self, PriorConfig, PriorEngine};
use partprior::refiner::RefinerModel;

fn partprior(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partprior")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = partprior(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(count: usize) -> Fixture {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let n = count.to_string();
        ok(&["synth", "--count", &n, "--seed", "11", "--out", s(&root.join("data"))]);
        Fixture { _tmp: tmp, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn synth_is_reproducible() {
    let f = Fixture::new(20);
    ok(&["synth", "--count", "20", "--seed", "11", "--out", s(&f.path("again"))]);
    for rel in ["manifest.json", "images/fig_00003.png", "labels/fig_00003.png", "keypoints/fig_00019.txt"] {
        assert_eq!(
            std::fs::read(f.path("data").join(rel)).unwrap(),
            std::fs::read(f.path("again").join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn transfer_without_refiner_is_the_prior_argmax() {
    let f = Fixture::new(50);
    ok(&["transfer", "--data", s(&f.path("data")), "--refiner", "none", "--out", s(&f.path("t"))]);
    let ds = load_dataset(&f.path("data")).unwrap();
    let out = load_dataset(&f.path("t")).unwrap();
    assert_eq!(out.labeled.len(), 10);
    assert!(out.pose_only.is_empty());
    let priors = PriorEngine::new(&ds).unwrap().pose_only_priors(&ds, &PriorConfig::default()).unwrap();
    for (e, p) in out.labeled.iter().zip(&priors) {
        assert_eq!(e.id, p.id);
        let want = pipeline::label_target(None, &e.image, &p.prior).unwrap();
        assert_eq!(e.segmentation, want.to_segmentation());
    }
}

#[test]
fn transfer_with_refiner_matches_the_library() {
    let f = Fixture::new(50);
    ok(&["refine-train", "--data", s(&f.path("data")), "--epochs", "2", "--out", s(&f.path("model"))]);
    ok(&["transfer", "--data", s(&f.path("data")), "--refiner", s(&f.path("model")), "--out", s(&f.path("t"))]);
    let ds = load_dataset(&f.path("data")).unwrap();
    let model = RefinerModel::load(&f.path("model").join(MODEL_FILE)).unwrap();
    let out = load_dataset(&f.path("t")).unwrap();
    let priors = PriorEngine::new(&ds).unwrap().pose_only_priors(&ds, &PriorConfig::default()).unwrap();
    for ((e, p), target) in out.labeled.iter().zip(&priors).zip(&ds.pose_only) {
        let want = pipeline::label_target(Some(&model), &target.image, &p.prior).unwrap();
        assert_eq!(e.segmentation, want.to_segmentation(), "{}", e.id);
    }
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let f = Fixture::new(20);
    let data = f.path("data");
    let stdout = ok(&["eval", "--pred", s(&data), "--gt", s(&data), "--out", s(&f.path("e"))]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("e").join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mean"], 1.0, "{stdout}");
    assert_eq!(report["images"], 20);
}

#[test]
fn eval_without_shared_ids_fails() {
    let f = Fixture::new(20);
    ok(&["synth", "--count", "5", "--seed", "1", "--out", s(&f.path("other"))]);
    let renamed = f.path("renamed");
    std::fs::create_dir(&renamed).unwrap();
    for entry in std::fs::read_dir(f.path("other").join("labels")).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, renamed.join(format!("x{}", p.file_name().unwrap().to_str().unwrap()))).unwrap();
    }
    let out = partprior(&["eval", "--pred", s(&renamed), "--gt", s(&f.path("data")), "--out", s(&f.path("e"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("share no example ids"), "{stderr}");
}

#[test]
fn invalid_configuration_exits_with_one() {
    let f = Fixture::new(20);
    let out = partprior(&[
        "prior",
        "--data",
        s(&f.path("data")),
        "--cluster-size",
        "9",
        "--pool-size",
        "5",
        "--out",
        s(&f.path("p")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(partprior(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(partprior(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = partprior(&["prior", "--data", s(&tmp.path().join("nope")), "--out", s(&tmp.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prior_writes_one_file_per_target_and_a_manifest() {
    let f = Fixture::new(30);
    ok(&["prior", "--data", s(&f.path("data")), "--out", s(&f.path("p"))]);
    assert_eq!(std::fs::read_dir(f.path("p").join("priors")).unwrap().count(), 6);
    assert_eq!(std::fs::read_dir(f.path("p").join("composites")).unwrap().count(), 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("p").join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["command"], "prior");
    assert_eq!(manifest["details"]["clusters"].as_object().unwrap().len(), 6);
    assert!(manifest["run"].get("out").is_none());
}
