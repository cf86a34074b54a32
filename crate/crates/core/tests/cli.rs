use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use clap::Parser;
use consensus_fuse::cli::{resolve, run, Cli, RunConfig};
use consensus_fuse::dataset::{DatasetManifest, SliceEntry};
use consensus_fuse::eval::Summary;
use consensus_fuse::pgm::{read_mask, write_image, write_mask};
use consensus_fuse::synthgen::{generate_benchmark, SynthSpec};
use consensus_fuse::{ImageGrid, Mask};

const BIN: &str = env!("CARGO_BIN_EXE_consensus-fuse");
const FAST_FOREST: [&str; 6] = ["--trees", "4", "--depth", "10", "--bagging", "0.1"];

fn cli(args: &[&str]) -> consensus_fuse::Result<()> {
    run(std::iter::once("consensus-fuse").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Every file under `root` with its bytes, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small_bench(dir: &Path, n: usize, missing: f64, seed: u64) -> PathBuf {
    let spec = SynthSpec {
        width: 64,
        height: 64,
        ..SynthSpec::default()
    };
    generate_benchmark(dir, n, &spec, missing, seed).unwrap();
    dir.join("manifest.json")
}

/// Copies each case's ground truth into `dir` as `slice_XXXX.pgm`.
fn gt_as_consensus(manifest: &Path, dir: &Path) {
    let m = DatasetManifest::read(manifest).unwrap();
    fs::create_dir_all(dir).unwrap();
    for (i, slice) in m.slices.iter().enumerate() {
        let gt = manifest.parent().unwrap().join(&slice.image).with_file_name("gt.pgm");
        fs::copy(gt, dir.join(format!("slice_{i:04}.pgm"))).unwrap();
    }
}

#[test]
fn synth_withholds_about_a_third() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    cli(&["synth", "--n", "120", "--seed", "7", "--missing", "0.33", "--out", &s(&out)]).unwrap();
    let m = DatasetManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.slices.len(), 120);
    // Binomial(120, 0.33): mean 39.6, sd 5.15; four sd either side
    let k = m.n_missing();
    assert!((19..=60).contains(&k), "{k}");
    assert!(m.slices.iter().all(|s| s.masks.iter().filter(|m| m.is_none()).count() <= 1));
}

#[test]
fn synth_single_case_is_quick_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    cli(&["synth", "--n", "1", "--seed", "3", "--out", &s(&a)]).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    cli(&["synth", "--n", "1", "--seed", "3", "--out", &s(&b)]).unwrap();
    assert_eq!(tree(&a), tree(&b));
    assert!(a.join("config.json").is_file());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"seed": 4, "method": "mv", "forest": {"n_trees": 7}, "fusion": {"lambda": 0.1}}"#,
    )
    .unwrap();
    let parsed = Cli::try_parse_from(["x", "fuse", "--config", &s(&path), "--lambda", "0.2", "--depth", "9"]).unwrap();
    let cfg = resolve(&parsed).unwrap();
    assert_eq!(cfg.fusion.lambda, 0.2);
    assert_eq!(cfg.forest.n_trees, 7);
    assert_eq!(cfg.forest.max_depth, 9);
    assert_eq!(cfg.method, "mv");
    assert_eq!(cfg.command, "fuse");
    // CONSENSUS_FUSE_SEED is not set in the test environment
    if std::env::var_os("CONSENSUS_FUSE_SEED").is_none() {
        assert_eq!(cfg.seed, 4);
    }

    fs::write(&path, r#"{"fusion": {"lambdaa": 0.1}}"#).unwrap();
    let parsed = Cli::try_parse_from(["x", "fuse", "--config", &s(&path)]).unwrap();
    assert_eq!(resolve(&parsed).unwrap_err().category(), "invalid-input");
}

#[test]
fn default_snapshot_values() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.fusion.lambda, 0.06);
    assert_eq!(cfg.forest.n_trees, 50);
    assert_eq!(cfg.forest.max_depth, 20);
    assert_eq!(cfg.method, "gcme");
    assert_eq!(cfg.folds, 5);
}

#[test]
fn rerun_from_snapshot_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bench(&dir.path().join("bench"), 3, 0.5, 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ms = s(&manifest);
    let mut args = vec!["fuse", "--manifest", &ms, "--seed", "11"];
    args.extend(FAST_FOREST);
    let out_a = s(&a);
    args.extend(["--out", &out_a]);
    cli(&args).unwrap();
    let snapshot = s(&a.join("config.json"));
    cli(&["fuse", "--config", &snapshot, "--out", &s(&b)]).unwrap();
    assert_eq!(tree(&a), tree(&b));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["lambda"], 0.06);
    assert_eq!(report["energy_per_slice"].as_array().unwrap().len(), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bench(&dir.path().join("bench"), 3, 0.5, 8);
    let mut trees = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let ms = s(&manifest);
        let mut args = vec!["fuse", "--manifest", &ms, "--threads", threads];
        args.extend(FAST_FOREST);
        let o = s(&out);
        args.extend(["--out", &o]);
        cli(&args).unwrap();
        trees.push(tree(&out.join("consensus")));
        trees.push(vec![(PathBuf::new(), fs::read(out.join("report.json")).unwrap())].into_iter().collect());
    }
    assert_eq!(trees[0], trees[2]);
    assert_eq!(trees[1], trees[3]);
}

fn unanimous_dataset(dir: &Path) -> (PathBuf, Vec<Mask>) {
    fs::create_dir_all(dir).unwrap();
    let mut slices = Vec::new();
    let mut masks = Vec::new();
    for i in 0..2 {
        let mask = Mask::from_fn(40, 40, |x, y| (10 + i..28).contains(&x) && (12..30 - i).contains(&y));
        let image = ImageGrid::new(40, 40, mask.data().iter().map(|&v| if v == 1 { 0.7 } else { 0.2 }).collect()).unwrap();
        write_image(&image, &dir.join(format!("img{i}.pgm"))).unwrap();
        write_mask(&mask, &dir.join(format!("m{i}.pgm"))).unwrap();
        slices.push(SliceEntry {
            image: format!("img{i}.pgm"),
            masks: vec![Some(format!("m{i}.pgm")); 3],
        });
        masks.push(mask);
    }
    let manifest = DatasetManifest {
        dataset: "fixture".into(),
        seed: 0,
        experts: vec!["a".into(), "b".into(), "c".into()],
        slices,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path).unwrap();
    (path, masks)
}

#[test]
fn majority_vote_of_unanimous_experts() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, masks) = unanimous_dataset(&dir.path().join("data"));
    let out = dir.path().join("mv");
    cli(&["fuse", "--manifest", &s(&manifest), "--method", "mv", "--out", &s(&out)]).unwrap();
    for (i, m) in masks.iter().enumerate() {
        assert_eq!(&read_mask(&out.join(format!("consensus/slice_{i:04}.pgm"))).unwrap(), m);
    }
}

#[test]
fn gcme_all_equals_gcme_without_missing_masks() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bench(&dir.path().join("bench"), 3, 0.0, 6);
    let mut outputs = Vec::new();
    for method in ["gcme", "gcme-all"] {
        let out = dir.path().join(method);
        let ms = s(&manifest);
        let mut args = vec!["fuse", "--manifest", &ms, "--method", method];
        args.extend(FAST_FOREST);
        let o = s(&out);
        args.extend(["--out", &o]);
        cli(&args).unwrap();
        outputs.push(tree(&out.join("consensus")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn eval_against_ground_truth_copies() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bench(&dir.path().join("bench"), 4, 0.0, 1);
    let gt = dir.path().join("gt");
    gt_as_consensus(&manifest, &gt);
    let mv = dir.path().join("mv");
    cli(&["fuse", "--manifest", &s(&manifest), "--method", "mv", "--out", &s(&mv)]).unwrap();
    let out = dir.path().join("eval");
    let a = format!("a={}", s(&gt));
    let b = format!("b={}", s(&gt));
    cli(&["eval", "--manifest", &s(&manifest), "--consensus", &a, "--consensus", &b, "--consensus", &s(&mv), "--out", &s(&out)]).unwrap();

    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().filter(|r| r[1] != "mv").all(|r| r[2] == "1" && r[3] == "0"));

    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let t = summary.t_tests.iter().find(|t| t.a == "a" && t.b == "b" && t.metric == "dice").unwrap();
    assert!(t.test.degenerate && t.test.p == 1.0);
    let mv_dice: Vec<f64> = rows.iter().filter(|r| r[1] == "mv").map(|r| r[2].parse().unwrap()).collect();
    let mean = mv_dice.iter().sum::<f64>() / mv_dice.len() as f64;
    assert!((summary.methods["mv"].dice.unwrap().mean - mean).abs() < 1e-12);
}

#[test]
fn validate_five_folds_on_thirty_cases() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        width: 64,
        height: 64,
        noise_sigma: 0.05,
        ..SynthSpec::default()
    };
    generate_benchmark(&dir.path().join("bench"), 30, &spec, 0.0, 3).unwrap();
    let manifest = dir.path().join("bench/manifest.json");
    let gt = dir.path().join("gt");
    gt_as_consensus(&manifest, &gt);
    let mut outs = Vec::new();
    for run_name in ["r1", "r2"] {
        let out = dir.path().join(run_name);
        let ms = s(&manifest);
        let gs = s(&gt);
        let mut args = vec!["validate", "--manifest", &ms, "--consensus", &gs, "--folds", "5", "--seed", "4"];
        args.extend(["--trees", "4", "--depth", "10", "--bagging", "0.05"]);
        let o = s(&out);
        args.extend(["--out", &o]);
        cli(&args).unwrap();
        outs.push(tree(&out));
    }
    assert_eq!(outs[0], outs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outs[0][Path::new("validate.json")]).unwrap();
    let folds = report["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 5);
    assert!(folds.iter().all(|f| f["test_cases"].as_array().unwrap().len() == 6));
    let mean = report["mean_dice"].as_f64().unwrap();
    assert!(mean > 0.9, "{mean}");
}

fn binary(args: &[&str], seed_env: Option<&str>) -> (i32, String, String) {
    let mut cmd = Process::new(BIN);
    cmd.args(args).env_remove("CONSENSUS_FUSE_SEED");
    if let Some(seed) = seed_env {
        cmd.env("CONSENSUS_FUSE_SEED", seed);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_error_lines_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = unanimous_dataset(&dir.path().join("data"));
    let out = s(&dir.path().join("o"));

    let (code, _, err) = binary(&["fuse", "--manifest", &s(&manifest), "--method", "staple", "--out", &out], None);
    assert_ne!(code, 0);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[invalid-input]: "), "{err}");

    let (code, _, err) = binary(&["fuse", "--manifest", "/nonexistent/manifest.json", "--out", &out], None);
    assert_ne!(code, 0);
    assert!(err.starts_with("error[io]: "), "{err}");

    let (code, _, err) = binary(&["fuse", "--frobnicate"], None);
    assert_ne!(code, 0);
    assert!(err.starts_with("error[usage]: "), "{err}");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"dataset\": 3}").unwrap();
    let (code, _, err) = binary(&["sc", "--manifest", &s(&bad), "--out", &out], None);
    assert_ne!(code, 0);
    assert!(err.starts_with("error[malformed-manifest]: "), "{err}");

    let (code, help, _) = binary(&["--help"], None);
    assert_eq!(code, 0);
    for sub in ["synth", "fuse", "eval", "validate", "sc", "impute"] {
        assert!(help.contains(sub));
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let snap = |name: &str| -> RunConfig {
        serde_json::from_str(&fs::read_to_string(dir.path().join(name).join("config.json")).unwrap()).unwrap()
    };
    let out = s(&dir.path().join("env"));
    assert_eq!(binary(&["synth", "--n", "1", "--width", "40", "--height", "40", "--out", &out], Some("9")).0, 0);
    assert_eq!(snap("env").seed, 9);
    let out = s(&dir.path().join("flag"));
    assert_eq!(binary(&["synth", "--n", "1", "--width", "40", "--height", "40", "--seed", "2", "--out", &out], Some("9")).0, 0);
    assert_eq!(snap("flag").seed, 2);
    let out = s(&dir.path().join("none"));
    assert_eq!(binary(&["synth", "--n", "1", "--width", "40", "--height", "40", "--out", &out], None).0, 0);
    assert_eq!(snap("none").seed, 0);
}

#[test]
fn impute_writes_completed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bench(&dir.path().join("bench"), 4, 0.9, 5);
    let before = DatasetManifest::read(&manifest).unwrap();
    assert!(before.n_missing() > 0);
    let out = dir.path().join("imp");
    let ms = s(&manifest);
    let mut args = vec!["impute", "--manifest", &ms];
    args.extend(FAST_FOREST);
    let o = s(&out);
    args.extend(["--out", &o]);
    cli(&args).unwrap();
    let after = consensus_fuse::dataset::load_dataset(&out.join("manifest.json")).unwrap();
    assert!(after.annotations.is_complete());
    assert_eq!(after.manifest.slices.len(), 4);
    let imputed = fs::read_dir(out.join("imputed")).unwrap().count();
    assert_eq!(imputed, before.n_missing());
}
