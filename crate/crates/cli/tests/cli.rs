//! End-to-end runs of the `nightforge` binary.

mod common;

use common::*;
use ndarray::{Array2, Array3};
use tempfile::tempdir;

use nightforge_core::depth::{self, EvalConfig};
use nightforge_core::fusion::{self, params_io, FusionParams};
use nightforge_core::io::pfm;
use nightforge_core::seed::rng_from;

#[test]
fn synth_then_verify_round_trips_cleanly() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    write_assets(&root.join("assets"));
    let manifest = write_inputs(root, 3, 11, 24, 32);
    let out = root.join("out");

    let result = run(&[
        "synth",
        "--input",
        manifest.to_str().unwrap(),
        "--assets",
        root.join("assets").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "42",
        "--emit-guidance",
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(stdout_of(&result).contains("synthesized 3 pairs (0 failed)"));

    let verify = run(&[
        "verify",
        "--manifest",
        out.join("manifest.jsonl").to_str().unwrap(),
    ]);
    assert!(verify.status.success());
    assert!(stdout_of(&verify).contains("9 files, 0 drifted"));
}

#[test]
fn verify_reports_drift_with_exit_code_one() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    write_assets(&root.join("assets"));
    let manifest = write_inputs(root, 1, 12, 16, 16);
    let out = root.join("out");
    let result = run(&[
        "synth",
        "--input",
        manifest.to_str().unwrap(),
        "--assets",
        root.join("assets").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert!(result.status.success());

    // tamper with a written depth map
    let victim = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.to_string_lossy().ends_with("_depth.pfm"))
        .unwrap();
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, bytes).unwrap();

    let verify = run(&[
        "verify",
        "--manifest",
        out.join("manifest.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(verify.status.code(), Some(1));
    assert!(stdout_of(&verify).contains("drift:"));
}

#[test]
fn strict_mode_exits_with_code_two() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    write_assets(&root.join("assets"));
    let manifest = write_inputs(root, 2, 13, 16, 16);
    std::fs::write(root.join("inputs/scene1.pfm"), b"broken").unwrap();

    let result = run(&[
        "synth",
        "--input",
        manifest.to_str().unwrap(),
        "--assets",
        root.join("assets").to_str().unwrap(),
        "--out",
        root.join("out").to_str().unwrap(),
        "--seed",
        "5",
        "--strict",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn config_and_manifest_errors_exit_with_code_one() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let missing = run(&[
        "synth",
        "--input",
        root.join("absent.tsv").to_str().unwrap(),
        "--assets",
        root.to_str().unwrap(),
        "--out",
        root.join("out").to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(missing.status.code(), Some(1));

    let bad_cfg = root.join("bad.toml");
    std::fs::write(&bad_cfg, "flare = \"not a table\"").unwrap();
    write_assets(&root.join("assets"));
    let manifest = write_inputs(root, 1, 14, 8, 8);
    let result = run(&[
        "synth",
        "--input",
        manifest.to_str().unwrap(),
        "--assets",
        root.join("assets").to_str().unwrap(),
        "--out",
        root.join("out").to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn config_file_drives_the_run_without_flags() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    write_assets(&root.join("assets"));
    let manifest = write_inputs(root, 1, 15, 12, 12);
    let cfg_path = root.join("cfg.toml");
    std::fs::write(
        &cfg_path,
        format!(
            "asset_dir = {:?}\noutput_dir = {:?}\nglobal_seed = 9\nemit_guidance = true\n",
            root.join("assets").to_str().unwrap(),
            root.join("cfg_out").to_str().unwrap(),
        ),
    )
    .unwrap();
    let result = run(&[
        "synth",
        "--input",
        manifest.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(root.join("cfg_out/manifest.jsonl").exists());
}

#[test]
fn fuse_applies_the_kernel_to_a_pfm_pair() {
    use rand::Rng;
    let dir = tempdir().unwrap();
    let root = dir.path();

    let mut rng = rng_from(21);
    let image = Array3::from_shape_fn((10, 14, 3), |_| rng.gen_range(0.0..1.0f32));
    let guidance = fusion::illumination_guidance(&image).unwrap();
    pfm::write_pfm(&root.join("in.pfm"), &image).unwrap();
    pfm::write_pfm(&root.join("g.pfm"), &guidance).unwrap();

    let params = FusionParams::<f32>::seeded(4, 6, 3, 33);
    params_io::write_params(&root.join("p.nffp"), &params).unwrap();

    let result = run(&[
        "fuse",
        "--input",
        root.join("in.pfm").to_str().unwrap(),
        "--guidance",
        root.join("g.pfm").to_str().unwrap(),
        "--params",
        root.join("p.nffp").to_str().unwrap(),
        "--out",
        root.join("fused.pfm").to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");

    let written = pfm::read_pfm(&root.join("fused.pfm")).unwrap();
    let stacked = fusion::concat_aux(&image, &guidance).unwrap();
    let (expected, _) = fusion::fusion_forward(&stacked, &params).unwrap();
    assert_eq!(written.dim(), (10, 14, 3));
    for (a, b) in written.iter().zip(expected.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn fuse_rejects_mismatched_parameter_channels() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let image: Array3<f32> = Array3::zeros((6, 6, 3));
    let guidance: Array3<f32> = Array3::zeros((6, 6, 1));
    pfm::write_pfm(&root.join("in.pfm"), &image).unwrap();
    pfm::write_pfm(&root.join("g.pfm"), &guidance).unwrap();
    let params = FusionParams::<f32>::seeded(5, 6, 3, 1);
    params_io::write_params(&root.join("p.nffp"), &params).unwrap();
    let result = run(&[
        "fuse",
        "--input",
        root.join("in.pfm").to_str().unwrap(),
        "--guidance",
        root.join("g.pfm").to_str().unwrap(),
        "--params",
        root.join("p.nffp").to_str().unwrap(),
        "--out",
        root.join("fused.pfm").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn eval_writes_a_report_matching_the_library() {
    use rand::Rng;
    let dir = tempdir().unwrap();
    let root = dir.path();
    let pred_dir = root.join("pred");
    let gt_dir = root.join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();

    let mut rng = rng_from(29);
    let mut expected_reports = Vec::new();
    for i in 0..3 {
        let gt: Array2<f32> = Array2::from_shape_fn((8, 8), |_| rng.gen_range(1.0..50.0));
        let pred: Array2<f32> = gt.mapv(|g| g * rng.gen_range(0.8..1.2));
        pfm::write_pfm_depth(&gt_dir.join(format!("m{i}.pfm")), &gt).unwrap();
        pfm::write_pfm_depth(&pred_dir.join(format!("m{i}.pfm")), &pred).unwrap();
        let cfg = EvalConfig {
            max_depth: 60.0,
            ..EvalConfig::default()
        };
        expected_reports.push(depth::compute_metrics(&pred, &gt, &cfg).unwrap());
    }
    let expected = depth::aggregate(&expected_reports).unwrap();

    let report_path = root.join("report.json");
    let result = run(&[
        "eval",
        "--pred-dir",
        pred_dir.to_str().unwrap(),
        "--gt-dir",
        gt_dir.to_str().unwrap(),
        "--max-depth",
        "60",
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["per_image"].as_object().unwrap().len(), 3);
    let agg = &report["aggregate"];
    assert!((agg["abs_rel"].as_f64().unwrap() - expected.abs_rel).abs() < 1e-12);
    assert!((agg["rmse"].as_f64().unwrap() - expected.rmse).abs() < 1e-12);
    assert_eq!(agg["n_valid"].as_u64().unwrap() as usize, expected.n_valid);
}

#[test]
fn eval_with_median_alignment_cancels_scale() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let pred_dir = root.join("pred");
    let gt_dir = root.join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();

    let gt: Array2<f32> =
        Array2::from_shape_vec((2, 3), vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]).unwrap();
    let pred = gt.mapv(|g| 5.0 * g);
    pfm::write_pfm_depth(&gt_dir.join("a.pfm"), &gt).unwrap();
    pfm::write_pfm_depth(&pred_dir.join("a.pfm"), &pred).unwrap();

    let report_path = root.join("report.json");
    let result = run(&[
        "eval",
        "--pred-dir",
        pred_dir.to_str().unwrap(),
        "--gt-dir",
        gt_dir.to_str().unwrap(),
        "--max-depth",
        "40",
        "--align",
        "median",
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["abs_rel"].as_f64().unwrap(), 0.0);
    assert_eq!(report["alignment"].as_str().unwrap(), "median");
}

#[test]
fn eval_without_ground_truth_exits_with_code_one() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let pred_dir = root.join("pred");
    let gt_dir = root.join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    pfm::write_pfm_depth(&pred_dir.join("a.pfm"), &Array2::from_elem((2, 2), 3.0)).unwrap();
    let result = run(&[
        "eval",
        "--pred-dir",
        pred_dir.to_str().unwrap(),
        "--gt-dir",
        gt_dir.to_str().unwrap(),
        "--max-depth",
        "60",
        "--report",
        root.join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
}
