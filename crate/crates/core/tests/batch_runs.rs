//! End-to-end batch synthesis: manifests, reproducibility, failure
//! isolation, and drift verification.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use tempfile::tempdir;

use nightforge_core::io::{pfm, png};
use nightforge_core::pipeline::{
    run_dataset, verify_manifest, PipelineConfig, PipelineError, RunOptions,
};
use nightforge_core::seed::rng_from;

fn write_day_image(path: &Path, seed: u64, h: usize, w: usize) {
    use rand::Rng;
    let mut rng = rng_from(seed);
    let plane = Array3::from_shape_fn((h, w, 3), |_| rng.gen_range(0.2..0.9f32));
    png::write_rgb16(path, &plane).unwrap();
}

fn write_depth(path: &Path, seed: u64, h: usize, w: usize) {
    use rand::Rng;
    let mut rng = rng_from(seed);
    let depth = Array2::from_shape_fn((h, w), |_| rng.gen_range(0.5..40.0f32));
    pfm::write_pfm_depth(path, &depth).unwrap();
}

fn write_flare_assets(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut px = Array3::zeros((16, 16, 3));
    for y in 6..10 {
        for x in 6..10 {
            for c in 0..3 {
                px[[y, x, c]] = 1.0;
            }
        }
    }
    pfm::write_pfm(&dir.join("blob.pfm"), &px).unwrap();
    let ramp = Array3::from_shape_fn((12, 12, 3), |(y, x, _)| {
        ((x + y) as f32 / 22.0).clamp(0.0, 1.0)
    });
    pfm::write_pfm(&dir.join("ramp.pfm"), &ramp).unwrap();
}

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    input_manifest: PathBuf,
    cfg: PipelineConfig,
}

fn setup(n_records: usize, seed: u64) -> Setup {
    let dir = tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let assets = root.join("assets");
    write_flare_assets(&assets);
    let inputs = root.join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();

    let mut lines = String::new();
    for i in 0..n_records {
        let rgb = inputs.join(format!("scene{i}.png"));
        let depth = inputs.join(format!("scene{i}.pfm"));
        write_day_image(&rgb, seed + i as u64, 24, 32);
        write_depth(&depth, 1000 + seed + i as u64, 24, 32);
        lines.push_str(&format!(
            "inputs/scene{i}.png\tinputs/scene{i}.pfm\n"
        ));
    }
    let input_manifest = root.join("input.tsv");
    std::fs::write(&input_manifest, lines).unwrap();

    let cfg = PipelineConfig {
        asset_dir: assets,
        output_dir: root.join("out"),
        global_seed: 77,
        emit_guidance: true,
        ..PipelineConfig::default()
    };
    Setup {
        _dir: dir,
        root,
        input_manifest,
        cfg,
    }
}

fn sha256_of(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).unwrap();
    format!("{:x}", Sha256::digest(&bytes))
}

#[test]
fn batch_writes_all_outputs_and_a_manifest() {
    let s = setup(3, 1);
    let outcome = run_dataset(&s.input_manifest, &s.cfg, &RunOptions::default()).unwrap();
    assert_eq!(outcome.manifest.records.len(), 3);
    assert!(outcome.failures.is_empty());
    let out = &s.cfg.output_dir;
    let mut night = 0;
    let mut guidance = 0;
    let mut depth = 0;
    for entry in std::fs::read_dir(out).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        if name.ends_with("_night.png") {
            night += 1;
        } else if name.ends_with("_guidance.pfm") {
            guidance += 1;
        } else if name.ends_with("_depth.pfm") {
            depth += 1;
        }
    }
    assert_eq!((night, guidance, depth), (3, 3, 3));
    assert!(outcome.manifest_path.exists());
    assert!(outcome.report_path.exists());
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let s = setup(3, 2);
    let first = run_dataset(&s.input_manifest, &s.cfg, &RunOptions::default()).unwrap();
    let mut hashes = std::collections::BTreeMap::new();
    for record in &first.manifest.records {
        for output in &record.outputs {
            hashes.insert(
                output.path.clone(),
                sha256_of(&s.cfg.output_dir.join(&output.path)),
            );
        }
    }

    let second_cfg = PipelineConfig {
        output_dir: s.root.join("out2"),
        ..s.cfg.clone()
    };
    let second = run_dataset(&s.input_manifest, &second_cfg, &RunOptions::default()).unwrap();
    for record in &second.manifest.records {
        for output in &record.outputs {
            let rerun = sha256_of(&second_cfg.output_dir.join(&output.path));
            assert_eq!(hashes[&output.path], rerun, "{} drifted", output.path);
            assert_eq!(output.sha256, rerun);
        }
    }
}

#[test]
fn one_bad_record_is_isolated_and_reported() {
    let s = setup(3, 3);
    let all_good = run_dataset(&s.input_manifest, &s.cfg, &RunOptions::default()).unwrap();

    // corrupt the middle record's depth map
    let bad_depth = s.root.join("inputs/scene1.pfm");
    std::fs::write(&bad_depth, b"not a pfm").unwrap();

    let second_cfg = PipelineConfig {
        output_dir: s.root.join("out_bad"),
        ..s.cfg.clone()
    };
    let outcome = run_dataset(&s.input_manifest, &second_cfg, &RunOptions::default()).unwrap();
    assert_eq!(outcome.manifest.records.len(), 2);
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].index, 1);
    assert!(outcome.failures[0].depth.contains("scene1.pfm"));

    let report = std::fs::read_to_string(&outcome.report_path).unwrap();
    assert!(report.contains("scene1.pfm"));

    // seeds derive from the record index, so the surviving records are
    // byte-identical to the all-good run
    for record in &outcome.manifest.records {
        let all_good_record = all_good
            .manifest
            .records
            .iter()
            .find(|r| r.index == record.index)
            .unwrap();
        for (a, b) in record.outputs.iter().zip(&all_good_record.outputs) {
            assert_eq!(a.sha256, b.sha256);
        }
    }
}

#[test]
fn strict_mode_fails_the_run() {
    let s = setup(2, 4);
    std::fs::write(s.root.join("inputs/scene0.pfm"), b"garbage").unwrap();
    let err = run_dataset(
        &s.input_manifest,
        &s.cfg,
        &RunOptions {
            strict: true,
            workers: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::StrictFailure { failed: 1, total: 2 }));
    assert!(!s.cfg.output_dir.join("manifest.jsonl").exists());
}

#[test]
fn worker_count_does_not_change_outputs() {
    let s = setup(4, 5);
    let serial_cfg = PipelineConfig {
        output_dir: s.root.join("out_serial"),
        ..s.cfg.clone()
    };
    let parallel_cfg = PipelineConfig {
        output_dir: s.root.join("out_parallel"),
        ..s.cfg.clone()
    };
    let serial = run_dataset(
        &s.input_manifest,
        &serial_cfg,
        &RunOptions {
            strict: false,
            workers: Some(1),
        },
    )
    .unwrap();
    let parallel = run_dataset(
        &s.input_manifest,
        &parallel_cfg,
        &RunOptions {
            strict: false,
            workers: Some(4),
        },
    )
    .unwrap();
    for (a, b) in serial
        .manifest
        .records
        .iter()
        .zip(parallel.manifest.records.iter())
    {
        assert_eq!(a.index, b.index);
        assert_eq!(a.per_image_seed, b.per_image_seed);
        for (x, y) in a.outputs.iter().zip(b.outputs.iter()) {
            assert_eq!(x.sha256, y.sha256);
        }
    }
}

#[test]
fn verify_detects_tampering() {
    let s = setup(2, 6);
    let outcome = run_dataset(&s.input_manifest, &s.cfg, &RunOptions::default()).unwrap();

    let clean = verify_manifest(&outcome.manifest_path).unwrap();
    assert!(clean.clean());
    assert_eq!(clean.files_checked, 6);

    // flip one byte of the first night image
    let victim = s
        .cfg
        .output_dir
        .join(&outcome.manifest.records[0].outputs[0].path);
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    std::fs::write(&victim, bytes).unwrap();

    let dirty = verify_manifest(&outcome.manifest_path).unwrap();
    assert_eq!(dirty.drifted.len(), 1);
    assert!(dirty.drifted[0].path.ends_with("_night.png"));
}

#[test]
fn depth_output_round_trips_the_input_bytes() {
    // depth is written back as PFM; at native resolution the payload must
    // be the same floats that came in
    let s = setup(1, 7);
    let outcome = run_dataset(&s.input_manifest, &s.cfg, &RunOptions::default()).unwrap();
    let record = &outcome.manifest.records[0];
    let input_depth = pfm::read_pfm_depth(Path::new(&record.source_depth)).unwrap();
    let output_path = s
        .cfg
        .output_dir
        .join(&record.outputs[1].path);
    let output_depth = pfm::read_pfm_depth(&output_path).unwrap();
    for (a, b) in input_depth.iter().zip(output_depth.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
