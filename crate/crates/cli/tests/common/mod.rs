//! Shared helpers for the CLI and acceptance suites.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{Array2, Array3};

use nightforge_core::io::{pfm, png};
use nightforge_core::seed::rng_from;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nightforge")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn write_day_image(path: &Path, seed: u64, h: usize, w: usize) {
    use rand::Rng;
    let mut rng = rng_from(seed);
    let plane = Array3::from_shape_fn((h, w, 3), |_| rng.gen_range(0.2..0.9f32));
    png::write_rgb16(path, &plane).unwrap();
}

pub fn write_depth_map(path: &Path, seed: u64, h: usize, w: usize) {
    use rand::Rng;
    let mut rng = rng_from(seed);
    let depth = Array2::from_shape_fn((h, w), |_| rng.gen_range(0.5..40.0f32));
    pfm::write_pfm_depth(path, &depth).unwrap();
}

/// A small catalog: one bright blob and one diagonal ramp.
pub fn write_assets(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut blob = Array3::zeros((16, 16, 3));
    for y in 6..10 {
        for x in 6..10 {
            for c in 0..3 {
                blob[[y, x, c]] = 1.0;
            }
        }
    }
    pfm::write_pfm(&dir.join("blob.pfm"), &blob).unwrap();
    let ramp = Array3::from_shape_fn((12, 12, 3), |(y, x, _)| {
        ((x + y) as f32 / 22.0).clamp(0.0, 1.0)
    });
    pfm::write_pfm(&dir.join("ramp.pfm"), &ramp).unwrap();
}

/// Write `count` day/depth input pairs and the tab-separated manifest
/// naming them; returns the manifest path.
pub fn write_inputs(root: &Path, count: usize, seed: u64, h: usize, w: usize) -> PathBuf {
    let inputs = root.join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    let mut lines = String::new();
    for i in 0..count {
        write_day_image(&inputs.join(format!("scene{i}.png")), seed + i as u64, h, w);
        write_depth_map(
            &inputs.join(format!("scene{i}.pfm")),
            9000 + seed + i as u64,
            h,
            w,
        );
        lines.push_str(&format!("inputs/scene{i}.png\tinputs/scene{i}.pfm\n"));
    }
    let manifest = root.join("input.tsv");
    std::fs::write(&manifest, lines).unwrap();
    manifest
}

#[allow(dead_code)] // not every test target hashes files
pub fn sha256_of(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).unwrap();
    format!("{:x}", Sha256::digest(&bytes))
}
