//! Batch driver: read an input manifest, synthesize every record in
//! parallel, write outputs plus a reproduction manifest, and verify
//! previously written outputs against their recorded hashes.
//!
//! Each record's seed is a mix of the global seed and the record's line
//! index, so records are independent: a failing or re-run record never
//! changes any other record's output.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex_string;
use super::{synthesize_pair, PipelineConfig, PipelineError};
use crate::assets::AssetCatalog;
use crate::flare::FlareDraw;
use crate::io::{pfm, png};
use crate::noise::NoiseModel;
use crate::seed;

/// One input line: a daylight image and its depth map.
#[derive(Debug, Clone)]
pub struct InputRecord {
    pub rgb: PathBuf,
    pub depth: PathBuf,
}

/// Parse a tab-separated `rgb<TAB>depth` manifest. Relative paths resolve
/// against the manifest's directory; blank lines and `#` comments are
/// skipped.
pub fn read_input_manifest(path: &Path) -> Result<Vec<InputRecord>, PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        let (rgb, depth) = match (parts.next(), parts.next(), parts.next()) {
            (Some(rgb), Some(depth), None) => (rgb, depth),
            _ => {
                return Err(PipelineError::InvalidManifest {
                    what: format!(
                        "line {}: expected exactly two tab-separated paths",
                        line_no + 1
                    ),
                })
            }
        };
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        records.push(InputRecord {
            rgb: resolve(rgb),
            depth: resolve(depth),
        });
    }
    if records.is_empty() {
        return Err(PipelineError::InvalidManifest {
            what: "no records in input manifest".into(),
        });
    }
    Ok(records)
}

/// A written output file and its content hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce one record without re-sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub source_rgb: String,
    pub source_depth: String,
    pub per_image_seed: u64,
    pub flare: FlareDraw,
    pub noise: NoiseModel,
    pub config_digest: String,
    pub outputs: Vec<OutputFile>,
}

/// The run's reproduction manifest: one record per synthesized pair.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

/// A record that could not be synthesized; the rest of the run proceeds
/// unless strict mode is on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordFailure {
    pub index: usize,
    pub rgb: String,
    pub depth: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Fail the whole run if any record fails.
    pub strict: bool,
    /// Worker threads; `None` uses the default pool.
    pub workers: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub failures: Vec<RecordFailure>,
    pub manifest_path: PathBuf,
    pub report_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    n_ok: usize,
    n_failed: usize,
    config_digest: &'a str,
    failures: &'a [RecordFailure],
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "record".into())
}

fn process_record(
    index: usize,
    record: &InputRecord,
    catalog: &AssetCatalog,
    cfg: &PipelineConfig,
    digest: &str,
    out_dir: &Path,
) -> Result<ManifestRecord, PipelineError> {
    let day = png::read_rgb(&record.rgb)?;
    let depth = pfm::read_pfm_depth(&record.depth)?;
    let per_image_seed = seed::mix(cfg.global_seed, index as u64);
    let pair = synthesize_pair(
        record.rgb.to_string_lossy(),
        &day,
        &depth,
        catalog,
        cfg,
        per_image_seed,
    )?;

    let stem = format!("{index:06}_{}", file_stem(&record.rgb));
    let night_name = format!("{stem}_night.png");
    let depth_name = format!("{stem}_depth.pfm");
    png::write_rgb16(&out_dir.join(&night_name), &pair.night_rgb)?;
    pfm::write_pfm_depth(&out_dir.join(&depth_name), &pair.depth)?;

    let mut outputs = vec![
        OutputFile {
            sha256: sha256_file(&out_dir.join(&night_name))?,
            path: night_name,
        },
        OutputFile {
            sha256: sha256_file(&out_dir.join(&depth_name))?,
            path: depth_name,
        },
    ];
    if let Some(guidance) = &pair.guidance {
        let guidance_name = format!("{stem}_guidance.pfm");
        pfm::write_pfm(&out_dir.join(&guidance_name), guidance)?;
        outputs.push(OutputFile {
            sha256: sha256_file(&out_dir.join(&guidance_name))?,
            path: guidance_name,
        });
    }

    Ok(ManifestRecord {
        index,
        source_rgb: record.rgb.to_string_lossy().into_owned(),
        source_depth: record.depth.to_string_lossy().into_owned(),
        per_image_seed,
        flare: pair.draw,
        noise: pair.noise,
        config_digest: digest.to_string(),
        outputs,
    })
}

/// Synthesize every record of `input_manifest` under `cfg`.
///
/// Outputs land in `cfg.output_dir` together with `manifest.jsonl` (one
/// JSON record per line, written last) and `run_report.json`. Failed
/// records are excluded from the manifest; in strict mode any failure
/// aborts with an error after the report is written.
pub fn run_dataset(
    input_manifest: &Path,
    cfg: &PipelineConfig,
    opts: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let records = read_input_manifest(input_manifest)?;
    let catalog = AssetCatalog::load(&cfg.asset_dir)?;
    let out_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let digest = cfg.digest();

    let worker = |(index, record): (usize, &InputRecord)| {
        process_record(index, record, &catalog, cfg, &digest, &out_dir).map_err(|e| {
            RecordFailure {
                index,
                rgb: record.rgb.to_string_lossy().into_owned(),
                depth: record.depth.to_string_lossy().into_owned(),
                error: e.to_string(),
            }
        })
    };
    let results: Vec<Result<ManifestRecord, RecordFailure>> = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| PipelineError::InvalidConfig {
                what: format!("worker pool: {e}"),
            })?
            .install(|| records.par_iter().enumerate().map(worker).collect()),
        None => records.par_iter().enumerate().map(worker).collect(),
    };

    let mut manifest = Manifest::default();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(record) => manifest.records.push(record),
            Err(failure) => failures.push(failure),
        }
    }
    manifest.records.sort_by_key(|r| r.index);
    failures.sort_by_key(|f| f.index);

    let report_path = out_dir.join("run_report.json");
    let report = RunReport {
        n_ok: manifest.records.len(),
        n_failed: failures.len(),
        config_digest: &digest,
        failures: &failures,
    };
    std::fs::write(
        &report_path,
        serde_json::to_vec_pretty(&report).expect("report serializes"),
    )
    .map_err(|source| PipelineError::Io {
        path: report_path.clone(),
        source,
    })?;

    if opts.strict && !failures.is_empty() {
        return Err(PipelineError::StrictFailure {
            failed: failures.len(),
            total: records.len(),
        });
    }

    // manifest goes last so its presence marks a completed run
    let manifest_path = out_dir.join("manifest.jsonl");
    let mut file = File::create(&manifest_path).map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    for record in &manifest.records {
        serde_json::to_writer(&mut file, record).expect("record serializes");
        file.write_all(b"\n").map_err(|source| PipelineError::Io {
            path: manifest_path.clone(),
            source,
        })?;
    }

    Ok(RunOutcome {
        manifest,
        failures,
        manifest_path,
        report_path,
    })
}

/// Load a previously written `manifest.jsonl`.
pub fn read_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| PipelineError::InvalidManifest {
                what: format!("line {}: {e}", line_no + 1),
            })?;
        records.push(record);
    }
    Ok(Manifest { records })
}

/// One output whose bytes no longer match the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct DriftEntry {
    pub path: String,
    pub expected_sha256: String,
    pub actual: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub files_checked: usize,
    pub drifted: Vec<DriftEntry>,
}

impl VerifyReport {
    pub fn clean(&self) -> bool {
        self.drifted.is_empty()
    }
}

/// Recompute the hash of every output named by the manifest and report any
/// drift. Output paths resolve relative to the manifest's directory.
pub fn verify_manifest(manifest_path: &Path) -> Result<VerifyReport, PipelineError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut checked = 0usize;
    let mut drifted = Vec::new();
    for record in &manifest.records {
        for output in &record.outputs {
            checked += 1;
            let full = base.join(&output.path);
            match sha256_file(&full) {
                Ok(actual) if actual == output.sha256 => {}
                Ok(actual) => drifted.push(DriftEntry {
                    path: output.path.clone(),
                    expected_sha256: output.sha256.clone(),
                    actual,
                }),
                Err(_) => drifted.push(DriftEntry {
                    path: output.path.clone(),
                    expected_sha256: output.sha256.clone(),
                    actual: "missing or unreadable".into(),
                }),
            }
        }
    }
    Ok(VerifyReport {
        files_checked: checked,
        drifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn input_manifest_parses_tabs_and_resolves_relative_paths() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("list.tsv");
        std::fs::write(&manifest, "# comment\na.png\tdepth/a.pfm\n\n/abs/b.png\t/abs/b.pfm\n")
            .unwrap();
        let records = read_input_manifest(&manifest).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].rgb, dir.path().join("a.png"));
        assert_eq!(records[0].depth, dir.path().join("depth/a.pfm"));
        assert_eq!(records[1].rgb, PathBuf::from("/abs/b.png"));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("list.tsv");
        std::fs::write(&manifest, "only_one_field\n").unwrap();
        assert!(matches!(
            read_input_manifest(&manifest),
            Err(PipelineError::InvalidManifest { .. })
        ));
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("list.tsv");
        std::fs::write(&manifest, "\n# nothing\n").unwrap();
        assert!(matches!(
            read_input_manifest(&manifest),
            Err(PipelineError::InvalidManifest { .. })
        ));
    }
}
