//! `nightforge`: synthesize paired low-light RGB-D datasets from daylight
//! inputs, verify their manifests, apply the guidance-fusion kernel, and
//! score depth predictions.
//!
//! Exit codes: 0 success, 1 configuration or manifest error (including
//! verification drift), 2 record failure under `--strict`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nightforge_core::depth::{self, Alignment, EvalConfig, MetricsReport};
use nightforge_core::fusion::{self, params_io};
use nightforge_core::io::pfm;
use nightforge_core::pipeline::{self, PipelineConfig, PipelineError, RunOptions};

#[derive(Parser)]
#[command(name = "nightforge", version, about = "Low-light RGB-D dataset synthesis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a paired low-light dataset from an input manifest.
    Synth(SynthArgs),
    /// Recompute hashes for a run manifest and report drift.
    Verify(VerifyArgs),
    /// Apply the guidance-fusion kernel to a single image.
    Fuse(FuseArgs),
    /// Score predicted depth maps against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Input manifest: one `rgb<TAB>depth` record per line.
    #[arg(long)]
    input: PathBuf,
    /// Directory of light-source patterns (PNG or PFM).
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML configuration file; omitted fields use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Abort the run if any record fails.
    #[arg(long)]
    strict: bool,
    /// Worker threads for the record pool.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Also write the grayscale guidance plane per record.
    #[arg(long)]
    emit_guidance: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to a `manifest.jsonl` written by `synth`.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Low-light image as a 3-channel PFM.
    #[arg(long)]
    input: PathBuf,
    /// Guidance plane as a 1-channel PFM.
    #[arg(long)]
    guidance: PathBuf,
    /// Fusion parameter file (see the parameter-file byte layout docs).
    #[arg(long)]
    params: PathBuf,
    /// Output PFM path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted depth PFMs.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of ground-truth depth PFMs with matching file names.
    #[arg(long)]
    gt_dir: PathBuf,
    /// Upper limit on ground-truth depth in meters.
    #[arg(long)]
    max_depth: f64,
    /// Lower limit on ground-truth depth in meters.
    #[arg(long, default_value_t = 1e-3)]
    min_depth: f64,
    /// Prediction alignment before scoring.
    #[arg(long, value_enum, default_value_t = AlignArg::None)]
    align: AlignArg,
    /// Where the JSON report is written.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    None,
    Median,
}

impl From<AlignArg> for Alignment {
    fn from(v: AlignArg) -> Self {
        match v {
            AlignArg::None => Alignment::None,
            AlignArg::Median => Alignment::Median,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err
                .downcast_ref::<PipelineError>()
                .map(|e| matches!(e, PipelineError::StrictFailure { .. }))
                .unwrap_or(false)
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Verify(args) => verify(args),
        Command::Fuse(args) => fuse(args),
        Command::Eval(args) => eval(args),
    }
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_toml_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(assets) = args.assets {
        cfg.asset_dir = assets;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.global_seed = seed;
    }
    if args.emit_guidance {
        cfg.emit_guidance = true;
    }
    if cfg.asset_dir.as_os_str().is_empty() {
        bail!("no asset directory: pass --assets or set asset_dir in the config");
    }
    if cfg.output_dir.as_os_str().is_empty() {
        bail!("no output directory: pass --out or set output_dir in the config");
    }

    let opts = RunOptions {
        strict: args.strict,
        workers: args.workers,
    };
    let outcome = pipeline::run_dataset(&args.input, &cfg, &opts)?;
    for failure in &outcome.failures {
        eprintln!(
            "record {} failed ({}): {}",
            failure.index, failure.rgb, failure.error
        );
    }
    println!(
        "synthesized {} pairs ({} failed) -> {}",
        outcome.manifest.records.len(),
        outcome.failures.len(),
        outcome.manifest_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let report = pipeline::verify_manifest(&args.manifest)?;
    for drift in &report.drifted {
        println!(
            "drift: {} expected {} got {}",
            drift.path, drift.expected_sha256, drift.actual
        );
    }
    println!(
        "verified {} files, {} drifted",
        report.files_checked,
        report.drifted.len()
    );
    if report.clean() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn fuse(args: FuseArgs) -> Result<ExitCode> {
    let image = pfm::read_pfm(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let guidance = pfm::read_pfm(&args.guidance)
        .with_context(|| format!("reading {}", args.guidance.display()))?;
    let params = params_io::read_params(&args.params)
        .with_context(|| format!("reading {}", args.params.display()))?;

    let stacked = fusion::concat_aux(&image, &guidance)?;
    let (_, _, c_in) = stacked.dim();
    let (params_c_in, _, c_out) = params.channels();
    if params_c_in != c_in {
        bail!(
            "parameter file expects {params_c_in} input channels, image + guidance give {c_in}"
        );
    }
    if c_out != 1 && c_out != 3 {
        bail!("parameter file produces {c_out} channels; PFM output supports 1 or 3");
    }
    let (output, _) = fusion::fusion_forward(&stacked, &params)?;
    pfm::write_pfm(&args.out, &output)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "fused {} + {} -> {}",
        args.input.display(),
        args.guidance.display(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalReportFile {
    min_depth: f64,
    max_depth: f64,
    alignment: Alignment,
    per_image: BTreeMap<String, MetricsReport>,
    aggregate: MetricsReport,
}

fn pfm_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.to_ascii_lowercase().ends_with(".pfm").then_some(name)
        })
        .collect();
    names.sort();
    Ok(names)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let cfg = EvalConfig {
        min_depth: args.min_depth,
        max_depth: args.max_depth,
        alignment: args.align.into(),
    };
    cfg.validate()?;

    let names = pfm_names(&args.pred_dir)?;
    if names.is_empty() {
        bail!("no .pfm files in {}", args.pred_dir.display());
    }

    let mut per_image = BTreeMap::new();
    let mut reports = Vec::new();
    for name in &names {
        let pred_path = args.pred_dir.join(name);
        let gt_path = args.gt_dir.join(name);
        if !gt_path.exists() {
            bail!("no ground truth for {name} in {}", args.gt_dir.display());
        }
        let pred = pfm::read_pfm_depth(&pred_path)
            .with_context(|| format!("reading {}", pred_path.display()))?;
        let gt = pfm::read_pfm_depth(&gt_path)
            .with_context(|| format!("reading {}", gt_path.display()))?;

        let scored = match cfg.alignment {
            Alignment::None => pred,
            Alignment::Median => {
                let mask = depth::valid_mask(&gt, &cfg);
                depth::align_median(&pred, &gt, &mask)
                    .with_context(|| format!("aligning {name}"))?
            }
        };
        let report = depth::compute_metrics(&scored, &gt, &cfg)
            .with_context(|| format!("scoring {name}"))?;
        per_image.insert(name.clone(), report);
        reports.push(report);
    }
    let aggregate = depth::aggregate(&reports)?;

    let file = EvalReportFile {
        min_depth: cfg.min_depth,
        max_depth: cfg.max_depth,
        alignment: cfg.alignment,
        per_image,
        aggregate,
    };
    std::fs::write(&args.report, serde_json::to_vec_pretty(&file)?)
        .with_context(|| format!("writing {}", args.report.display()))?;

    println!(
        "{} images | abs_rel {:.4} sq_rel {:.4} rmse {:.4} rmse_log {:.4} d1 {:.4} d2 {:.4} d3 {:.4}",
        reports.len(),
        aggregate.abs_rel,
        aggregate.sq_rel,
        aggregate.rmse,
        aggregate.rmse_log,
        aggregate.delta1,
        aggregate.delta2,
        aggregate.delta3
    );
    Ok(ExitCode::SUCCESS)
}
