use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use autolabel::geom::meshio::parse_ply_points;
use autolabel::harness::{evaluate_manifest, generate, run_selflearn, PipelineConfig, RunOptions, MANIFEST_NAME};
use autolabel::register::{register_segment, ModelTarget};

#[derive(Parser)]
#[command(name = "autolabel", version, about = "Physics-aware synthetic datasets and multi-view self-labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of N records.
    Gen(Common),
    /// Grow a dataset to N' records by multi-view self-labeling.
    Selflearn {
        #[command(flatten)]
        common: Common,
        /// Manifest of the initial dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many iterations; the run stays resumable.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Register one segment (PLY points, world frame) against one model.
    Register {
        #[command(flatten)]
        common: Common,
        /// Model id in the configured library.
        #[arg(long)]
        model: String,
        #[arg(long)]
        segment: PathBuf,
    },
    /// Score detections and/or poses against a manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Detection exchange file (JSON lines).
        #[arg(long)]
        detections: Option<PathBuf>,
        /// JSON array of {object_id, pose}.
        #[arg(long)]
        poses: Option<PathBuf>,
    },
    /// Print the headline numbers of a report written by the other commands.
    Report {
        /// Report JSON file.
        input: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    if let Some(j) = c.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
    }
    Ok(cfg)
}

fn write_report(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), &text)?;
    println!("{text}");
    Ok(())
}

fn print_report(path: &Path) -> Result<()> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let num = |p: &str| v.pointer(p).and_then(|x| x.as_f64());
    let rows = [
        ("records", "/records"),
        ("audit failures", "/audit_failures"),
        ("detection success", "/detections/success_rate"),
        ("pose success", "/poses/success_rate"),
        ("mean rotation error (deg)", "/poses/mean_rotation_deg"),
        ("mean translation error (m)", "/poses/mean_translation_m"),
        ("raw confident mean IoU", "/raw_confident_mean_iou"),
        ("self-label mean IoU", "/self_label_mean_iou"),
        ("raw confident success", "/raw_confident/success_rate"),
        ("self-label success", "/self_labels/success_rate"),
    ];
    let mut any = false;
    for (label, p) in rows {
        if let Some(x) = num(p) {
            println!("{label:<28} {x:.4}");
            any = true;
        } else if let Some(a) = v.pointer(p).and_then(|x| x.as_array()) {
            println!("{label:<28} {}", a.len());
            any = true;
        }
    }
    if !any {
        bail!("{} is not a known report", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = load_config(&c)?;
            let summary = generate(&cfg, &c.out)?;
            write_report(&c.out, "generate.json", &summary)?;
            Ok(summary.audit_failures.is_empty())
        }
        Command::Selflearn {
            common,
            dataset,
            resume,
            max_iterations,
        } => {
            let cfg = load_config(&common)?;
            let report = run_selflearn(&cfg, &dataset, &common.out, &RunOptions { resume, max_iterations })?;
            write_report(&common.out, "selflearn.json", &report)?;
            log::info!("grown manifest: {}", common.out.join(MANIFEST_NAME).display());
            Ok(true)
        }
        Command::Register { common, model, segment } => {
            let cfg = load_config(&common)?;
            let lib = cfg.library()?;
            let target = ModelTarget::new(lib.get(&model)?, &cfg.register.congruent);
            let text = std::fs::read_to_string(&segment).with_context(|| format!("reading {}", segment.display()))?;
            let points = parse_ply_points(&text)?;
            let res = register_segment(&points, &target, &cfg.register, cfg.seed)?;
            let ok = res.residuals_monotone();
            write_report(&common.out, "register.json", &res)?;
            Ok(ok)
        }
        Command::Eval {
            common,
            dataset,
            detections,
            poses,
        } => {
            let cfg = load_config(&common)?;
            if detections.is_none() && poses.is_none() {
                bail!("nothing to evaluate: pass --detections and/or --poses");
            }
            let report = evaluate_manifest(&dataset, detections.as_deref(), poses.as_deref(), cfg.iou_threshold, &cfg.criteria)?;
            write_report(&common.out, "eval.json", &report)?;
            Ok(true)
        }
        Command::Report { input } => {
            print_report(&input)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("audit failures; see the report");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
