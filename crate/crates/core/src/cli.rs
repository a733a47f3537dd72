//! Command-line front end. Every subcommand is a pure function of its
//! inputs, the run configuration and the seed; each writes a manifest next to
//! its outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::segment_ground;
use crate::io::{
    manifest_path_for, read_calib, read_cloud, read_featmap, read_json, read_labels, read_mask, read_matrix,
    read_trace, to_json_bytes, trace_to_jsonl, write_atomic, write_json, write_mask, write_scene_dir, LossReport,
    Manifest, RunSummary, SceneFiles,
};
use crate::objective::{infonce, negative_sets, similarity_matrix, FeatureMatrix, NegativeSets};
use crate::simulator::{
    expected_uniform_same_class_fraction, generate_scene, run_pretrain_with, same_class_fraction, unit_classes,
    RunConfig, TrainMode,
};
use crate::units::{build_units, UnitSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

#[derive(Debug, Parser)]
#[command(name = "lidar-units", version, about = "Contrastive units and cross-modal pre-training for LiDAR")]
pub struct Cli {
    /// Run configuration (JSON); omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: cloud, labels, objects, calibration, feature maps.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment ground points; writes one byte per point.
    Ground {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build contrastive units.
    Units(UnitsArgs),
    /// Similarity-balanced negative sets for a unit set.
    Pairs {
        #[arg(long)]
        units: PathBuf,
        /// Negative budget L; defaults to half the batch.
        #[arg(long)]
        negatives: Option<usize>,
        /// Per-point class labels, enables the same-class report.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the bidirectional InfoNCE loss and its gradients.
    Loss {
        /// Point features, a JSON array of rows.
        #[arg(long)]
        point: PathBuf,
        /// Image features, a JSON array of rows.
        #[arg(long)]
        image: PathBuf,
        /// Negative sets JSON; computed from image similarity when absent.
        #[arg(long)]
        sets: Option<PathBuf>,
        #[arg(long)]
        negatives: Option<usize>,
        /// Temperature; defaults to the configured one.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run pre-training on synthetic scenes.
    Pretrain {
        #[arg(long)]
        mode: Option<TrainMode>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge run traces into one CSV of per-step metrics.
    Report {
        #[arg(long = "trace", required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct UnitsArgs {
    /// Synthetic scene directory supplying cloud, calibration and feature maps.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, required_unless_present = "scene")]
    pub cloud: Option<PathBuf>,
    #[arg(long, required_unless_present = "scene")]
    pub calib: Option<PathBuf>,
    /// One fused feature map per camera, in calibration order.
    #[arg(long = "featmap", num_args = 1..)]
    pub featmaps: Vec<PathBuf>,
    /// Ground mask; segmented from the cloud when absent.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Same-class statistics of a set of negative sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairsReport {
    pub units: usize,
    pub budget: usize,
    pub same_class_fraction: Option<f64>,
    pub uniform_expectation: Option<f64>,
}

impl Cli {
    /// Effective configuration: file (or defaults) with the seed override.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn manifest(command: &str, cfg: &RunConfig) -> Result<Manifest> {
    Ok(Manifest::new(command, cfg.seed, serde_json::to_value(cfg)?))
}

fn finish(mut m: Manifest, inputs: &[&Path], outputs: &[&Path], at: &Path) -> Result<()> {
    for p in inputs {
        m.add_input(p)?;
    }
    for p in outputs {
        m.add_output(p)?;
    }
    m.write(manifest_path_for(at))
}

/// Runs one parsed invocation, writing human output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Synth { out } => {
            let scene = generate_scene(&cfg.scene, &cfg.render, cfg.seed)?;
            let files = write_scene_dir(&scene, out)?;
            log::info!("synth: {} points, {} objects", scene.cloud.len(), scene.objects.len());
            finish(manifest("synth", &cfg)?, &[], &files.all(), out)?;
            writeln!(stdout, "{} points, {} objects, {} cameras", scene.cloud.len(), scene.objects.len(), scene.calibs.len())?;
        }
        Command::Ground { cloud, out } => {
            let pc = read_cloud(cloud)?;
            let mask = segment_ground(&pc, &cfg.ground);
            write_mask(&mask, out)?;
            finish(manifest("ground", &cfg)?, &[cloud], &[out], out)?;
            writeln!(stdout, "{} of {} points are ground", mask.count(), mask.len())?;
        }
        Command::Units(args) => {
            let (cloud_path, calib_path, map_paths) = match &args.scene {
                Some(dir) => {
                    let files = SceneFiles::discover(dir)?;
                    (
                        args.cloud.clone().unwrap_or(files.cloud),
                        args.calib.clone().unwrap_or(files.calib),
                        if args.featmaps.is_empty() { files.featmaps } else { args.featmaps.clone() },
                    )
                }
                None => (
                    args.cloud.clone().expect("required by clap"),
                    args.calib.clone().expect("required by clap"),
                    args.featmaps.clone(),
                ),
            };
            let cloud = read_cloud(&cloud_path)?;
            let calibs = read_calib(&calib_path)?;
            let maps = map_paths.iter().map(read_featmap).collect::<Result<Vec<_>>>()?;
            let mask = match &args.mask {
                Some(p) => read_mask(p)?,
                None => segment_ground(&cloud, &cfg.ground),
            };
            let units = build_units(&cloud, &mask, &calibs, &maps, &cfg.units)?;
            write_json(&units, &args.out)?;
            let mut inputs: Vec<&Path> = vec![&cloud_path, &calib_path];
            inputs.extend(map_paths.iter().map(PathBuf::as_path));
            inputs.extend(args.mask.as_deref());
            finish(manifest("units", &cfg)?, &inputs, &[&args.out], &args.out)?;
            writeln!(stdout, "{} units", units.len())?;
        }
        Command::Pairs {
            units,
            negatives,
            labels,
            out,
        } => {
            let set: UnitSet = read_json(units)?;
            let feats = image_features(&set)?;
            let budget = negatives.unwrap_or_else(|| cfg.train.budget(set.len()));
            let sets = negative_sets(&similarity_matrix(&feats)?, budget)?;
            write_json(&sets, out)?;
            let mut report = PairsReport {
                units: set.len(),
                budget,
                same_class_fraction: None,
                uniform_expectation: None,
            };
            if let Some(lp) = labels {
                let classes = unit_classes(&set, &read_labels(lp)?)?;
                report.same_class_fraction = same_class_fraction(&sets, &classes);
                report.uniform_expectation = expected_uniform_same_class_fraction(&classes);
            }
            let mut inputs: Vec<&Path> = vec![units];
            inputs.extend(labels.as_deref());
            finish(manifest("pairs", &cfg)?, &inputs, &[out], out)?;
            stdout.write_all(&to_json_bytes(&report)?)?;
        }
        Command::Loss {
            point,
            image,
            sets,
            negatives,
            tau,
            out,
        } => {
            let p = read_matrix(point)?;
            let i = read_matrix(image)?;
            let s: NegativeSets = match sets {
                Some(path) => read_json(path)?,
                None => {
                    let budget = negatives.unwrap_or_else(|| cfg.train.budget(i.rows()));
                    negative_sets(&similarity_matrix(&i)?, budget)?
                }
            };
            let tau = tau.unwrap_or(cfg.train.tau);
            let loss = infonce(&p, &i, &s, tau)?;
            if let Some(out) = out {
                write_json(&LossReport::new(&loss, tau), out)?;
                let mut inputs: Vec<&Path> = vec![point, image];
                inputs.extend(sets.as_deref());
                finish(manifest("loss", &cfg)?, &inputs, &[out], out)?;
            }
            writeln!(stdout, "{:.6}", loss.value)?;
        }
        Command::Pretrain { mode, steps, out } => {
            let mut cfg = cfg.clone();
            if let Some(m) = mode {
                cfg.train.mode = *m;
            }
            if let Some(s) = steps {
                cfg.train.steps = *s;
            }
            std::fs::create_dir_all(out)?;
            let trace = run_pretrain_with(&cfg, |r| {
                log::info!(
                    "step {} loss {:.6} accuracy {:.4} alignment {:.4}",
                    r.step,
                    r.loss,
                    r.contrastive_accuracy,
                    r.alignment_score
                )
            })?;
            let trace_path = out.join("trace.jsonl");
            let summary_path = out.join("summary.json");
            write_atomic(&trace_path, &trace_to_jsonl(&trace.records)?)?;
            let summary = RunSummary::new(&trace)?;
            write_json(&summary, &summary_path)?;
            finish(manifest("pretrain", &cfg)?, &[], &[&trace_path, &summary_path], out)?;
            writeln!(
                stdout,
                "{:?}: {} steps, accuracy {:.4} -> {:.4}, alignment {:.4} -> {:.4}",
                trace.mode,
                summary.steps,
                summary.initial.contrastive_accuracy,
                summary.last.contrastive_accuracy,
                summary.initial.alignment_score,
                summary.last.alignment_score
            )?;
        }
        Command::Report { traces, out } => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["run", "step", "loss", "contrastive_accuracy", "alignment_score", "units"])
                .map_err(csv_err)?;
            for path in traces {
                let run = path.display().to_string();
                for r in read_trace(path)? {
                    w.write_record([
                        run.clone(),
                        r.step.to_string(),
                        r.loss.to_string(),
                        r.contrastive_accuracy.to_string(),
                        r.alignment_score.to_string(),
                        r.units.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            write_atomic(out, &bytes)?;
            let inputs: Vec<&Path> = traces.iter().map(PathBuf::as_path).collect();
            finish(manifest("report", &cfg)?, &inputs, &[out], out)?;
            writeln!(stdout, "{} traces merged", traces.len())?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `B x C` matrix of the units' image features.
pub fn image_features(set: &UnitSet) -> Result<FeatureMatrix> {
    if set.is_empty() {
        return Err(Error::InsufficientSamplingSpace { found: 0 });
    }
    let rows: Vec<&[f64]> = set.units.iter().map(|u| u.image_feature.as_slice()).collect();
    FeatureMatrix::from_rows(&rows)
}

/// Installs the stderr logger according to `UNITS_LOG` (quiet, info, debug).
pub fn init_logging() {
    let level = match std::env::var("UNITS_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs, and returns the process exit code. Diagnostics go to
/// stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    match run(&cli, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
