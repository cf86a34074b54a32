//! Command-line front end: `synth`, `fuse`, `eval`, `validate`, `sc` and `impute`.
//!
//! Every command resolves a [`RunConfig`] from an optional JSON file plus
//! flags (flags win), writes it to `<out>/config.json`, and then runs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::consistency::self_consistency_with_matrix;
use crate::dataset::{load_dataset, slice_id, Dataset, DatasetManifest, SliceEntry};
use crate::error::{Error, Result};
use crate::eval::{evaluate, fsl_validate, summarize, write_fold_csv, write_metrics_csv, MetricRow, Stat};
use crate::forest::{impute_missing_with_matrix, ForestConfig};
use crate::fusion::{majority_vote, prepare, run_method, FusionConfig, Method};
use crate::image::{AnnotatedSlice, AnnotationSet, Mask};
use crate::pgm;
use crate::synthgen::{generate_benchmark, SynthSpec};

pub const SEED_ENV: &str = "CONSENSUS_FUSE_SEED";
pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const GT_SIDECAR: &str = "gt.pgm";

#[derive(Debug, Parser)]
#[command(name = "consensus-fuse", version, about = "Consensus segmentation from multiple expert annotations")]
pub struct Cli {
    /// Global seed; falls back to CONSENSUS_FUSE_SEED, then the config file, then 0.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark with a manifest.
    Synth(SynthArgs),
    /// Fuse the annotations of a dataset into consensus masks.
    Fuse(FuseArgs),
    /// Score consensus masks against ground truth.
    Eval(EvalArgs),
    /// Cross-validate a consensus with a forest trained on it.
    Validate(ValidateArgs),
    /// Self-consistency report only.
    Sc(DatasetArgs),
    /// Impute missing annotations only.
    Impute(DatasetArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of cases.
    #[arg(long)]
    pub n: Option<usize>,
    /// Probability that a case has one expert mask withheld.
    #[arg(long)]
    pub missing: Option<f64>,
    /// Image width in pixels.
    #[arg(long)]
    pub width: Option<usize>,
    /// Image height in pixels.
    #[arg(long)]
    pub height: Option<usize>,
    /// Simulated experts per case.
    #[arg(long)]
    pub experts: Option<usize>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ForestArgs {
    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Weight of the labeled term in the semi-supervised objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap size as a fraction of the training pixels.
    #[arg(long)]
    pub bagging: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// gcme, gcme-all, gcme-wssl, gcme-wsc or mv.
    #[arg(long)]
    pub method: Option<String>,
    /// Weight of the smoothness term.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Consensus source as `NAME=DIR` or `DIR` (named after the directory).
    /// DIR is a fuse output directory or a directory of slice masks.
    #[arg(long = "consensus")]
    pub consensus: Vec<String>,
    /// Ground-truth file name next to each slice image.
    #[arg(long)]
    pub gt: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Consensus to train and test on: a fuse output directory or a directory of slice masks.
    #[arg(long)]
    pub consensus: Option<String>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Weight of the smoothness term.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

/// Fully resolved parameters of one run; also the on-disk snapshot format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub method: String,
    pub n_cases: usize,
    pub missing_fraction: f64,
    pub folds: usize,
    pub consensus: Vec<String>,
    pub gt: String,
    pub synth: SynthSpec,
    pub forest: ForestConfig,
    pub fusion: FusionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            manifest: None,
            method: Method::Gcme.name().into(),
            n_cases: 30,
            missing_fraction: 1.0 / 3.0,
            folds: 5,
            consensus: Vec::new(),
            gt: GT_SIDECAR.into(),
            synth: SynthSpec::default(),
            forest: ForestConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    fn manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::InvalidInput(format!("`{}` needs --manifest", self.command)))
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_forest(cfg: &mut ForestConfig, f: &ForestArgs) {
    set(&mut cfg.n_trees, f.trees);
    set(&mut cfg.max_depth, f.depth);
    set(&mut cfg.alpha, f.alpha);
    set(&mut cfg.bagging_fraction, f.bagging);
}

/// Merges the config file (if any) with the flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    match &cli.command {
        Command::Synth(a) => {
            cfg.command = "synth".into();
            set(&mut cfg.n_cases, a.n);
            set(&mut cfg.missing_fraction, a.missing);
            set(&mut cfg.synth.width, a.width);
            set(&mut cfg.synth.height, a.height);
            set(&mut cfg.synth.n_experts, a.experts);
            set(&mut cfg.synth.noise_sigma, a.noise);
        }
        Command::Fuse(a) => {
            cfg.command = "fuse".into();
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            set(&mut cfg.method, a.method.clone());
            set(&mut cfg.fusion.lambda, a.lambda);
            apply_forest(&mut cfg.forest, &a.forest);
        }
        Command::Eval(a) => {
            cfg.command = "eval".into();
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            if !a.consensus.is_empty() {
                cfg.consensus = a.consensus.clone();
            }
            set(&mut cfg.gt, a.gt.clone());
        }
        Command::Validate(a) => {
            cfg.command = "validate".into();
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            if let Some(c) = &a.consensus {
                cfg.consensus = vec![c.clone()];
            }
            set(&mut cfg.folds, a.folds);
            set(&mut cfg.fusion.lambda, a.lambda);
            apply_forest(&mut cfg.forest, &a.forest);
        }
        Command::Sc(a) | Command::Impute(a) => {
            cfg.command = if matches!(cli.command, Command::Sc(_)) { "sc" } else { "impute" }.into();
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            apply_forest(&mut cfg.forest, &a.forest);
        }
    }
    cfg.forest.validate()?;
    cfg.fusion.validate()?;
    cfg.synth.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help or version; a closed stdout is not an error
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return Err(Error::Usage(first.to_string()));
        }
    };
    let cfg = resolve(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::InvalidInput(e.to_string()))?;
    pool.install(|| execute(&cfg, &cli.out))
}

/// Writes the config snapshot into `out`, then runs the command it names.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join(CONFIG_SNAPSHOT), &cfg.to_json()?)?;
    log::info!("{} -> {}", cfg.command, out.display());
    match cfg.command.as_str() {
        "synth" => cmd_synth(cfg, out),
        "fuse" => cmd_fuse(cfg, out),
        "eval" => cmd_eval(cfg, out),
        "validate" => cmd_validate(cfg, out),
        "sc" => cmd_sc(cfg, out),
        "impute" => cmd_impute(cfg, out),
        other => Err(Error::InvalidInput(format!("unknown command `{other}`"))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let manifest = generate_benchmark(out, cfg.n_cases, &cfg.synth, cfg.missing_fraction, cfg.seed)?;
    log::info!("{} cases, {} withheld masks", manifest.slices.len(), manifest.n_missing());
    Ok(())
}

/// Replaces every missing mask with its `withheld_<k>.pgm` sidecar.
pub fn with_withheld(dataset: &Dataset) -> Result<AnnotationSet> {
    let slices = dataset
        .annotations
        .slices()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let masks = s
                .masks
                .iter()
                .enumerate()
                .map(|(k, m)| match m {
                    Some(m) => Ok(Some(m.clone())),
                    None => pgm::read_mask(&dataset.sidecar_path(i, &format!("withheld_{k}.pgm"))).map(Some),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AnnotatedSlice {
                image: s.image.clone(),
                masks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AnnotationSet::new(dataset.annotations.experts().to_vec(), slices)
}

#[derive(Serialize)]
struct FuseReport<'a> {
    method: &'a str,
    n_slices: usize,
    #[serde(flatten)]
    fusion: Option<serde_json::Value>,
}

pub fn cmd_fuse(cfg: &RunConfig, out: &Path) -> Result<()> {
    let method = Method::parse(&cfg.method)?;
    let dataset = load_dataset(cfg.manifest()?)?;
    let annotations = match method {
        Method::GcmeAll => with_withheld(&dataset)?,
        _ => dataset.annotations.clone(),
    };
    let (consensus, fusion) = if method == Method::Mv {
        (majority_vote(&annotations, cfg.fusion.tie_label)?, None)
    } else {
        let prepared = prepare(&annotations, cfg.fusion.roi_margin)?;
        let output = run_method(method, &annotations, &prepared, &cfg.fusion, &cfg.forest, cfg.seed)?;
        let fusion = output.fusion.expect("graph-cut methods produce a fusion result");
        (output.consensus, Some(serde_json::from_str(&fusion.report_json()?)?))
    };
    let dir = out.join("consensus");
    create_dir(&dir)?;
    for (i, mask) in consensus.iter().enumerate() {
        pgm::write_mask(mask, &dir.join(format!("{}.pgm", slice_id(i))))?;
    }
    let report = FuseReport {
        method: method.name(),
        n_slices: consensus.len(),
        fusion,
    };
    write_text(&out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))
}

/// `(name, masks dir)` of one `--consensus` argument.
fn consensus_source(arg: &str) -> (String, PathBuf) {
    let (name, dir) = match arg.split_once('=') {
        Some((n, d)) => (n.to_string(), PathBuf::from(d)),
        None => {
            let d = PathBuf::from(arg);
            let n = d
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (n, d)
        }
    };
    let nested = dir.join("consensus");
    (name, if nested.is_dir() { nested } else { dir })
}

fn read_consensus(dir: &Path, n: usize) -> Result<Vec<Mask>> {
    (0..n)
        .map(|i| pgm::read_mask(&dir.join(format!("{}.pgm", slice_id(i)))))
        .collect()
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.consensus.is_empty() {
        return Err(Error::InvalidInput("`eval` needs at least one --consensus".into()));
    }
    let manifest_path = cfg.manifest()?;
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new(""));
    let n = manifest.slices.len();
    let truth: Vec<Mask> = manifest
        .slices
        .iter()
        .map(|s| {
            let image = root.join(&s.image);
            let dir = image.parent().unwrap_or(Path::new(""));
            pgm::read_mask(&dir.join(&cfg.gt))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for arg in &cfg.consensus {
        let (name, dir) = consensus_source(arg);
        let masks = read_consensus(&dir, n)?;
        for (i, (m, t)) in masks.iter().zip(&truth).enumerate() {
            rows.push(MetricRow {
                case_id: slice_id(i),
                method: name.clone(),
                report: evaluate(m, t)?,
            });
        }
    }
    let csv_path = out.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(&rows, &mut buf).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;
    let summary = summarize(&rows);
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))
}

#[derive(Serialize)]
struct FoldSummary {
    fold: usize,
    test_cases: Vec<String>,
    dice: Option<Stat>,
}

#[derive(Serialize)]
struct ValidateReport {
    folds: Vec<FoldSummary>,
    mean_dice: f64,
}

pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let [arg] = cfg.consensus.as_slice() else {
        return Err(Error::InvalidInput("`validate` needs exactly one --consensus".into()));
    };
    let dataset = load_dataset(cfg.manifest()?)?;
    let images: Vec<_> = dataset.annotations.slices().iter().map(|s| s.image.clone()).collect();
    let (_, dir) = consensus_source(arg);
    let consensus = read_consensus(&dir, images.len())?;
    let reports = fsl_validate(&images, &consensus, cfg.folds, &cfg.forest, cfg.fusion.lambda, cfg.seed)?;
    let ids: Vec<String> = (0..images.len()).map(slice_id).collect();
    let csv_path = out.join("folds.csv");
    let mut buf = Vec::new();
    write_fold_csv(&reports, &ids, &mut buf).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;
    let folds: Vec<FoldSummary> = reports
        .iter()
        .map(|r| FoldSummary {
            fold: r.fold,
            test_cases: r.test_cases.iter().map(|&c| ids[c].clone()).collect(),
            dice: Stat::of(&r.metrics.iter().map(|m| m.dice).collect::<Vec<_>>()),
        })
        .collect();
    let mean_dice = reports.iter().map(|r| r.mean_dice()).sum::<f64>() / reports.len() as f64;
    let report = ValidateReport { folds, mean_dice };
    write_text(&out.join("validate.json"), &(serde_json::to_string_pretty(&report)? + "\n"))
}

pub fn cmd_sc(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg.manifest()?)?;
    let prepared = prepare(&dataset.annotations, cfg.fusion.roi_margin)?;
    let report = self_consistency_with_matrix(&dataset.annotations, &prepared.matrix, &cfg.forest, cfg.seed)?;
    report.write(&out.join("sc.json"))
}

/// Writes every imputed mask under `out/imputed/` and a completed manifest
/// that points at them (present masks keep absolute paths to the originals).
pub fn cmd_impute(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg.manifest()?)?;
    let prepared = prepare(&dataset.annotations, cfg.fusion.roi_margin)?;
    let completed = impute_missing_with_matrix(&dataset.annotations, &prepared.matrix, &cfg.forest, cfg.seed)?;
    let root = dataset.root.canonicalize().map_err(|e| Error::io(&dataset.root, e))?;
    let dir = out.join("imputed");
    create_dir(&dir)?;
    let mut slices = Vec::with_capacity(dataset.manifest.slices.len());
    for (i, entry) in dataset.manifest.slices.iter().enumerate() {
        let mut masks = Vec::with_capacity(entry.masks.len());
        for (k, m) in entry.masks.iter().enumerate() {
            masks.push(Some(match m {
                Some(rel) => root.join(rel).to_string_lossy().into_owned(),
                None => {
                    let name = format!("{}_{}.pgm", slice_id(i), dataset.manifest.experts[k]);
                    let mask = completed.slices()[i].masks[k].as_ref().expect("imputed");
                    pgm::write_mask(mask, &dir.join(&name))?;
                    format!("imputed/{name}")
                }
            }));
        }
        slices.push(SliceEntry {
            image: root.join(&entry.image).to_string_lossy().into_owned(),
            masks,
        });
    }
    DatasetManifest {
        slices,
        ..dataset.manifest.clone()
    }
    .write(&out.join("manifest.json"))
}
