//! Command-line front end: `generate`, `estimate`, `evaluate`, `stats`.
//!
//! Parameters resolve as defaults < `--config` JSON < flags, and the
//! resolved document is written next to the command's outputs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentRanges;
use crate::datasetgen::{self, DatasetManifest, GenError, GenerateConfig, ManifestEntry, Split, MANIFEST_FILE};
use crate::ingest::{self, FlowTag, LoadError};
use crate::io::{self, IoError};
use crate::metrics::{self, FlowPair, MetricError, PairScore, DEFAULT_EPSILON};
use crate::scale::ScalingSpec;
use crate::xcorr::{self, XcorrConfig};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const FAILURE_LOG: &str = "failures.log";

/// Everything a run depends on besides its input and output locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory holding one sub-directory of snapshots per turbulent flow.
    pub data_dir: Option<PathBuf>,
    pub generate: GenerateConfig,
    pub xcorr: XcorrConfig,
    pub epsilon: f64,
    /// Speed-bin edges for the report; `None` uses deciles of the data.
    pub bin_edges: Option<Vec<f64>>,
    /// Which manifest split `estimate` and `evaluate` operate on.
    pub split: SplitChoice,
    /// Estimate from the augmented frames when the dataset has them.
    pub use_augmented: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            generate: GenerateConfig::default(),
            xcorr: XcorrConfig::default(),
            epsilon: DEFAULT_EPSILON,
            bin_edges: None,
            split: SplitChoice::Test,
            use_augmented: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

impl SplitChoice {
    fn accepts(&self, entry: &ManifestEntry) -> bool {
        match self {
            SplitChoice::Train => entry.split == Some(Split::Train),
            SplitChoice::Test => entry.split == Some(Split::Test),
            SplitChoice::All => true,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pivbench", version, about = "Synthetic PIV benchmark generation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the image-pair dataset and its manifest.
    Generate(GenerateArgs),
    /// Predict flow for manifest pairs with the cross-correlation baseline.
    Estimate(EstimateArgs),
    /// Score predictions against ground truth (EPE, NEPE).
    Evaluate(EvaluateArgs),
    /// Print mean/std speed per flow and scaling.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores); outputs do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for the dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory with <tag>/<tag>_NNNNN.flo turbulent snapshots.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Only the three boundary-layer conditions; no turbulent data needed.
    #[arg(long)]
    pub blasius_only: bool,
    /// Sequences per condition [default: 500].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Frames per sequence [default: 4].
    #[arg(long)]
    pub sequence_length: Option<usize>,
    /// Global seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train share of each condition [default: 0.7].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Also write augmented frames with the default augmentation ranges.
    #[arg(long)]
    pub augment: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for predicted flow files.
    #[arg(long)]
    pub out: PathBuf,
    /// Interrogation window size [default: 32].
    #[arg(long)]
    pub window: Option<usize>,
    /// Window overlap fraction [default: 0.5].
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Manifest split to process [default: test].
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
    /// Use augmented frames when present.
    #[arg(long)]
    pub augmented: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of predictions mirroring the dataset layout.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report directory [default: the predictions directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// NEPE denominator offset [default: 1e-6].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Comma-separated speed-bin edges [default: deciles].
    #[arg(long, value_delimiter = ',')]
    pub bin_edges: Option<Vec<f64>>,
    /// Manifest split to score [default: test].
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory with <tag>/<tag>_NNNNN.flo turbulent snapshots.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Only the boundary-layer row.
    #[arg(long)]
    pub blasius_only: bool,
    /// Also write the grid as stats.csv plus the resolved config here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }

    /// Single-line JSON record for scripts.
    pub fn machine_line(&self) -> String {
        serde_json::json!({"error": self.kind(), "code": self.code(), "message": self.message()}).to_string()
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Config(m) => CliError::Usage(m),
            GenError::Field(f) => CliError::Internal(f.to_string()),
            GenError::Particle(p) => CliError::Internal(p.to_string()),
            GenError::Augment(a) => CliError::Usage(a.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Usage(e.kind().to_string()).machine_line());
            }
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            eprintln!("{}", e.machine_line());
            e.code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let common = match &command {
        Command::Generate(a) => &a.common,
        Command::Estimate(a) => &a.common,
        Command::Evaluate(a) => &a.common,
        Command::Stats(a) => &a.common,
    };
    let base = load_config(common.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| match command {
        Command::Generate(a) => cmd_generate(base, &a),
        Command::Estimate(a) => cmd_estimate(base, &a),
        Command::Evaluate(a) => cmd_evaluate(base, &a),
        Command::Stats(a) => cmd_stats(base, &a),
    })
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn write_resolved(dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    create_dir(dir)?;
    let mut text = serde_json::to_string_pretty(config).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(&dir.join(RESOLVED_CONFIG), &text)
}

pub fn resolve_generate(mut config: RunConfig, args: &GenerateArgs) -> RunConfig {
    let g = &mut config.generate;
    if let Some(p) = args.pairs {
        g.pairs_per_condition = p;
    }
    if let Some(l) = args.sequence_length {
        g.sequence_length = l;
    }
    if let Some(s) = args.seed {
        g.global_seed = s;
    }
    if let Some(f) = args.train_fraction {
        g.train_fraction = f;
    }
    if args.blasius_only {
        g.flows = vec![FlowTag::Blasius];
    }
    if args.augment && g.augment.is_none() {
        g.augment = Some(AugmentRanges::default());
    }
    if args.data_dir.is_some() {
        config.data_dir = args.data_dir.clone();
    }
    config
}

fn cmd_generate(base: RunConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let config = resolve_generate(base, args);
    config.generate.validate()?;
    if !config.generate.turbulent_tags().is_empty() && config.data_dir.is_none() {
        return Err(CliError::Usage(
            "turbulent flows need --data-dir (or pass --blasius-only)".into(),
        ));
    }
    write_resolved(&args.out, &config)?;
    let manifest = datasetgen::generate_dataset(&config.generate, config.data_dir.as_deref(), &args.out, |cond, n| {
        println!("condition {} sequences={n}", cond.id);
    })?;
    println!(
        "conditions={} pairs={} train={} test={}",
        manifest.conditions.len(),
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test)
    );
    Ok(())
}

fn read_dataset(dir: &Path) -> Result<DatasetManifest, CliError> {
    Ok(io::read_manifest(&dir.join(MANIFEST_FILE))?)
}

pub fn pair_id(entry: &ManifestEntry) -> String {
    format!("{}/{}", entry.condition_id, entry.sequence_id)
}

pub fn resolve_estimate(mut config: RunConfig, args: &EstimateArgs) -> RunConfig {
    if let Some(w) = args.window {
        config.xcorr.window = w;
    }
    if let Some(o) = args.overlap {
        config.xcorr.overlap = o;
    }
    if let Some(s) = args.split {
        config.split = s;
    }
    if args.augmented {
        config.use_augmented = true;
    }
    config
}

fn estimate_entry(dataset: &Path, out: &Path, entry: &ManifestEntry, config: &RunConfig) -> Result<(), String> {
    let t = entry.target_pair;
    let frames = if config.use_augmented && !entry.augmented_frames.is_empty() {
        &entry.augmented_frames
    } else {
        &entry.frames
    };
    let a = io::read_image(&dataset.join(&frames[t])).map_err(|e| e.to_string())?;
    let b = io::read_image(&dataset.join(&frames[t + 1])).map_err(|e| e.to_string())?;
    let flow = xcorr::estimate_flow(&a, &b, &config.xcorr).map_err(|e| e.to_string())?;
    let path = out.join(entry.target_flow());
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
    }
    io::write_flow(&path, &flow).map_err(|e| e.to_string())
}

fn cmd_estimate(base: RunConfig, args: &EstimateArgs) -> Result<(), CliError> {
    let config = resolve_estimate(base, args);
    config.xcorr.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = read_dataset(&args.dataset)?;
    write_resolved(&args.out, &config)?;
    let selected: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| config.split.accepts(e)).collect();
    let outcomes: Vec<Result<(), String>> = selected
        .par_iter()
        .map(|e| estimate_entry(&args.dataset, &args.out, e, &config))
        .collect();
    let mut log = String::new();
    for (entry, outcome) in selected.iter().zip(&outcomes) {
        if let Err(msg) = outcome {
            let _ = writeln!(log, "pair={} error={msg}", pair_id(entry));
        }
    }
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    println!("estimated={} failed={failed}", selected.len() - failed);
    if failed > 0 {
        eprint!("{log}");
        write_text(&args.out.join(FAILURE_LOG), &log)?;
        return Err(CliError::Data(format!(
            "{failed} of {} pairs failed, see {}",
            selected.len(),
            args.out.join(FAILURE_LOG).display()
        )));
    }
    Ok(())
}

pub fn resolve_evaluate(mut config: RunConfig, args: &EvaluateArgs) -> RunConfig {
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    if args.bin_edges.is_some() {
        config.bin_edges = args.bin_edges.clone();
    }
    if let Some(s) = args.split {
        config.split = s;
    }
    config
}

fn score_entry(dataset: &Path, predictions: &Path, entry: &ManifestEntry, epsilon: f64) -> Result<PairScore, CliError> {
    let gt = io::read_flow(&dataset.join(entry.target_flow()))?;
    let pred = io::read_flow(&predictions.join(entry.target_flow()))?;
    let pair = FlowPair::new(&pred, &gt)?;
    Ok(PairScore::compute(
        pair_id(entry),
        entry.condition_id.clone(),
        entry.flow_tag,
        entry.density,
        entry.scaling_factor,
        pair,
        epsilon,
    )?)
}

fn cmd_evaluate(base: RunConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    let config = resolve_evaluate(base, args);
    if !(config.epsilon > 0.0) {
        return Err(CliError::Usage(format!("epsilon must be > 0, got {}", config.epsilon)));
    }
    let manifest = read_dataset(&args.dataset)?;
    let selected: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| config.split.accepts(e)).collect();
    if selected.is_empty() {
        return Err(CliError::Data("no manifest entries in the selected split".into()));
    }
    let missing: Vec<&ManifestEntry> = selected
        .iter()
        .copied()
        .filter(|e| !args.predictions.join(e.target_flow()).is_file())
        .collect();
    if !missing.is_empty() {
        for e in &missing {
            eprintln!("missing prediction pair={} path={}", pair_id(e), args.predictions.join(e.target_flow()).display());
        }
        return Err(CliError::Data(format!("{} predictions missing", missing.len())));
    }
    let scores: Vec<PairScore> = selected
        .par_iter()
        .map(|e| score_entry(&args.dataset, &args.predictions, e, config.epsilon))
        .collect::<Result<_, _>>()?;
    let edges = match &config.bin_edges {
        Some(edges) => edges.clone(),
        None => metrics::decile_edges(&scores.iter().map(|s| s.mean_gt_speed).collect::<Vec<_>>()),
    };
    let report = metrics::binned_report(scores, &edges).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = args.out.clone().unwrap_or_else(|| args.predictions.clone());
    write_resolved(&out, &config)?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_text(&out.join("per_pair.csv"), &report.per_pair_csv())?;
    let summary = report.summary_text();
    write_text(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// One row of the speed statistics grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub flow: FlowTag,
    pub factor: u32,
    pub mean: f64,
    pub std: f64,
}

/// Mean/std rows for every available flow: turbulent flows at factor 1 and
/// each configured factor, the boundary layer at factor 1.
pub fn compute_stats(config: &RunConfig) -> Result<Vec<StatsRow>, CliError> {
    let g = &config.generate;
    let mut rows = Vec::new();
    for tag in g.turbulent_tags() {
        let Some(root) = &config.data_dir else { break };
        let dir = root.join(tag.as_str());
        if !dir.is_dir() {
            eprintln!("skipping {tag}: {} not found", dir.display());
            continue;
        }
        let series = ingest::load_series(&dir, tag)?;
        let mut factors = vec![1u32];
        factors.extend(g.turbulent_factors.iter().copied().filter(|f| *f != 1));
        for factor in factors {
            let mut spec = ScalingSpec::for_factor(factor).map_err(|e| CliError::Usage(e.to_string()))?;
            if let (Some(origin), true) = (g.region_origin, factor > 1) {
                spec = spec.with_origin(origin);
            }
            let (mean, std) = ingest::series_stats(&series, &spec).map_err(|e| CliError::Data(format!("{tag}: {e}")))?;
            rows.push(StatsRow { flow: tag, factor, mean, std });
        }
    }
    if g.flows.contains(&FlowTag::Blasius) {
        let (w, h) = g.canvas;
        let field = g.blasius.build_field(w, h).map_err(|e| CliError::Internal(e.to_string()))?;
        let (mean, std) = ingest::speed_stats(std::slice::from_ref(&field));
        rows.push(StatsRow {
            flow: FlowTag::Blasius,
            factor: 1,
            mean,
            std,
        });
    }
    Ok(rows)
}

pub fn stats_table(rows: &[StatsRow]) -> String {
    let mut out = format!("{:<10} {:>7} {:>10} {:>10}\n", "flow", "scaling", "mean", "std");
    for r in rows {
        let _ = writeln!(out, "{:<10} {:>7} {:>10.4} {:>10.4}", r.flow, format!("x{}", r.factor), r.mean, r.std);
    }
    out
}

fn cmd_stats(mut config: RunConfig, args: &StatsArgs) -> Result<(), CliError> {
    if args.data_dir.is_some() {
        config.data_dir = args.data_dir.clone();
    }
    if args.blasius_only {
        config.generate.flows = vec![FlowTag::Blasius];
    }
    let rows = compute_stats(&config)?;
    if rows.is_empty() {
        return Err(CliError::Data("no flow data available; pass --data-dir or --blasius-only".into()));
    }
    print!("{}", stats_table(&rows));
    if let Some(out) = &args.out {
        write_resolved(out, &config)?;
        let mut csv = String::from("flow,scaling,mean,std\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{}", r.flow, r.factor, r.mean, r.std);
        }
        write_text(&out.join("stats.csv"), &csv)?;
    }
    Ok(())
}
