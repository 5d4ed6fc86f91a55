//! Benchmark assembly: the condition matrix, sequence generation, manifests
//! and the train/test split.
//!
//! Every manifest entry is one sequence of `sequence_length` frames built by
//! chaining the particle generator, with image 2 of each step stored as the
//! next frame. Each sequence owns one counted image pair, its central pair
//! (`target_pair`), so a condition with `pairs_per_condition = P` holds `P`
//! entries. Sequences are seeded independently and never share files, which
//! lets the split assign whole sequences without leaking frames.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentError, AugmentRanges};
use crate::flowfield::{
    make_blasius_field, solve_blasius, BlasiusFieldParams, FieldError, VelocityField, BLASIUS_ETA_MAX,
    BLASIUS_SHOOT_TOL, BLASIUS_STEP,
};
use crate::ingest::{load_series, FieldSeries, FlowTag, LoadError};
use crate::io::{self, IoError};
use crate::particles::{generate_pair, ParticleEnsemble, ParticleError};
use crate::scale::{apply_scaling, ScalingSpec};

pub const DENSE: f64 = 0.01;
pub const MODERATE: f64 = 0.0025;
pub const SPARSE: f64 = 0.001;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("turbulent data directory {0} does not exist")]
    MissingData(PathBuf),
    #[error("{tag} needs {needed} snapshots for this condition, found {available}")]
    InsufficientSnapshots {
        tag: FlowTag,
        needed: usize,
        available: usize,
    },
    #[error("{tag} snapshots are {found:?} but the canvas is {canvas:?}")]
    CanvasMismatch {
        tag: FlowTag,
        found: (usize, usize),
        canvas: (usize, usize),
    },
    #[error("cannot create {path}: {source}")]
    CreateDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest references {} missing files, first {:?}", .0.len(), .0.first())]
    MissingFiles(Vec<PathBuf>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlasiusConfig {
    pub eta_max: f64,
    pub step: f64,
    pub shoot_tol: f64,
    pub field: BlasiusFieldParams,
}

impl Default for BlasiusConfig {
    fn default() -> Self {
        Self {
            eta_max: BLASIUS_ETA_MAX,
            step: BLASIUS_STEP,
            shoot_tol: BLASIUS_SHOOT_TOL,
            field: BlasiusFieldParams::default(),
        }
    }
}

impl BlasiusConfig {
    pub fn build_field(&self, width: usize, height: usize) -> Result<VelocityField, FieldError> {
        let profile = solve_blasius(self.eta_max, self.step, self.shoot_tol)?;
        make_blasius_field(&profile, width, height, &self.field)
    }
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub canvas: (usize, usize),
    pub pairs_per_condition: usize,
    pub sequence_length: usize,
    pub global_seed: u64,
    pub flows: Vec<FlowTag>,
    pub densities: Vec<f64>,
    pub turbulent_factors: Vec<u32>,
    /// Crop origin for scaled conditions; `None` centres the crop.
    pub region_origin: Option<(usize, usize)>,
    pub blasius: BlasiusConfig,
    pub augment: Option<AugmentRanges>,
    pub train_fraction: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            canvas: (256, 256),
            pairs_per_condition: 500,
            sequence_length: 4,
            global_seed: 0,
            flows: vec![
                FlowTag::Mixing,
                FlowTag::Mhd,
                FlowTag::Isotropic,
                FlowTag::Channel,
                FlowTag::Blasius,
            ],
            densities: vec![DENSE, MODERATE, SPARSE],
            turbulent_factors: vec![1, 4, 8],
            region_origin: None,
            blasius: BlasiusConfig::default(),
            augment: None,
            train_fraction: 0.7,
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Config(m));
        if self.sequence_length < 2 {
            return bad(format!("sequence_length must be >= 2, got {}", self.sequence_length));
        }
        if self.pairs_per_condition == 0 {
            return bad("pairs_per_condition must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.densities.iter().any(|d| !(*d > 0.0)) {
            return bad("densities must be positive".into());
        }
        for f in &self.turbulent_factors {
            ScalingSpec::for_factor(*f)?;
        }
        Ok(())
    }

    pub fn turbulent_tags(&self) -> Vec<FlowTag> {
        FlowTag::TURBULENT
            .into_iter()
            .filter(|t| self.flows.contains(t))
            .collect()
    }
}

/// One cell of the condition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCondition {
    pub id: String,
    pub flow_tag: FlowTag,
    pub density: f64,
    pub scaling: ScalingSpec,
    /// Velocity multiplier applied by the generator itself; 50 for the
    /// boundary layer, 1 otherwise (scaled conditions amplify via `scaling`).
    pub amplification: f64,
    pub pairs_per_condition: usize,
    pub sequence_length: usize,
    pub canvas: (usize, usize),
    pub augment: Option<AugmentRanges>,
    pub rng_seed: u64,
}

impl FlowCondition {
    /// Index of the evaluation pair inside each sequence.
    pub fn target_pair(&self) -> usize {
        (self.sequence_length - 2) / 2
    }

    /// Snapshots a turbulent condition consumes: one per pair, with every
    /// sequence advancing the start snapshot by one.
    pub fn snapshots_needed(&self) -> usize {
        self.pairs_per_condition + self.sequence_length - 2
    }
}

pub fn density_label(density: f64) -> String {
    if density == DENSE {
        "dense".into()
    } else if density == MODERATE {
        "moderate".into()
    } else if density == SPARSE {
        "sparse".into()
    } else {
        format!("ppp{}", density.to_string().replace('.', "p"))
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed derived from a parent seed and a label; independent of enumeration
/// order so subsets reproduce the same bytes.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ fnv1a(label))
}

/// The condition matrix in deterministic order: turbulent flows x densities
/// x factors, then the boundary layer x densities.
pub fn enumerate_conditions(config: &GenerateConfig) -> Vec<FlowCondition> {
    let mut out = Vec::new();
    let mut push = |tag: FlowTag, density: f64, scaling: ScalingSpec, amplification: f64, suffix: String| {
        let id = format!("{tag}_{}_{suffix}", density_label(density));
        out.push(FlowCondition {
            rng_seed: derive_seed(config.global_seed, &id),
            id,
            flow_tag: tag,
            density,
            scaling,
            amplification,
            pairs_per_condition: config.pairs_per_condition,
            sequence_length: config.sequence_length,
            canvas: config.canvas,
            augment: config.augment.clone(),
        });
    };
    for tag in config.turbulent_tags() {
        for &density in &config.densities {
            for &factor in &config.turbulent_factors {
                let mut spec = ScalingSpec::for_factor(factor).unwrap_or_else(|_| ScalingSpec::identity());
                if factor != 1 {
                    spec.region_origin = config.region_origin;
                }
                push(tag, density, spec, 1.0, format!("x{factor}"));
            }
        }
    }
    if config.flows.contains(&FlowTag::Blasius) {
        for &density in &config.densities {
            push(
                FlowTag::Blasius,
                density,
                ScalingSpec::identity(),
                config.blasius.field.amplification,
                "base".into(),
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub condition_id: String,
    pub sequence_id: String,
    pub flow_tag: FlowTag,
    pub density: f64,
    pub scaling_factor: u32,
    /// Frame images, relative to the dataset root.
    pub frames: Vec<String>,
    /// Ground-truth flow from frame `k` to frame `k + 1`.
    pub flows: Vec<String>,
    /// Index into `flows` of the benchmark pair.
    pub target_pair: usize,
    /// Corrupted copies of `frames`; only for training.
    pub augmented_frames: Vec<String>,
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn target_flow(&self) -> &str {
        &self.flows[self.target_pair]
    }

    pub fn target_frames(&self) -> (&str, &str) {
        (&self.frames[self.target_pair], &self.frames[self.target_pair + 1])
    }

    pub fn referenced_paths(&self) -> impl Iterator<Item = &String> {
        self.frames.iter().chain(&self.flows).chain(&self.augmented_frames)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub toolkit_version: String,
    pub global_seed: u64,
    pub conditions: Vec<FlowCondition>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == Some(split)).count()
    }
}

pub fn sequence_id(index: usize) -> String {
    format!("seq_{index:05}")
}

fn plan_sequence(cond: &FlowCondition, index: usize) -> ManifestEntry {
    let seq = sequence_id(index);
    let base = format!("{}/{seq}", cond.id);
    let frames = (0..cond.sequence_length).map(|k| format!("{base}/frame_{k}.pgm")).collect();
    let flows = (0..cond.sequence_length - 1).map(|k| format!("{base}/flow_{k}.flo")).collect();
    let augmented_frames = if cond.augment.is_some() {
        (0..cond.sequence_length).map(|k| format!("{base}/frame_{k}_aug.pgm")).collect()
    } else {
        Vec::new()
    };
    ManifestEntry {
        condition_id: cond.id.clone(),
        sequence_id: seq,
        flow_tag: cond.flow_tag,
        density: cond.density,
        scaling_factor: cond.scaling.factor,
        frames,
        flows,
        target_pair: cond.target_pair(),
        augmented_frames,
        split: None,
    }
}

/// Manifest entries for a condition, without touching the filesystem.
pub fn plan_condition(cond: &FlowCondition) -> Vec<ManifestEntry> {
    (0..cond.pairs_per_condition).map(|s| plan_sequence(cond, s)).collect()
}

/// Full manifest (split applied) for a configuration, without writing files.
pub fn plan_manifest(config: &GenerateConfig) -> Result<DatasetManifest, GenError> {
    config.validate()?;
    let conditions = enumerate_conditions(config);
    let entries = conditions.iter().flat_map(plan_condition).collect();
    let manifest = DatasetManifest {
        toolkit_version: crate::TOOLKIT_VERSION.to_owned(),
        global_seed: config.global_seed,
        conditions,
        entries,
    };
    split(manifest, config.train_fraction, config.global_seed)
}

/// Where a condition's velocity fields come from.
pub enum FieldSource<'a> {
    /// Turbulent snapshots; sequence `s`, pair `k` uses snapshot `s + k`.
    Series(&'a FieldSeries),
    /// A steady field reused for every pair.
    Steady(&'a VelocityField),
}

fn create_dir(path: &Path) -> Result<(), GenError> {
    fs::create_dir_all(path).map_err(|source| GenError::CreateDir {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates and writes every sequence of one condition below `out_dir`.
pub fn generate_condition(
    cond: &FlowCondition,
    source: FieldSource<'_>,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, GenError> {
    let (w, h) = cond.canvas;
    let pairs_per_seq = cond.sequence_length - 1;
    let steady = match source {
        FieldSource::Steady(field) => {
            if field.dims() != cond.canvas {
                return Err(GenError::CanvasMismatch {
                    tag: cond.flow_tag,
                    found: field.dims(),
                    canvas: cond.canvas,
                });
            }
            Some(field.clone())
        }
        FieldSource::Series(series) => {
            let needed = cond.snapshots_needed();
            if series.len() < needed {
                return Err(GenError::InsufficientSnapshots {
                    tag: cond.flow_tag,
                    needed,
                    available: series.len(),
                });
            }
            if let Some(found) = series.dims().filter(|d| *d != cond.canvas) {
                return Err(GenError::CanvasMismatch {
                    tag: cond.flow_tag,
                    found,
                    canvas: cond.canvas,
                });
            }
            None
        }
    };
    // scaled snapshots, keyed by series index, pruned as sequences advance
    let mut cache: HashMap<usize, VelocityField> = HashMap::new();
    let mut entries = Vec::with_capacity(cond.pairs_per_condition);

    for s in 0..cond.pairs_per_condition {
        let entry = plan_sequence(cond, s);
        create_dir(&out_dir.join(&cond.id).join(&entry.sequence_id))?;
        let seq_seed = derive_seed(cond.rng_seed, &entry.sequence_id);
        let mut ensemble = ParticleEnsemble::seed(w, h, cond.density, seq_seed)?;

        cache.retain(|k, _| *k >= s);
        let mut frames = Vec::with_capacity(cond.sequence_length);
        for k in 0..pairs_per_seq {
            let field = match (&steady, &source) {
                (Some(f), _) => f,
                (None, FieldSource::Series(series)) => {
                    let idx = s + k;
                    if let Entry::Vacant(slot) = cache.entry(idx) {
                        slot.insert(apply_scaling(&series.snapshots[idx], &cond.scaling)?);
                    }
                    &cache[&idx]
                }
                (None, FieldSource::Steady(_)) => unreachable!("steady source always cached"),
            };
            let pair = generate_pair(&ensemble, field)?;
            if k == 0 {
                frames.push(pair.image1);
            }
            frames.push(pair.image2);
            io::write_flow(&out_dir.join(&entry.flows[k]), field)?;
            ensemble = pair.next;
        }
        for (img, path) in frames.iter().zip(&entry.frames) {
            io::write_image(&out_dir.join(path), img)?;
        }
        if let Some(ranges) = &cond.augment {
            let shared = ranges.sample(derive_seed(seq_seed, "augment"));
            for (k, (img, path)) in frames.iter().zip(&entry.augmented_frames).enumerate() {
                let spec = if ranges.independent_frames {
                    ranges.sample(derive_seed(seq_seed, &format!("augment_{k}")))
                } else {
                    shared.clone()
                };
                let (aug, _) = augment::apply(img, &spec)?;
                io::write_image(&out_dir.join(path), &aug)?;
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Assigns whole sequences to train/test per condition.
///
/// Train counts use cumulative rounding over conditions in manifest order,
/// so each condition is within one sequence of its exact share and the
/// dataset total is `round(train_fraction * N)`.
pub fn split(mut manifest: DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest, GenError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(GenError::Config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        groups
            .entry(e.condition_id.clone())
            .or_insert_with(|| {
                order.push(e.condition_id.clone());
                Vec::new()
            })
            .push(i);
    }
    let mut seen = 0usize;
    for id in &order {
        let members = &groups[id];
        let before = (train_fraction * seen as f64).round() as usize;
        seen += members.len();
        let after = (train_fraction * seen as f64).round() as usize;
        let n_train = after - before;

        let mut shuffled = members.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id));
        shuffled.shuffle(&mut rng);
        for (rank, &i) in shuffled.iter().enumerate() {
            manifest.entries[i].split = Some(if rank < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(manifest)
}

/// Generates the whole dataset under `out_dir` and writes `manifest.json`.
///
/// `data_dir` holds one sub-directory per turbulent flow tag; it may be
/// `None` only when the configuration contains no turbulent flows.
pub fn generate_dataset<F>(
    config: &GenerateConfig,
    data_dir: Option<&Path>,
    out_dir: &Path,
    on_condition: F,
) -> Result<DatasetManifest, GenError>
where
    F: Fn(&FlowCondition, usize) + Sync,
{
    config.validate()?;
    let conditions = enumerate_conditions(config);
    let (w, h) = config.canvas;

    let mut series: HashMap<FlowTag, FieldSeries> = HashMap::new();
    for tag in config.turbulent_tags() {
        let root = data_dir.ok_or_else(|| GenError::MissingData(PathBuf::from(tag.as_str())))?;
        let dir = root.join(tag.as_str());
        if !dir.is_dir() {
            return Err(GenError::MissingData(dir));
        }
        series.insert(tag, load_series(&dir, tag)?);
    }
    let blasius = if config.flows.contains(&FlowTag::Blasius) {
        Some(config.blasius.build_field(w, h)?)
    } else {
        None
    };

    create_dir(out_dir)?;
    let per_condition: Vec<Vec<ManifestEntry>> = conditions
        .par_iter()
        .map(|cond| {
            let source = match cond.flow_tag {
                FlowTag::Blasius => FieldSource::Steady(blasius.as_ref().expect("blasius field built")),
                tag => FieldSource::Series(&series[&tag]),
            };
            let entries = generate_condition(cond, source, out_dir)?;
            on_condition(cond, entries.len());
            Ok(entries)
        })
        .collect::<Result<_, GenError>>()?;

    let manifest = DatasetManifest {
        toolkit_version: crate::TOOLKIT_VERSION.to_owned(),
        global_seed: config.global_seed,
        conditions,
        entries: per_condition.into_iter().flatten().collect(),
    };
    let manifest = split(manifest, config.train_fraction, config.global_seed)?;
    let missing = io::missing_files(&manifest, out_dir);
    if !missing.is_empty() {
        return Err(GenError::MissingFiles(missing));
    }
    io::write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::make_uniform;
    use std::collections::HashSet;

    fn small_config() -> GenerateConfig {
        GenerateConfig {
            canvas: (48, 40),
            pairs_per_condition: 3,
            flows: vec![FlowTag::Blasius],
            ..GenerateConfig::default()
        }
    }

    #[test]
    fn condition_matrix_sizes() {
        let all = enumerate_conditions(&GenerateConfig::default());
        assert_eq!(all.len(), 39);
        let ids: HashSet<_> = all.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids.len(), 39);
        let turb = GenerateConfig {
            flows: FlowTag::TURBULENT.to_vec(),
            ..GenerateConfig::default()
        };
        assert_eq!(enumerate_conditions(&turb).len(), 36);
        let bl = enumerate_conditions(&small_config());
        assert_eq!(bl.len(), 3);
        assert!(bl.iter().all(|c| c.scaling.factor == 1 && c.amplification == 50.0));
        assert!(all.iter().filter(|c| c.flow_tag == FlowTag::Blasius).all(|c| c.scaling == ScalingSpec::identity()));
    }

    #[test]
    fn seeds_do_not_depend_on_subset() {
        let all = enumerate_conditions(&GenerateConfig::default());
        let bl = enumerate_conditions(&GenerateConfig {
            flows: vec![FlowTag::Blasius],
            ..GenerateConfig::default()
        });
        for c in &bl {
            let same = all.iter().find(|a| a.id == c.id).unwrap();
            assert_eq!(same, c);
        }
    }

    #[test]
    fn full_scale_counts_by_arithmetic() {
        let m = plan_manifest(&GenerateConfig::default()).unwrap();
        assert_eq!(m.entries.len(), 19_500);
        assert_eq!(m.count(Split::Train), 13_650);
        assert_eq!(m.count(Split::Test), 5_850);
        for c in &m.conditions {
            let n = m.entries.iter().filter(|e| e.condition_id == c.id && e.split == Some(Split::Train)).count();
            assert_eq!(n, 350);
        }
    }

    #[test]
    fn split_partitions_with_rounding() {
        let config = GenerateConfig {
            pairs_per_condition: 5,
            ..GenerateConfig::default()
        };
        let m = plan_manifest(&config).unwrap();
        let train = m.count(Split::Train);
        assert_eq!(train + m.count(Split::Test), 195);
        assert!((train as i64 - 136).abs() <= 1, "train {train}");
        for c in &m.conditions {
            let n = m.entries.iter().filter(|e| e.condition_id == c.id && e.split == Some(Split::Train)).count();
            assert!((n as f64 - 3.5).abs() <= 1.0);
        }
        let unsplit = DatasetManifest { entries: m.entries.iter().cloned().map(|mut e| { e.split = None; e }).collect(), ..m.clone() };
        assert!(split(unsplit.clone(), 1.0, 0).is_err());
        assert!(split(unsplit.clone(), 0.0, 0).is_err());
        assert_eq!(split(unsplit, 0.7, config.global_seed).unwrap(), m);
    }

    #[test]
    fn sequence_layout() {
        let cond = &enumerate_conditions(&small_config())[0];
        let e = &plan_condition(cond)[1];
        assert_eq!(e.frames.len(), 4);
        assert_eq!(e.flows.len(), 3);
        assert_eq!(e.target_pair, 1);
        assert_eq!(e.frames[0], "blasius_dense_base/seq_00001/frame_0.pgm");
        assert_eq!(e.target_flow(), "blasius_dense_base/seq_00001/flow_1.flo");
        let two = FlowCondition {
            sequence_length: 2,
            ..cond.clone()
        };
        assert_eq!(two.target_pair(), 0);
        assert_eq!(two.snapshots_needed(), 3);
    }

    #[test]
    fn generates_and_reproduces() {
        let cond = &enumerate_conditions(&small_config())[0];
        let field = make_uniform(48, 40, 1.25, -0.5).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ea = generate_condition(cond, FieldSource::Steady(&field), a.path()).unwrap();
        let eb = generate_condition(cond, FieldSource::Steady(&field), b.path()).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(ea.len(), 3);
        for e in &ea {
            for p in e.referenced_paths() {
                assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap());
            }
            let gt = io::read_flow(&a.path().join(e.target_flow())).unwrap();
            let img = io::read_image(&a.path().join(&e.frames[0])).unwrap();
            assert_eq!(gt.dims(), (img.width, img.height));
            assert_eq!(gt.u()[0], 1.25);
        }
        let targets: HashSet<_> = ea.iter().map(|e| e.target_flow().to_owned()).collect();
        assert_eq!(targets.len(), 3);
    }

    #[test]
    fn turbulent_condition_checks_snapshots() {
        let config = GenerateConfig {
            canvas: (32, 32),
            pairs_per_condition: 4,
            flows: vec![FlowTag::Channel],
            ..GenerateConfig::default()
        };
        let cond = &enumerate_conditions(&config)[1];
        assert_eq!(cond.scaling.factor, 4);
        let short = FieldSeries::new(FlowTag::Channel, vec![make_uniform(32, 32, 0.5, 0.0).unwrap(); 5]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate_condition(cond, FieldSource::Series(&short), dir.path()),
            Err(GenError::InsufficientSnapshots { needed: 6, available: 5, .. })
        ));
        let wrong = FieldSeries::new(FlowTag::Channel, vec![make_uniform(16, 32, 0.5, 0.0).unwrap(); 6]);
        assert!(matches!(
            generate_condition(cond, FieldSource::Series(&wrong), dir.path()),
            Err(GenError::CanvasMismatch { .. })
        ));
        let ok = FieldSeries::new(
            FlowTag::Channel,
            (0..6).map(|k| make_uniform(32, 32, 0.5 + 0.1 * k as f64, 0.0).unwrap()).collect(),
        );
        let entries = generate_condition(cond, FieldSource::Series(&ok), dir.path()).unwrap();
        // sequence 2, pair 1 uses snapshot 3 amplified 4x
        let gt = io::read_flow(&dir.path().join(&entries[2].flows[1])).unwrap();
        assert!((gt.u()[0] - 4.0 * 0.8).abs() < 1e-6);
    }

    #[test]
    fn augmented_variants_written() {
        let config = GenerateConfig {
            augment: Some(AugmentRanges::default()),
            ..small_config()
        };
        let cond = &enumerate_conditions(&config)[0];
        let field = make_uniform(48, 40, 1.0, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let entries = generate_condition(cond, FieldSource::Steady(&field), dir.path()).unwrap();
        for e in &entries {
            assert_eq!(e.augmented_frames.len(), 4);
            for p in &e.augmented_frames {
                assert!(dir.path().join(p).is_file());
            }
        }
    }

    #[test]
    fn density_labels() {
        assert_eq!(density_label(0.01), "dense");
        assert_eq!(density_label(0.0025), "moderate");
        assert_eq!(density_label(0.001), "sparse");
        assert_eq!(density_label(0.005), "ppp0p005");
    }
}
