//! Loading pre-exported turbulence snapshots.
//!
//! Each flow type lives in its own directory of `.flo` slices named
//! `<tag>_<NNNNN>.flo`, e.g. `channel_00017.flo`. Other files are ignored.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowfield::{FieldError, VelocityField};
use crate::io::{self, IoError};
use crate::scale::{apply_scaling, ScalingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTag {
    Mixing,
    Mhd,
    Isotropic,
    Channel,
    Blasius,
}

impl FlowTag {
    pub const TURBULENT: [FlowTag; 4] = [FlowTag::Mixing, FlowTag::Mhd, FlowTag::Isotropic, FlowTag::Channel];

    pub fn as_str(&self) -> &'static str {
        match self {
            FlowTag::Mixing => "mixing",
            FlowTag::Mhd => "mhd",
            FlowTag::Isotropic => "isotropic",
            FlowTag::Channel => "channel",
            FlowTag::Blasius => "blasius",
        }
    }

    pub fn is_turbulent(&self) -> bool {
        !matches!(self, FlowTag::Blasius)
    }

    /// File name of snapshot `index`.
    pub fn snapshot_name(&self, index: usize) -> String {
        format!("{}_{index:05}.flo", self.as_str())
    }
}

impl fmt::Display for FlowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mixing" => Ok(FlowTag::Mixing),
            "mhd" => Ok(FlowTag::Mhd),
            "isotropic" => Ok(FlowTag::Isotropic),
            "channel" => Ok(FlowTag::Channel),
            "blasius" => Ok(FlowTag::Blasius),
            other => Err(format!("unknown flow tag {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("snapshot directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no {tag} snapshots in {dir}")]
    NoSnapshots { tag: FlowTag, dir: PathBuf },
    #[error("malformed snapshot {path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: IoError,
    },
    #[error("inconsistent dimensions in {path}: {found:?} vs {expected:?}")]
    InconsistentDimensions {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{tag} is generated analytically and has no snapshot files")]
    NotIngestible { tag: FlowTag },
    #[error("cannot list {path}: {source}")]
    Listing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Time-ordered snapshots of one flow type.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub name: FlowTag,
    pub snapshots: Vec<VelocityField>,
    pub dt_frames: f64,
}

impl FieldSeries {
    pub fn new(name: FlowTag, snapshots: Vec<VelocityField>) -> Self {
        Self {
            name,
            snapshots,
            dt_frames: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.snapshots.first().map(VelocityField::dims)
    }
}

fn parse_index(tag: FlowTag, file_name: &str) -> Option<usize> {
    let rest = file_name.strip_prefix(tag.as_str())?.strip_prefix('_')?;
    let digits = rest.strip_suffix(".flo")?;
    if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Snapshot files in `dir` for `tag`, sorted by index.
pub fn list_snapshots(dir: &Path, tag: FlowTag) -> Result<Vec<(usize, PathBuf)>, LoadError> {
    if !dir.is_dir() {
        return Err(LoadError::MissingDirectory(dir.to_path_buf()));
    }
    let listing = fs::read_dir(dir).map_err(|source| LoadError::Listing {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<(usize, PathBuf)> = listing
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name();
            parse_index(tag, name.to_str()?).map(|k| (k, e.path()))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_series(dir: &Path, tag: FlowTag) -> Result<FieldSeries, LoadError> {
    if !tag.is_turbulent() {
        return Err(LoadError::NotIngestible { tag });
    }
    let files = list_snapshots(dir, tag)?;
    if files.is_empty() {
        return Err(LoadError::NoSnapshots {
            tag,
            dir: dir.to_path_buf(),
        });
    }
    let loaded: Vec<VelocityField> = files
        .par_iter()
        .map(|(index, path)| {
            io::read_flow(path)
                .map(|f| f.with_time_index(*index))
                .map_err(|source| LoadError::Malformed {
                    path: path.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let expected = loaded[0].dims();
    for (field, (_, path)) in loaded.iter().zip(&files) {
        if field.dims() != expected {
            return Err(LoadError::InconsistentDimensions {
                path: path.clone(),
                expected,
                found: field.dims(),
            });
        }
    }
    Ok(FieldSeries::new(tag, loaded))
}

/// Mean and population standard deviation of per-pixel speed after
/// scaling, pooled over every snapshot.
pub fn series_stats(series: &FieldSeries, spec: &ScalingSpec) -> Result<(f64, f64), FieldError> {
    let scaled: Vec<VelocityField> = series
        .snapshots
        .iter()
        .map(|f| apply_scaling(f, spec))
        .collect::<Result<_, _>>()?;
    Ok(speed_stats(&scaled))
}

/// Pooled mean and population standard deviation of speed magnitude.
pub fn speed_stats(fields: &[VelocityField]) -> (f64, f64) {
    let n: usize = fields.iter().map(|f| f.width() * f.height()).sum();
    if n == 0 {
        return (0.0, 0.0);
    }
    let total: f64 = fields.iter().flat_map(|f| f.speeds()).sum();
    let mean = total / n as f64;
    let sq: f64 = fields
        .iter()
        .flat_map(|f| f.speeds())
        .map(|s| (s - mean) * (s - mean))
        .sum();
    (mean, (sq / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{make_lamb_oseen, make_uniform};
    use crate::scale::resample;

    fn write_series(dir: &Path, tag: FlowTag, fields: &[VelocityField]) {
        for (k, f) in fields.iter().enumerate() {
            io::write_flow(&dir.join(tag.snapshot_name(k)), f).unwrap();
        }
    }

    #[test]
    fn naming_convention() {
        assert_eq!(FlowTag::Channel.snapshot_name(17), "channel_00017.flo");
        assert_eq!(parse_index(FlowTag::Mhd, "mhd_00003.flo"), Some(3));
        assert_eq!(parse_index(FlowTag::Mhd, "mhd_003.flo"), None);
        assert_eq!(parse_index(FlowTag::Mhd, "mixing_00003.flo"), None);
        assert_eq!("MHD".parse::<FlowTag>().unwrap(), FlowTag::Mhd);
    }

    #[test]
    fn loads_sorted_series() {
        let dir = tempfile::tempdir().unwrap();
        let fields: Vec<_> = (0..3).map(|k| make_uniform(8, 6, k as f64, 0.0).unwrap()).collect();
        // write out of order plus a stray file
        for k in [2usize, 0, 1] {
            io::write_flow(&dir.path().join(FlowTag::Mixing.snapshot_name(k)), &fields[k]).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), b"x").unwrap();
        let s = load_series(dir.path(), FlowTag::Mixing).unwrap();
        assert_eq!(s.len(), 3);
        let idx: Vec<_> = s.snapshots.iter().map(|f| f.time_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(s.snapshots[2].u()[0], 2.0);
        assert_eq!(load_series(dir.path(), FlowTag::Mixing).unwrap(), s);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_series(&dir.path().join("nope"), FlowTag::Channel),
            Err(LoadError::MissingDirectory(_))
        ));
        assert!(matches!(load_series(dir.path(), FlowTag::Channel), Err(LoadError::NoSnapshots { .. })));
        assert!(matches!(load_series(dir.path(), FlowTag::Blasius), Err(LoadError::NotIngestible { .. })));

        write_series(dir.path(), FlowTag::Channel, &[make_uniform(8, 8, 1.0, 0.0).unwrap(), make_uniform(8, 8, 1.0, 0.0).unwrap()]);
        io::write_flow(&dir.path().join(FlowTag::Channel.snapshot_name(2)), &make_uniform(8, 9, 1.0, 0.0).unwrap()).unwrap();
        match load_series(dir.path(), FlowTag::Channel) {
            Err(LoadError::InconsistentDimensions { path, .. }) => {
                assert!(path.ends_with("channel_00002.flo"))
            }
            other => panic!("unexpected {other:?}"),
        }

        fs::write(dir.path().join(FlowTag::Channel.snapshot_name(3)), b"garbage").unwrap();
        assert!(matches!(load_series(dir.path(), FlowTag::Channel), Err(LoadError::Malformed { .. })));
    }

    #[test]
    fn uniform_series_stats() {
        let s = FieldSeries::new(FlowTag::Channel, vec![make_uniform(16, 16, 3.0, 4.0).unwrap(); 2]);
        assert_eq!(series_stats(&s, &ScalingSpec::identity()).unwrap(), (5.0, 0.0));
    }

    #[test]
    fn scaled_mean_is_exact_multiple() {
        let fields: Vec<_> = (0..3)
            .map(|k| make_lamb_oseen(64, 64, 30.0 + k as f64, 7.0, (31.0, 29.5)).unwrap())
            .collect();
        let s = FieldSeries::new(FlowTag::Isotropic, fields);
        for factor in [4u32, 8] {
            let spec = ScalingSpec::for_factor(factor).unwrap();
            let (mean, std) = series_stats(&s, &spec).unwrap();
            let base: Vec<_> = s.snapshots.iter().map(|f| resample(f, &spec).unwrap()).collect();
            let (base_mean, base_std) = speed_stats(&base);
            assert_eq!(mean, factor as f64 * base_mean);
            assert!((std - factor as f64 * base_std).abs() <= 4.0 * f64::EPSILON * std);
        }
    }
}
