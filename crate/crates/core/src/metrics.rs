//! Endpoint-error metrics and their aggregation.
//!
//! Per-pair scores are averaged over pixels; datasets are then averaged over
//! pairs (never pooled over pixels across pairs).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowfield::VelocityField;
use crate::ingest::FlowTag;

/// Default NEPE stabiliser, px/frame.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("prediction is {pred:?} but ground truth is {gt:?}")]
    DimensionMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("bin edges must be strictly increasing")]
    BinEdges,
    #[error("reports use different bin edges")]
    IncompatibleBins,
}

/// Prediction and ground truth of identical dimensions.
#[derive(Debug, Clone, Copy)]
pub struct FlowPair<'a> {
    pub predicted: &'a VelocityField,
    pub ground_truth: &'a VelocityField,
}

impl<'a> FlowPair<'a> {
    pub fn new(predicted: &'a VelocityField, ground_truth: &'a VelocityField) -> Result<Self, MetricError> {
        if predicted.dims() != ground_truth.dims() {
            return Err(MetricError::DimensionMismatch {
                pred: predicted.dims(),
                gt: ground_truth.dims(),
            });
        }
        Ok(Self {
            predicted,
            ground_truth,
        })
    }

    fn errors(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (p, g) = (self.predicted, self.ground_truth);
        p.u()
            .iter()
            .zip(p.v())
            .zip(g.u().iter().zip(g.v()))
            .map(|((pu, pv), (gu, gv))| ((pu - gu).hypot(pv - gv), gu.hypot(*gv)))
    }

    fn pixels(&self) -> f64 {
        let (w, h) = self.ground_truth.dims();
        (w * h) as f64
    }

    /// Mean Euclidean distance between predicted and true vectors.
    pub fn epe(&self) -> f64 {
        self.errors().map(|(e, _)| e).sum::<f64>() / self.pixels()
    }

    /// Mean per-pixel error relative to `|gt| + epsilon`.
    pub fn nepe(&self, epsilon: f64) -> Result<f64, MetricError> {
        if !(epsilon > 0.0) {
            return Err(MetricError::Epsilon(epsilon));
        }
        Ok(self.errors().map(|(e, s)| e / (s + epsilon)).sum::<f64>() / self.pixels())
    }
}

pub fn epe(predicted: &VelocityField, ground_truth: &VelocityField) -> Result<f64, MetricError> {
    Ok(FlowPair::new(predicted, ground_truth)?.epe())
}

pub fn nepe(predicted: &VelocityField, ground_truth: &VelocityField, epsilon: f64) -> Result<f64, MetricError> {
    FlowPair::new(predicted, ground_truth)?.nepe(epsilon)
}

/// Scores and tags of one evaluated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair_id: String,
    pub condition_id: String,
    pub flow_tag: FlowTag,
    pub density: f64,
    pub scaling_factor: u32,
    pub epe: f64,
    pub nepe: f64,
    pub mean_gt_speed: f64,
}

impl PairScore {
    pub fn compute(
        pair_id: impl Into<String>,
        condition_id: impl Into<String>,
        flow_tag: FlowTag,
        density: f64,
        scaling_factor: u32,
        pair: FlowPair<'_>,
        epsilon: f64,
    ) -> Result<Self, MetricError> {
        Ok(Self {
            pair_id: pair_id.into(),
            condition_id: condition_id.into(),
            flow_tag,
            density,
            scaling_factor,
            epe: pair.epe(),
            nepe: pair.nepe(epsilon)?,
            mean_gt_speed: pair.ground_truth.mean_speed(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub condition_id: String,
    pub flow_tag: FlowTag,
    pub density: f64,
    pub scaling_factor: u32,
    /// Velocity bin index; see [`bin_index`].
    pub bin: usize,
    pub count: usize,
    pub mean_epe: f64,
    pub mean_nepe: f64,
}

impl Aggregate {
    fn key(&self) -> (String, usize) {
        (self.condition_id.clone(), self.bin)
    }
}

/// Summary row: mean scores of a group of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub count: usize,
    pub mean_epe: f64,
    pub mean_nepe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub bin_edges: Vec<f64>,
    pub per_pair: Vec<PairScore>,
    pub aggregates: Vec<Aggregate>,
}

/// Bin of `speed` for strictly increasing `edges`: bin 0 is below the first
/// edge, bin `k` is `[edges[k-1], edges[k])`, and the last bin is open above.
pub fn bin_index(speed: f64, edges: &[f64]) -> usize {
    edges.partition_point(|e| *e <= speed)
}

/// Deciles of the per-pair mean ground-truth speeds, deduplicated.
pub fn decile_edges(speeds: &[f64]) -> Vec<f64> {
    if speeds.is_empty() {
        return Vec::new();
    }
    let mut sorted = speeds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..10)
        .map(|d| {
            let pos = d as f64 / 10.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let t = pos - lo as f64;
            (1.0 - t) * sorted[lo] + t * sorted[hi]
        })
        .collect();
    edges.dedup_by(|b, a| *b <= *a);
    edges
}

fn mean(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Aggregates pairs per (condition, velocity bin) in first-seen order.
pub fn binned_report(scores: Vec<PairScore>, bin_edges: &[f64]) -> Result<EvalReport, MetricError> {
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) || bin_edges.iter().any(|e| !e.is_finite()) {
        return Err(MetricError::BinEdges);
    }
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: HashMap<(String, usize), Vec<usize>> = HashMap::new();
    for (i, s) in scores.iter().enumerate() {
        let key = (s.condition_id.clone(), bin_index(s.mean_gt_speed, bin_edges));
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }
    let aggregates = order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let first = &scores[members[0]];
            let (count, mean_epe) = mean(members.iter().map(|&i| scores[i].epe));
            let (_, mean_nepe) = mean(members.iter().map(|&i| scores[i].nepe));
            Aggregate {
                condition_id: key.0,
                flow_tag: first.flow_tag,
                density: first.density,
                scaling_factor: first.scaling_factor,
                bin: key.1,
                count,
                mean_epe,
                mean_nepe,
            }
        })
        .collect();
    Ok(EvalReport {
        bin_edges: bin_edges.to_vec(),
        per_pair: scores,
        aggregates,
    })
}

impl EvalReport {
    /// Combines two reports with count-weighted means per aggregate key.
    pub fn merge(&self, other: &EvalReport) -> Result<EvalReport, MetricError> {
        if self.bin_edges != other.bin_edges {
            return Err(MetricError::IncompatibleBins);
        }
        let mut aggregates = self.aggregates.clone();
        let mut index: HashMap<(String, usize), usize> =
            aggregates.iter().enumerate().map(|(i, a)| (a.key(), i)).collect();
        for b in &other.aggregates {
            match index.get(&b.key()) {
                Some(&i) => {
                    let a = &mut aggregates[i];
                    let n = (a.count + b.count) as f64;
                    a.mean_epe = (a.mean_epe * a.count as f64 + b.mean_epe * b.count as f64) / n;
                    a.mean_nepe = (a.mean_nepe * a.count as f64 + b.mean_nepe * b.count as f64) / n;
                    a.count += b.count;
                }
                None => {
                    index.insert(b.key(), aggregates.len());
                    aggregates.push(b.clone());
                }
            }
        }
        let mut per_pair = self.per_pair.clone();
        per_pair.extend(other.per_pair.iter().cloned());
        Ok(EvalReport {
            bin_edges: self.bin_edges.clone(),
            per_pair,
            aggregates,
        })
    }

    fn grouped<K, F>(&self, key: F) -> Vec<(K, usize, f64, f64)>
    where
        K: PartialEq + Clone,
        F: Fn(&PairScore) -> K,
    {
        let mut keys: Vec<K> = Vec::new();
        for s in &self.per_pair {
            let k = key(s);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|k| {
                let members = || self.per_pair.iter().filter(|s| key(s) == k);
                let (n, e) = mean(members().map(|s| s.epe));
                let (_, ne) = mean(members().map(|s| s.nepe));
                (k, n, e, ne)
            })
            .collect()
    }

    /// Per flow type rows followed by an overall row, which averages the
    /// per-flow means.
    pub fn summary_by_flow(&self) -> Vec<SummaryRow> {
        let mut groups = self.grouped(|s| s.flow_tag);
        groups.sort_by_key(|g| g.0);
        let mut rows: Vec<SummaryRow> = groups
            .into_iter()
            .map(|(tag, count, mean_epe, mean_nepe)| SummaryRow {
                label: tag.to_string(),
                count,
                mean_epe,
                mean_nepe,
            })
            .collect();
        if !rows.is_empty() {
            let (_, e) = mean(rows.iter().map(|r| r.mean_epe));
            let (_, ne) = mean(rows.iter().map(|r| r.mean_nepe));
            let count = rows.iter().map(|r| r.count).sum();
            rows.push(SummaryRow {
                label: "overall".into(),
                count,
                mean_epe: e,
                mean_nepe: ne,
            });
        }
        rows
    }

    pub fn summary_by_density(&self) -> Vec<SummaryRow> {
        let mut groups = self.grouped(|s| s.density.to_bits());
        groups.sort_by(|a, b| f64::from_bits(b.0).total_cmp(&f64::from_bits(a.0)));
        groups
            .into_iter()
            .map(|(d, count, mean_epe, mean_nepe)| SummaryRow {
                label: format!("{}", f64::from_bits(d)),
                count,
                mean_epe,
                mean_nepe,
            })
            .collect()
    }

    pub fn summary_by_scaling(&self) -> Vec<SummaryRow> {
        let mut groups = self.grouped(|s| (s.flow_tag, s.scaling_factor));
        groups.sort_by_key(|g| g.0);
        groups
            .into_iter()
            .map(|((tag, k), count, mean_epe, mean_nepe)| SummaryRow {
                label: format!("{tag} x{k}"),
                count,
                mean_epe,
                mean_nepe,
            })
            .collect()
    }

    fn bin_bounds(&self, bin: usize) -> (f64, f64) {
        let lo = if bin == 0 { f64::NEG_INFINITY } else { self.bin_edges[bin - 1] };
        let hi = self.bin_edges.get(bin).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// One row per (condition, density, scaling, velocity bin).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition_id,flow_tag,density,scaling,bin,bin_lo,bin_hi,count,mean_epe,mean_nepe\n");
        for a in &self.aggregates {
            let (lo, hi) = self.bin_bounds(a.bin);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                a.condition_id, a.flow_tag, a.density, a.scaling_factor, a.bin, lo, hi, a.count, a.mean_epe, a.mean_nepe
            );
        }
        out
    }

    pub fn per_pair_csv(&self) -> String {
        let mut out = String::from("pair_id,condition_id,flow_tag,density,scaling,mean_gt_speed,epe,nepe\n");
        for s in &self.per_pair {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.pair_id, s.condition_id, s.flow_tag, s.density, s.scaling_factor, s.mean_gt_speed, s.epe, s.nepe
            );
        }
        out
    }

    /// Plain-text tables: per flow type with an overall row, then per
    /// density and per scaling.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let mut table = |title: &str, rows: Vec<SummaryRow>| {
            let _ = writeln!(out, "{title:<16} {:>7} {:>10} {:>10}", "pairs", "EPE", "NEPE");
            for r in rows {
                let _ = writeln!(out, "{:<16} {:>7} {:>10.4} {:>10.4}", r.label, r.count, r.mean_epe, r.mean_nepe);
            }
            out.push('\n');
        };
        table("dataset", self.summary_by_flow());
        table("density", self.summary_by_density());
        table("scaling", self.summary_by_scaling());
        out
    }
}
