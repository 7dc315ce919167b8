//! Accuracy metrics over the 15-class taxonomy (confusion counts, IoU,
//! cross-entropy) and efficiency measurement ([`bench`]).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PredictedLabels;
use crate::scene::ClassId;

pub mod bench;

pub use bench::{bench_stage, BenchError, RunStats};

const NUM_CLASSES: usize = ClassId::TAXONOMY_SIZE;
const PROBABILITY_FLOOR: f64 = 1e-12;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("point {0} has no usable ground-truth label")]
    MissingTruthLabel(u32),
    #[error("class id {0} is not in the taxonomy")]
    UnknownClassId(u8),
    #[error("distribution {index} sums to {sum}, not 1")]
    UnnormalizedDistribution { index: usize, sum: f64 },
    #[error("{truth} truth labels but {probs} distributions")]
    LengthMismatch { truth: usize, probs: usize },
    #[error("no points to evaluate")]
    EmptyInput,
}

/// Taxonomy name of a class id.
pub fn class_name(id: ClassId) -> Result<&'static str, MetricsError> {
    id.name().ok_or(MetricsError::UnknownClassId(id.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Per-class TP/FP/FN plus the full confusion matrix. Matrix rows are truth
/// classes; columns are predicted classes with one extra trailing column for
/// unclassified points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub per_class: [ClassCounts; NUM_CLASSES],
    pub matrix: Vec<Vec<u64>>,
}

impl Default for ConfusionCounts {
    fn default() -> Self {
        Self {
            per_class: [ClassCounts::default(); NUM_CLASSES],
            matrix: vec![vec![0; NUM_CLASSES + 1]; NUM_CLASSES],
        }
    }
}

impl ConfusionCounts {
    pub fn merge(mut self, other: &ConfusionCounts) -> ConfusionCounts {
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        for (row, other_row) in self.matrix.iter_mut().zip(&other.matrix) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
        self
    }

    /// Whether the per-class counts agree with the matrix.
    pub fn is_consistent(&self) -> bool {
        (0..NUM_CLASSES).all(|c| {
            let tp = self.matrix[c][c];
            let row: u64 = self.matrix[c].iter().sum();
            let col: u64 = self.matrix.iter().map(|r| r[c]).sum();
            let counts = self.per_class[c];
            counts.tp == tp && counts.fn_ == row - tp && counts.fp == col - tp
        })
    }

    pub fn evaluated_points(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn unclassified_points(&self) -> u64 {
        self.matrix.iter().map(|r| r[NUM_CLASSES]).sum()
    }
}

pub fn accumulate_confusion(
    truth: &[ClassId],
    pred: &PredictedLabels,
    eval_point_ids: impl IntoIterator<Item = u32>,
) -> Result<ConfusionCounts, MetricsError> {
    let mut counts = ConfusionCounts::default();
    for point_id in eval_point_ids {
        let t = truth
            .get(point_id as usize)
            .copied()
            .filter(|t| t.in_taxonomy())
            .ok_or(MetricsError::MissingTruthLabel(point_id))?;
        match pred.get(point_id) {
            Some(p) if p == t => {
                counts.per_class[t.index()].tp += 1;
                counts.matrix[t.index()][t.index()] += 1;
            }
            Some(p) => {
                if !p.in_taxonomy() {
                    return Err(MetricsError::UnknownClassId(p.0));
                }
                counts.per_class[p.index()].fp += 1;
                counts.per_class[t.index()].fn_ += 1;
                counts.matrix[t.index()][p.index()] += 1;
            }
            None => {
                counts.per_class[t.index()].fn_ += 1;
                counts.matrix[t.index()][NUM_CLASSES] += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIoU {
    pub id: u8,
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `None` when the class never occurs in truth or prediction.
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    pub classes: Vec<ClassIoU>,
    /// Mean over classes with a defined IoU.
    pub miou: Option<f64>,
}

impl IoUReport {
    pub fn iou(&self, class: ClassId) -> Option<f64> {
        self.classes.get(class.index()).and_then(|c| c.iou)
    }
}

/// `tp / (tp + fp + fn)`.
pub fn iou(counts: ClassCounts) -> Option<f64> {
    let denominator = counts.tp + counts.fp + counts.fn_;
    (denominator > 0).then(|| counts.tp as f64 / denominator as f64)
}

pub fn iou_per_class(counts: &ConfusionCounts) -> IoUReport {
    let classes: Vec<ClassIoU> = ClassId::taxonomy()
        .map(|c| {
            let k = counts.per_class[c.index()];
            ClassIoU {
                id: c.0,
                name: c.name().unwrap_or_default().to_string(),
                tp: k.tp,
                fp: k.fp,
                fn_: k.fn_,
                iou: iou(k),
            }
        })
        .collect();
    let defined: Vec<f64> = classes.iter().filter_map(|c| c.iou).collect();
    let miou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    IoUReport { classes, miou }
}

/// Mean of `-ln p(truth)` over points, `p` floored at 1e-12.
/// `probs[i]` is indexed by class id.
pub fn cross_entropy(truth: &[ClassId], probs: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if truth.len() != probs.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), probs: probs.len() });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut total = 0.0;
    for (index, (t, dist)) in truth.iter().zip(probs).enumerate() {
        if t.is_void() {
            return Err(MetricsError::MissingTruthLabel(index as u32));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || dist.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(MetricsError::UnnormalizedDistribution { index, sum });
        }
        let p = dist.get(t.index()).copied().unwrap_or(0.0).max(PROBABILITY_FLOOR);
        total -= p.ln();
    }
    Ok(total / truth.len() as f64)
}

/// Accuracy report written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub evaluated_points: u64,
    pub unclassified_points: u64,
    pub classes: Vec<ClassIoU>,
    pub miou: Option<f64>,
    /// Mean negative log-likelihood of the truth under vote shares, over
    /// points that received votes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cross_entropy: Option<f64>,
}

impl EvalReport {
    pub fn new(counts: &ConfusionCounts, cross_entropy: Option<f64>) -> Self {
        let report = iou_per_class(counts);
        Self {
            evaluated_points: counts.evaluated_points(),
            unclassified_points: counts.unclassified_points(),
            classes: report.classes,
            miou: report.miou,
            cross_entropy,
        }
    }

    /// Table with one IoU column per class label, in percent.
    pub fn to_table(&self, method: &str, targets: Option<&BTreeSet<ClassId>>) -> String {
        let mut out = String::from("IoU per class label (%)\n");
        let width = method.len().max(6);
        write!(out, "{:<width$}", "Method").unwrap();
        for c in &self.classes {
            write!(out, " | {:>6}", c.id).unwrap();
        }
        out.push_str(" |   mIoU\n");
        write!(out, "{:<width$}", method).unwrap();
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x));
        for c in &self.classes {
            write!(out, " | {:>6}", pct(c.iou)).unwrap();
        }
        writeln!(out, " | {:>6}", pct(self.miou)).unwrap();
        out.push('\n');
        for c in &self.classes {
            let marker = match targets {
                Some(t) if t.contains(&ClassId(c.id)) => " (target)",
                _ => "",
            };
            writeln!(out, "{:>2} - {}{marker}", c.id, c.name).unwrap();
        }
        writeln!(out, "evaluated points: {}, unclassified: {}", self.evaluated_points, self.unclassified_points).unwrap();
        out
    }
}
