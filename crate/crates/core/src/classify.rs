//! Per-point classification from multi-view label votes, and ingestion of
//! per-point predictions produced elsewhere.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::labels::LabelMap;
use crate::mapping::{MapEntry, PointPixelMap};
use crate::scene::{CameraView, ClassId};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no label map for view {0}")]
    MissingLabelMap(u32),
    #[error("view {view_id}: label map is {found_height}x{found_width}, expected {height}x{width}")]
    GeometryMismatch { view_id: u32, height: u32, width: u32, found_height: u32, found_width: u32 },
    #[error("line {line}: point id {point_id} is outside a cloud of {cloud_size} points")]
    OutOfRangePointId { line: usize, point_id: u64, cloud_size: usize },
    #[error("line {line}: class id `{class}` is not in the taxonomy")]
    UnknownClassId { line: usize, class: String },
    #[error("line {line}: point id {point_id} predicted twice")]
    DuplicatePointId { line: usize, point_id: u32 },
    #[error("line {line}: expected `point_id class_id`, found `{found}`")]
    Parse { line: usize, found: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Vote tallies: point id -> class -> number of views voting for it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViewVotes {
    pub counts: BTreeMap<u32, BTreeMap<ClassId, u32>>,
}

impl ViewVotes {
    pub fn add(&mut self, point_id: u32, class: ClassId, n: u32) {
        *self.counts.entry(point_id).or_default().entry(class).or_default() += n;
    }

    /// Sums tallies; associative and commutative.
    pub fn merge(self, other: ViewVotes) -> ViewVotes {
        let (small, mut large) = if self.counts.len() < other.counts.len() { (self, other) } else { (other, self) };
        for (point_id, classes) in small.counts {
            for (class, n) in classes {
                large.add(point_id, class, n);
            }
        }
        large
    }

    /// Vote shares over the taxonomy, indexed by class id.
    pub fn distribution(&self, point_id: u32) -> Option<Vec<f64>> {
        let classes = self.counts.get(&point_id)?;
        let total: u32 = classes.values().sum();
        let mut dist = vec![0.0; ClassId::TAXONOMY_SIZE];
        for (class, &n) in classes {
            if let Some(slot) = dist.get_mut(class.index()) {
                *slot = n as f64 / total as f64;
            }
        }
        Some(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    Vote,
    External,
}

/// Predicted class per point. Points without an entry are unclassified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedLabels {
    pub labels: BTreeMap<u32, ClassId>,
    pub source: PredictionSource,
}

impl PredictedLabels {
    pub fn get(&self, point_id: u32) -> Option<ClassId> {
        self.labels.get(&point_id).copied()
    }
}

/// Fails if a label map's size differs from its view's image size.
pub fn check_label_geometry(views: &[CameraView], label_maps: &BTreeMap<u32, LabelMap>) -> Result<(), ClassifyError> {
    for view in views {
        if let Some(m) = label_maps.get(&view.view_id) {
            let g = view.geometry;
            if m.height() != g.height || m.width() != g.width {
                return Err(ClassifyError::GeometryMismatch {
                    view_id: view.view_id,
                    height: g.height,
                    width: g.width,
                    found_height: m.height(),
                    found_width: m.width(),
                });
            }
        }
    }
    Ok(())
}

fn tally_view(entries: &[MapEntry], labels: &LabelMap) -> Result<ViewVotes, ClassifyError> {
    let mut votes = ViewVotes::default();
    for e in entries {
        let class = labels.get(e.pixel).ok_or(ClassifyError::GeometryMismatch {
            view_id: e.view_id,
            height: e.pixel.row + 1,
            width: e.pixel.col + 1,
            found_height: labels.height(),
            found_width: labels.width(),
        })?;
        if !class.is_void() {
            votes.add(e.point_id, class, 1);
        }
    }
    Ok(votes)
}

/// One vote per map entry whose pixel carries a non-VOID label.
pub fn collect_votes(map: &PointPixelMap, label_maps: &BTreeMap<u32, LabelMap>) -> Result<ViewVotes, ClassifyError> {
    map.view_slices()
        .into_par_iter()
        .map(|entries| {
            let view_id = entries[0].view_id;
            let labels = label_maps.get(&view_id).ok_or(ClassifyError::MissingLabelMap(view_id))?;
            tally_view(entries, labels)
        })
        .try_reduce(ViewVotes::default, |a, b| Ok(a.merge(b)))
}

/// Most-voted class per point, lowest class id on ties.
pub fn aggregate_majority_vote(votes: &ViewVotes) -> PredictedLabels {
    let labels = votes
        .counts
        .iter()
        .filter_map(|(&point_id, classes)| {
            // BTreeMap iterates ascending, so strict `>` keeps the lowest id on ties
            let mut best: Option<(ClassId, u32)> = None;
            for (&class, &n) in classes {
                if n > 0 && best.is_none_or(|(_, m)| n > m) {
                    best = Some((class, n));
                }
            }
            best.map(|(class, _)| (point_id, class))
        })
        .collect();
    PredictedLabels { labels, source: PredictionSource::Vote }
}

/// Votes then majority: the classification stage.
pub fn classify_by_vote(map: &PointPixelMap, label_maps: &BTreeMap<u32, LabelMap>) -> Result<PredictedLabels, ClassifyError> {
    Ok(aggregate_majority_vote(&collect_votes(map, label_maps)?))
}

pub fn parse_predictions(text: &str, cloud_size: usize) -> Result<PredictedLabels, ClassifyError> {
    let mut labels = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [point, class] = fields.as_slice() else {
            return Err(ClassifyError::Parse { line, found: trimmed.to_string() });
        };
        let point_id: u64 = point.parse().map_err(|_| ClassifyError::Parse { line, found: trimmed.to_string() })?;
        if point_id >= cloud_size as u64 {
            return Err(ClassifyError::OutOfRangePointId { line, point_id, cloud_size });
        }
        let class = match class.parse::<u8>() {
            Ok(c) if ClassId(c).in_taxonomy() => ClassId(c),
            _ => return Err(ClassifyError::UnknownClassId { line, class: class.to_string() }),
        };
        let point_id = point_id as u32;
        if labels.insert(point_id, class).is_some() {
            return Err(ClassifyError::DuplicatePointId { line, point_id });
        }
    }
    Ok(PredictedLabels { labels, source: PredictionSource::External })
}

pub fn load_external_predictions(path: impl AsRef<Path>, cloud_size: usize) -> Result<PredictedLabels, ClassifyError> {
    parse_predictions(&fs::read_to_string(path)?, cloud_size)
}

/// `point_id class_id` lines in ascending point order.
pub fn write_predictions(predictions: &PredictedLabels, mut out: impl Write) -> io::Result<()> {
    for (point_id, class) in &predictions.labels {
        writeln!(out, "{point_id} {class}")?;
    }
    Ok(())
}

pub fn write_predictions_file(predictions: &PredictedLabels, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    write_predictions(predictions, &mut out)?;
    out.flush()
}
