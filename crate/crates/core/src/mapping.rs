//! Visible point/pixel correspondence built with a per-view depth buffer.
//!
//! Every point is splatted to the single pixel it projects into. A pixel is
//! won by the nearest projector; candidates whose depth is within
//! `depth_epsilon` of the minimum are resolved in favor of the lowest point id.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::scene::{check_unique_view_ids, project_point, CameraView, PixelCoord, PointCloud, SceneError};

pub const DEFAULT_DEPTH_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("depth epsilon must be a finite non-negative number, got {0}")]
    InvalidDepthEpsilon(f64),
    #[error("cloud has {0} points, more than a map can index")]
    TooManyPoints(usize),
    #[error("entries out of order or duplicated at view {view_id} pixel ({row}, {col})")]
    Unsorted { view_id: u32, row: u32, col: u32 },
    #[error("point {point_id} appears twice in view {view_id}")]
    DuplicatePoint { view_id: u32, point_id: u32 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One visible (view, point, pixel) triple and the point's camera depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    pub view_id: u32,
    pub point_id: u32,
    pub pixel: PixelCoord,
    pub depth: f64,
}

impl MapEntry {
    fn sort_key(&self) -> (u32, u32, u32) {
        (self.view_id, self.pixel.row, self.pixel.col)
    }
}

/// Entries sorted by `(view_id, row, col)`, at most one per view pixel and
/// at most one per point within a view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointPixelMap {
    entries: Vec<MapEntry>,
}

impl PointPixelMap {
    pub fn from_entries(entries: Vec<MapEntry>) -> Result<Self, MappingError> {
        for pair in entries.windows(2) {
            if pair[0].sort_key() >= pair[1].sort_key() {
                let e = &pair[1];
                return Err(MappingError::Unsorted {
                    view_id: e.view_id,
                    row: e.pixel.row,
                    col: e.pixel.col,
                });
            }
        }
        let map = Self { entries };
        for view_id in map.view_ids() {
            let mut seen = BTreeSet::new();
            for e in map.view_entries(view_id) {
                if !seen.insert(e.point_id) {
                    return Err(MappingError::DuplicatePoint { view_id, point_id: e.point_id });
                }
            }
        }
        Ok(map)
    }

    /// Caller guarantees the ordering invariants.
    pub(crate) fn from_sorted_unchecked(entries: Vec<MapEntry>) -> Self {
        debug_assert!(entries.windows(2).all(|p| p[0].sort_key() < p[1].sort_key()));
        Self { entries }
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct view ids present, ascending.
    pub fn view_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = Vec::new();
        for e in &self.entries {
            if ids.last() != Some(&e.view_id) {
                ids.push(e.view_id);
            }
        }
        ids
    }

    /// The contiguous run of entries for one view.
    pub fn view_entries(&self, view_id: u32) -> &[MapEntry] {
        let start = self.entries.partition_point(|e| e.view_id < view_id);
        let end = self.entries.partition_point(|e| e.view_id <= view_id);
        &self.entries[start..end]
    }

    /// Entries split into per-view runs, ascending by view id.
    pub fn view_slices(&self) -> Vec<&[MapEntry]> {
        self.entries.chunk_by(|a, b| a.view_id == b.view_id).collect()
    }

    /// Points visible in at least one view.
    pub fn point_ids(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.point_id).collect()
    }
}

pub fn build_point_pixel_map(
    cloud: &PointCloud,
    views: &[CameraView],
    depth_epsilon: f64,
) -> Result<PointPixelMap, MappingError> {
    check_unique_view_ids(views)?;
    if !(depth_epsilon >= 0.0 && depth_epsilon.is_finite()) {
        return Err(MappingError::InvalidDepthEpsilon(depth_epsilon));
    }
    if cloud.len() > u32::MAX as usize {
        return Err(MappingError::TooManyPoints(cloud.len()));
    }
    let mut order: Vec<&CameraView> = views.iter().collect();
    order.sort_by_key(|v| v.view_id);
    let per_view: Vec<Vec<MapEntry>> = order
        .par_iter()
        .map(|view| zbuffer_view(cloud, view, depth_epsilon))
        .collect();
    Ok(PointPixelMap::from_sorted_unchecked(per_view.concat()))
}

fn zbuffer_view(cloud: &PointCloud, view: &CameraView, depth_epsilon: f64) -> Vec<MapEntry> {
    let width = view.geometry.width as usize;
    let mut nearest = vec![f64::INFINITY; view.geometry.pixel_count()];
    let mut hits: Vec<(u32, usize, f64)> = Vec::new();
    for (point_id, p) in cloud.positions().iter().enumerate() {
        if let Some((pixel, depth)) = project_point(p, view).visible() {
            let slot = pixel.row as usize * width + pixel.col as usize;
            if depth < nearest[slot] {
                nearest[slot] = depth;
            }
            hits.push((point_id as u32, slot, depth));
        }
    }

    // Second pass: lowest point id within epsilon of the per-pixel minimum.
    let mut winner: Vec<Option<(u32, f64)>> = vec![None; nearest.len()];
    for (point_id, slot, depth) in hits {
        if winner[slot].is_none() && depth <= nearest[slot] + depth_epsilon {
            winner[slot] = Some((point_id, depth));
        }
    }

    winner
        .into_iter()
        .enumerate()
        .filter_map(|(slot, w)| {
            w.map(|(point_id, depth)| MapEntry {
                view_id: view.view_id,
                point_id,
                pixel: PixelCoord::new((slot / width) as u32, (slot % width) as u32),
                depth,
            })
        })
        .collect()
}

/// Point ids with an entry under `view_id`.
pub fn visible_points(map: &PointPixelMap, view_id: u32) -> BTreeSet<u32> {
    map.view_entries(view_id).iter().map(|e| e.point_id).collect()
}

/// Text table, one `view_id point_id row col depth` line per entry.
pub fn write_map(map: &PointPixelMap, mut out: impl Write) -> io::Result<()> {
    for e in &map.entries {
        writeln!(out, "{} {} {} {} {}", e.view_id, e.point_id, e.pixel.row, e.pixel.col, e.depth)?;
    }
    Ok(())
}

pub fn write_map_file(map: &PointPixelMap, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    write_map(map, &mut out)?;
    out.flush()
}

pub fn read_map(reader: impl BufRead) -> Result<PointPixelMap, MappingError> {
    let mut entries = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(MappingError::Parse {
                line: line_no,
                message: format!("expected 5 fields, found {}", tokens.len()),
            });
        }
        let int = |i: usize| -> Result<u32, MappingError> {
            tokens[i].parse().map_err(|_| MappingError::Parse {
                line: line_no,
                message: format!("`{}` is not an unsigned integer", tokens[i]),
            })
        };
        let depth: f64 = tokens[4].parse().map_err(|_| MappingError::Parse {
            line: line_no,
            message: format!("`{}` is not a depth", tokens[4]),
        })?;
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(MappingError::Parse { line: line_no, message: format!("invalid depth {depth}") });
        }
        entries.push(MapEntry {
            view_id: int(0)?,
            point_id: int(1)?,
            pixel: PixelCoord::new(int(2)?, int(3)?),
            depth,
        });
    }
    PointPixelMap::from_entries(entries)
}

pub fn read_map_file(path: impl AsRef<Path>) -> Result<PointPixelMap, MappingError> {
    read_map(BufReader::new(fs::File::open(path)?))
}
