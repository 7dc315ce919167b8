//! Lifting 2D class masks into the 3D point subspace.
//!
//! [`extract_class_pixels`] turns a label map into per-class pixel lists that
//! are persisted as one JSON file per image. [`reduce_point_subspace`] then
//! keeps only the point/pixel pairs of a [`PointPixelMap`] whose pixel is
//! listed under one of the target classes for that view; a point survives if
//! any of its pairs does.
//!
//! Index file layout (`<image_name>.json`), compact with keys in ascending
//! numeric order and pixels as `[row, col]` sorted ascending:
//!
//! ```text
//! {"0":[[0,0],[0,1]],"11":[[5,7]]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
use thiserror::Error;

use crate::labels::LabelMap;
use crate::mapping::{MapEntry, PointPixelMap};
use crate::scene::{ClassId, PixelCoord};

#[derive(Debug, Error)]
pub enum ExtrusionError {
    #[error("target class set is empty")]
    EmptyTargets,
    #[error("the VOID label cannot be a target class")]
    VoidTarget,
    #[error("malformed index JSON: {0}")]
    MalformedJson(String),
    #[error("invalid class key `{0}`")]
    BadClassKey(String),
    #[error("class {0} appears more than once")]
    DuplicateClass(ClassId),
    #[error("class {class}: pixel entry `{found}` is not a [row, col] pair of non-negative integers")]
    NonIntegerPixel { class: ClassId, found: String },
    #[error("class {class}: pixel ({row}, {col}) listed twice")]
    DuplicatePixel { class: ClassId, row: u32, col: u32 },
    #[error("class {class}: pixel ({row}, {col}) outside {height}x{width} image")]
    PixelOutOfBounds { class: ClassId, row: u32, col: u32, height: u32, width: u32 },
    #[error("class {0} has an empty pixel list")]
    EmptyClass(ClassId),
    #[error("class {0}: pixels are not sorted")]
    UnsortedPixels(ClassId),
    #[error("line {line}: invalid point id `{found}`")]
    BadPointId { line: usize, found: String },
    #[error("i/o error: {0}")]
    IoFailure(#[from] io::Error),
}

/// Per-image mapping from class id to the sorted pixels carrying that class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassPixelIndex {
    pub image_name: String,
    pixels_by_class: BTreeMap<ClassId, Vec<PixelCoord>>,
}

impl ClassPixelIndex {
    pub fn new(
        image_name: impl Into<String>,
        pixels_by_class: BTreeMap<ClassId, Vec<PixelCoord>>,
    ) -> Result<Self, ExtrusionError> {
        for (&class, pixels) in &pixels_by_class {
            if pixels.is_empty() {
                return Err(ExtrusionError::EmptyClass(class));
            }
            for pair in pixels.windows(2) {
                if pair[0] == pair[1] {
                    return Err(ExtrusionError::DuplicatePixel { class, row: pair[1].row, col: pair[1].col });
                }
                if pair[0] > pair[1] {
                    return Err(ExtrusionError::UnsortedPixels(class));
                }
            }
        }
        Ok(Self { image_name: image_name.into(), pixels_by_class })
    }

    pub fn empty(image_name: impl Into<String>) -> Self {
        Self { image_name: image_name.into(), pixels_by_class: BTreeMap::new() }
    }

    pub fn pixels_by_class(&self) -> &BTreeMap<ClassId, Vec<PixelCoord>> {
        &self.pixels_by_class
    }

    pub fn pixels(&self, class: ClassId) -> &[PixelCoord] {
        self.pixels_by_class.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels_by_class.is_empty()
    }

    /// Union of the pixels listed under any of `targets`.
    pub fn pixel_set(&self, targets: &BTreeSet<ClassId>) -> HashSet<PixelCoord> {
        targets
            .iter()
            .filter_map(|c| self.pixels_by_class.get(c))
            .flatten()
            .copied()
            .collect()
    }

    pub fn check_bounds(&self, height: u32, width: u32) -> Result<(), ExtrusionError> {
        for (&class, pixels) in &self.pixels_by_class {
            if let Some(p) = pixels.iter().find(|p| p.row >= height || p.col >= width) {
                return Err(ExtrusionError::PixelOutOfBounds { class, row: p.row, col: p.col, height, width });
            }
        }
        Ok(())
    }
}

pub fn validate_targets(targets: &BTreeSet<ClassId>) -> Result<(), ExtrusionError> {
    if targets.is_empty() {
        return Err(ExtrusionError::EmptyTargets);
    }
    if targets.contains(&ClassId::VOID) {
        return Err(ExtrusionError::VoidTarget);
    }
    Ok(())
}

/// Pixels of `map` grouped by target class; classes without pixels are left out.
pub fn extract_class_pixels(
    map: &LabelMap,
    targets: &BTreeSet<ClassId>,
    image_name: &str,
) -> Result<ClassPixelIndex, ExtrusionError> {
    validate_targets(targets)?;
    let mut wanted = [false; 256];
    for t in targets {
        wanted[t.index()] = true;
    }
    let mut pixels_by_class: BTreeMap<ClassId, Vec<PixelCoord>> = BTreeMap::new();
    // row-major traversal yields each list already sorted
    for (pixel, class) in map.pixels() {
        if wanted[class.index()] {
            pixels_by_class.entry(class).or_default().push(pixel);
        }
    }
    Ok(ClassPixelIndex { image_name: image_name.to_string(), pixels_by_class })
}

/// Canonical compact JSON text of an index.
pub fn encode_class_pixel_index(index: &ClassPixelIndex) -> String {
    let mut out = String::from("{");
    for (i, (class, pixels)) in index.pixels_by_class.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "\"{}\":[", class.0).unwrap();
        for (j, p) in pixels.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "[{},{}]", p.row, p.col).unwrap();
        }
        out.push(']');
    }
    out.push('}');
    out
}

/// `<dir>/<image_name>.json`
pub fn class_pixel_index_path(dir: impl AsRef<Path>, image_name: &str) -> PathBuf {
    dir.as_ref().join(format!("{image_name}.json"))
}

pub fn write_class_pixel_index(index: &ClassPixelIndex, dir: impl AsRef<Path>) -> Result<PathBuf, ExtrusionError> {
    let path = class_pixel_index_path(dir, &index.image_name);
    fs::write(&path, encode_class_pixel_index(index))?;
    Ok(path)
}

/// Top-level object entries in document order, duplicates kept.
struct RawEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for RawEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = RawEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object mapping class ids to pixel lists")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<RawEntries, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = access.next_entry::<String, serde_json::Value>()? {
                    entries.push(entry);
                }
                Ok(RawEntries(entries))
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn parse_class_key(key: &str) -> Result<ClassId, ExtrusionError> {
    let canonical = !key.is_empty() && key.bytes().all(|b| b.is_ascii_digit()) && (key == "0" || !key.starts_with('0'));
    match key.parse::<u8>() {
        Ok(id) if canonical && id != ClassId::VOID.0 => Ok(ClassId(id)),
        _ => Err(ExtrusionError::BadClassKey(key.to_string())),
    }
}

fn parse_pixel(class: ClassId, value: &serde_json::Value) -> Result<PixelCoord, ExtrusionError> {
    let bad = || ExtrusionError::NonIntegerPixel { class, found: value.to_string() };
    let pair = value.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
    let coord = |v: &serde_json::Value| v.as_u64().and_then(|x| u32::try_from(x).ok()).ok_or_else(bad);
    Ok(PixelCoord::new(coord(&pair[0])?, coord(&pair[1])?))
}

/// Parses index JSON. Pixel lists are sorted on load; empty lists are dropped.
/// With `bounds = Some((height, width))` every pixel is checked against the image.
pub fn parse_class_pixel_index(
    text: &str,
    image_name: &str,
    bounds: Option<(u32, u32)>,
) -> Result<ClassPixelIndex, ExtrusionError> {
    let raw: RawEntries = serde_json::from_str(text).map_err(|e| ExtrusionError::MalformedJson(e.to_string()))?;
    let mut pixels_by_class = BTreeMap::new();
    for (key, value) in raw.0 {
        let class = parse_class_key(&key)?;
        let items = value
            .as_array()
            .ok_or_else(|| ExtrusionError::MalformedJson(format!("value of class {class} is not an array")))?;
        let mut pixels = items.iter().map(|v| parse_pixel(class, v)).collect::<Result<Vec<_>, _>>()?;
        pixels.sort_unstable();
        if let Some(pair) = pixels.windows(2).find(|p| p[0] == p[1]) {
            return Err(ExtrusionError::DuplicatePixel { class, row: pair[0].row, col: pair[0].col });
        }
        if pixels_by_class.contains_key(&class) {
            return Err(ExtrusionError::DuplicateClass(class));
        }
        if !pixels.is_empty() {
            pixels_by_class.insert(class, pixels);
        }
    }
    let index = ClassPixelIndex { image_name: image_name.to_string(), pixels_by_class };
    if let Some((height, width)) = bounds {
        index.check_bounds(height, width)?;
    }
    Ok(index)
}

/// Reads `<image_name>.json`; the image name is the file stem.
pub fn read_class_pixel_index(
    path: impl AsRef<Path>,
    bounds: Option<(u32, u32)>,
) -> Result<ClassPixelIndex, ExtrusionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let image_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_class_pixel_index(&text, &image_name, bounds)
}

/// Output of [`reduce_point_subspace`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub reduced_map: PointPixelMap,
    pub retained_point_ids: BTreeSet<u32>,
    /// Retained entry count for every view present in the input map.
    pub per_view_retained: BTreeMap<u32, usize>,
}

/// Keeps the map entries whose pixel is listed under a target class in the
/// index of the entry's view. Views without an index retain nothing.
pub fn reduce_point_subspace(
    map: &PointPixelMap,
    indexes: &BTreeMap<u32, ClassPixelIndex>,
    targets: &BTreeSet<ClassId>,
) -> ReductionResult {
    let per_view: Vec<(u32, Vec<MapEntry>)> = map
        .view_slices()
        .into_par_iter()
        .map(|entries| {
            let view_id = entries[0].view_id;
            let kept = match indexes.get(&view_id) {
                Some(index) if !index.is_empty() => {
                    let lookup = index.pixel_set(targets);
                    entries.iter().filter(|e| lookup.contains(&e.pixel)).copied().collect()
                }
                _ => Vec::new(),
            };
            (view_id, kept)
        })
        .collect();

    let per_view_retained = per_view.iter().map(|(v, kept)| (*v, kept.len())).collect();
    let entries: Vec<MapEntry> = per_view.into_iter().flat_map(|(_, kept)| kept).collect();
    let retained_point_ids = entries.iter().map(|e| e.point_id).collect();
    ReductionResult {
        reduced_map: PointPixelMap::from_sorted_unchecked(entries),
        retained_point_ids,
        per_view_retained,
    }
}

/// One decimal point id per line, ascending.
pub fn write_point_ids<'a>(ids: impl IntoIterator<Item = &'a u32>, mut out: impl Write) -> io::Result<()> {
    for id in ids {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub fn read_point_ids(reader: impl BufRead) -> Result<BTreeSet<u32>, ExtrusionError> {
    let mut ids = BTreeSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let id = t.parse().map_err(|_| ExtrusionError::BadPointId { line: n + 1, found: t.to_string() })?;
        ids.insert(id);
    }
    Ok(ids)
}
