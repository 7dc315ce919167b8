//! 2D semantic label maps: PGM files, ground-truth rendering from a labeled
//! cloud and uniform label-flip noise.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mapping::PointPixelMap;
use crate::scene::{CameraView, ClassId, PixelCoord, PointCloud};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad PGM magic `{0}`, expected P2 or P5")]
    BadMagic(String),
    #[error("bad PGM dimensions: {0}")]
    BadDimensions(String),
    #[error("PGM maxval must be 255, got {0}")]
    UnsupportedMaxval(String),
    #[error("truncated PGM data: expected {expected} pixels, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("invalid PGM pixel value `{0}`")]
    BadPixel(String),
    #[error("class id {0} is not in the taxonomy")]
    UnknownClassId(u8),
    #[error("label map of {height}x{width} needs {expected} values, got {found}")]
    LengthMismatch { height: u32, width: u32, expected: usize, found: usize },
    #[error("point cloud has no labels")]
    MissingLabels,
    #[error("pixel ({row}, {col}) is outside the {height}x{width} label map")]
    GeometryMismatch { row: u32, col: u32, height: u32, width: u32 },
    #[error("point {0} referenced by the map is not in the cloud")]
    PointOutOfRange(u32),
    #[error("flip rate must be within [0, 1], got {0}")]
    InvalidFlipRate(f64),
}

/// Row-major grid of class ids, `ClassId::VOID` for unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: u32,
    width: u32,
    values: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(height: u32, width: u32, values: Vec<ClassId>) -> Result<Self, LabelError> {
        let expected = height as usize * width as usize;
        if values.len() != expected {
            return Err(LabelError::LengthMismatch { height, width, expected, found: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_void() && !v.in_taxonomy()) {
            return Err(LabelError::UnknownClassId(bad.0));
        }
        Ok(Self { height, width, values })
    }

    pub fn void(height: u32, width: u32) -> Self {
        Self { height, width, values: vec![ClassId::VOID; height as usize * width as usize] }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn values(&self) -> &[ClassId] {
        &self.values
    }

    pub fn get(&self, pixel: PixelCoord) -> Option<ClassId> {
        (pixel.row < self.height && pixel.col < self.width)
            .then(|| self.values[pixel.row as usize * self.width as usize + pixel.col as usize])
    }

    pub fn pixels(&self) -> impl Iterator<Item = (PixelCoord, ClassId)> + '_ {
        let width = self.width as usize;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (PixelCoord::new((i / width) as u32, (i % width) as u32), v))
    }

    fn set(&mut self, pixel: PixelCoord, value: ClassId) {
        let i = pixel.row as usize * self.width as usize + pixel.col as usize;
        self.values[i] = value;
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("\u{fffd}"))
    }
}

pub fn parse_label_map(bytes: &[u8]) -> Result<LabelMap, LabelError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = match bytes.get(..2) {
        Some(b"P2") => "P2",
        Some(b"P5") => "P5",
        Some(other) => return Err(LabelError::BadMagic(String::from_utf8_lossy(other).into_owned())),
        None => return Err(LabelError::BadMagic(String::from_utf8_lossy(bytes).into_owned())),
    };
    cur.pos = 2;
    let dim = |tok: Option<&str>, what: &str| -> Result<u32, LabelError> {
        let tok = tok.ok_or_else(|| LabelError::BadDimensions(format!("missing {what}")))?;
        match tok.parse::<u32>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(LabelError::BadDimensions(format!("invalid {what} `{tok}`"))),
        }
    };
    let width = dim(cur.token(), "width")?;
    let height = dim(cur.token(), "height")?;
    let maxval = cur.token().ok_or_else(|| LabelError::UnsupportedMaxval("<missing>".into()))?;
    if maxval != "255" {
        return Err(LabelError::UnsupportedMaxval(maxval.into()));
    }
    let expected = height as usize * width as usize;
    let mut values = Vec::with_capacity(expected);
    if magic == "P5" {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() < expected {
            return Err(LabelError::TruncatedData { expected, found: raster.len() });
        }
        values.extend(raster[..expected].iter().map(|&b| ClassId(b)));
    } else {
        while let Some(tok) = cur.token() {
            if values.len() == expected {
                return Err(LabelError::BadDimensions(format!("more than {expected} pixel values")));
            }
            let v: u8 = tok.parse().map_err(|_| LabelError::BadPixel(tok.into()))?;
            values.push(ClassId(v));
        }
        if values.len() < expected {
            return Err(LabelError::TruncatedData { expected, found: values.len() });
        }
    }
    LabelMap::new(height, width, values)
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap, LabelError> {
    parse_label_map(&fs::read(path)?)
}

/// Binary (P5) encoding.
pub fn encode_label_map(map: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(map.values.iter().map(|v| v.0));
    out
}

/// ASCII (P2) encoding, one raster row per line.
pub fn encode_label_map_ascii(map: &LabelMap) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", map.width, map.height);
    for row in map.values.chunks(map.width as usize) {
        let line: Vec<String> = row.iter().map(|v| v.0.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_label_map(map))
}

/// `<dir>/<image_name>.pgm`
pub fn label_map_path(dir: impl AsRef<Path>, image_name: &str) -> PathBuf {
    dir.as_ref().join(format!("{image_name}.pgm"))
}

/// Label of the depth-buffer winner at each pixel of `view`, VOID elsewhere.
pub fn render_ground_truth_labels(
    cloud: &PointCloud,
    view: &CameraView,
    map: &PointPixelMap,
) -> Result<LabelMap, LabelError> {
    let labels = cloud.labels().ok_or(LabelError::MissingLabels)?;
    let g = view.geometry;
    let mut out = LabelMap::void(g.height, g.width);
    for e in map.view_entries(view.view_id) {
        if !g.contains(e.pixel) {
            return Err(LabelError::GeometryMismatch {
                row: e.pixel.row,
                col: e.pixel.col,
                height: g.height,
                width: g.width,
            });
        }
        let label = *labels.get(e.point_id as usize).ok_or(LabelError::PointOutOfRange(e.point_id))?;
        if !label.is_void() && !label.in_taxonomy() {
            return Err(LabelError::UnknownClassId(label.0));
        }
        out.set(e.pixel, label);
    }
    Ok(out)
}

/// Replaces each non-VOID pixel, with probability `flip_rate`, by a uniformly
/// drawn different taxonomy class. Pixels are visited in row-major order from
/// a generator seeded with `seed`.
pub fn inject_label_noise(map: &LabelMap, flip_rate: f64, seed: u64) -> Result<LabelMap, LabelError> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(LabelError::InvalidFlipRate(flip_rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let others = ClassId::TAXONOMY_SIZE as u8 - 1;
    let values = map
        .values
        .iter()
        .map(|&v| {
            if v.is_void() || !rng.random_bool(flip_rate) {
                return v;
            }
            let k = rng.random_range(0..others);
            ClassId(if k >= v.0 { k + 1 } else { k })
        })
        .collect();
    Ok(LabelMap { height: map.height, width: map.width, values })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::mapping::{build_point_pixel_map, DEFAULT_DEPTH_EPSILON};
    use crate::scene::{project_point, ViewGeometry};

    fn ids(v: &[u8]) -> Vec<ClassId> {
        v.iter().map(|&x| ClassId(x)).collect()
    }

    #[test]
    fn parses_ascii_pgm() {
        let map = parse_label_map(b"P2\n# labels\n2 2\n255\n1 1\n2 0\n").unwrap();
        assert_eq!((map.height(), map.width()), (2, 2));
        assert_eq!(map.values(), ids(&[1, 1, 2, 0]).as_slice());
        assert_eq!(map.get(PixelCoord::new(1, 0)), Some(ClassId(2)));
        assert_eq!(map.get(PixelCoord::new(2, 0)), None);
    }

    #[test]
    fn header_is_width_then_height() {
        let map = parse_label_map(b"P2 3 1 255 0 1 2").unwrap();
        assert_eq!((map.height(), map.width()), (1, 3));
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(parse_label_map(b"P6\n1 1\n255\n\0"), Err(LabelError::BadMagic(m)) if m == "P6"));
        assert!(matches!(parse_label_map(b"P5\n0 1\n255\n"), Err(LabelError::BadDimensions(_))));
        assert!(matches!(parse_label_map(b"P5\nx 1\n255\n"), Err(LabelError::BadDimensions(_))));
        assert!(matches!(parse_label_map(b"P5\n2 2\n65535\n"), Err(LabelError::UnsupportedMaxval(_))));
        assert!(matches!(
            parse_label_map(b"P5\n2 2\n255\n\x01\x02"),
            Err(LabelError::TruncatedData { expected: 4, found: 2 })
        ));
        assert!(matches!(
            parse_label_map(b"P2\n2 2\n255\n1 2 3"),
            Err(LabelError::TruncatedData { expected: 4, found: 3 })
        ));
        assert!(matches!(parse_label_map(b"P2\n1 1\n255\n40"), Err(LabelError::UnknownClassId(40))));
    }

    #[test]
    fn renders_single_point() {
        let g = ViewGeometry::new(48, 64, 100.0, 100.0, 32.5, 24.5).unwrap();
        let view = CameraView::identity(g, 0, "v0");
        let cloud = PointCloud::new(vec![[0.0, 0.0, 2.0]], Some(vec![ClassId(11)])).unwrap();
        let map = build_point_pixel_map(&cloud, std::slice::from_ref(&view), DEFAULT_DEPTH_EPSILON).unwrap();
        let labels = render_ground_truth_labels(&cloud, &view, &map).unwrap();
        for (pixel, v) in labels.pixels() {
            let expected = if pixel == PixelCoord::new(24, 32) { ClassId(11) } else { ClassId::VOID };
            assert_eq!(v, expected);
        }

        let empty = PointCloud::new(vec![], Some(vec![])).unwrap();
        let map = build_point_pixel_map(&empty, std::slice::from_ref(&view), DEFAULT_DEPTH_EPSILON).unwrap();
        let labels = render_ground_truth_labels(&empty, &view, &map).unwrap();
        assert!(labels.values().iter().all(|v| v.is_void()));

        let unlabeled = PointCloud::unlabeled(vec![]).unwrap();
        assert!(matches!(
            render_ground_truth_labels(&unlabeled, &view, &map),
            Err(LabelError::MissingLabels)
        ));
    }

    #[test]
    fn render_matches_nearest_projector_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = ViewGeometry::new(24, 32, 20.0, 20.0, 16.0, 12.0).unwrap();
        let view = CameraView::identity(g, 4, "v");
        let n = 600;
        let positions: Vec<_> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0)])
            .collect();
        let labels: Vec<_> = (0..n).map(|_| ClassId(rng.random_range(0..15))).collect();
        let cloud = PointCloud::new(positions, Some(labels.clone())).unwrap();
        let map = build_point_pixel_map(&cloud, std::slice::from_ref(&view), DEFAULT_DEPTH_EPSILON).unwrap();
        let rendered = render_ground_truth_labels(&cloud, &view, &map).unwrap();

        let mut oracle = vec![(f64::INFINITY, ClassId::VOID); g.pixel_count()];
        for (i, p) in cloud.positions().iter().enumerate() {
            if let Some((px, d)) = project_point(p, &view).visible() {
                let slot = &mut oracle[px.row as usize * 32 + px.col as usize];
                if d < slot.0 {
                    *slot = (d, labels[i]);
                }
            }
        }
        let oracle: Vec<ClassId> = oracle.into_iter().map(|s| s.1).collect();
        assert_eq!(rendered.values(), oracle.as_slice());
    }

    #[test]
    fn noise_edge_rates() {
        let map = LabelMap::new(2, 3, ids(&[0, 5, 255, 14, 7, 255])).unwrap();
        assert_eq!(inject_label_noise(&map, 0.0, 1).unwrap(), map);
        let flipped = inject_label_noise(&map, 1.0, 1).unwrap();
        for (a, b) in map.values().iter().zip(flipped.values()) {
            if a.is_void() {
                assert_eq!(a, b);
            } else {
                assert_ne!(a, b);
                assert!(b.in_taxonomy());
            }
        }
        assert!(matches!(inject_label_noise(&map, 1.5, 1), Err(LabelError::InvalidFlipRate(_))));
    }

    #[test]
    fn noise_rate_concentrates() {
        // 1e5 Bernoulli(0.2) trials: sd = sqrt(0.16 / 1e5) ~ 0.00126, so
        // [0.19, 0.21] is about eight standard deviations wide.
        let values: Vec<ClassId> = (0..100_000).map(|i| ClassId((i % 15) as u8)).collect();
        let map = LabelMap::new(250, 400, values).unwrap();
        let noisy = inject_label_noise(&map, 0.2, 99).unwrap();
        let changed = map.values().iter().zip(noisy.values()).filter(|(a, b)| a != b).count();
        let fraction = changed as f64 / 100_000.0;
        assert!((0.19..=0.21).contains(&fraction), "flipped fraction {fraction}");
        assert_eq!(inject_label_noise(&map, 0.2, 99).unwrap(), noisy);
    }

    fn arb_map() -> impl Strategy<Value = LabelMap> {
        (1u32..20, 1u32..20).prop_flat_map(|(h, w)| {
            prop::collection::vec(prop_oneof![0u8..15, Just(255u8)], (h * w) as usize)
                .prop_map(move |v| LabelMap::new(h, w, ids(&v)).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pgm_round_trip(map in arb_map()) {
            prop_assert_eq!(&parse_label_map(&encode_label_map(&map)).unwrap(), &map);
            prop_assert_eq!(&parse_label_map(&encode_label_map_ascii(&map)).unwrap(), &map);
        }

        #[test]
        fn noise_never_keeps_flipped_label(map in arb_map(), rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let noisy = inject_label_noise(&map, rate, seed).unwrap();
            for (a, b) in map.values().iter().zip(noisy.values()) {
                prop_assert!(b.is_void() == a.is_void());
                prop_assert!(b.is_void() || b.in_taxonomy());
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = LabelMap::new(2, 2, ids(&[1, 1, 2, 0])).unwrap();
        let path = label_map_path(dir.path(), "cam_0");
        write_label_map(&map, &path).unwrap();
        assert!(path.ends_with("cam_0.pgm"));
        assert_eq!(load_label_map(&path).unwrap(), map);
    }
}
