//! Geometric data model: labeled point clouds, pinhole camera views and the
//! sampling operations applied to clouds before mapping.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod calib;
pub mod ply;

pub type Point3 = [f64; 3];
pub type Matrix3 = [[f64; 3]; 3];

/// Default minimum visible depth in meters.
pub const DEFAULT_Z_NEAR: f64 = 0.01;

const ROTATION_TOLERANCE: f64 = 1e-9;

const CLASS_NAMES: [&str; 15] = [
    "road",
    "sidewalk",
    "building/garage",
    "wall",
    "fence/gate",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "person",
    "car",
    "truck",
    "motorcycle",
    "bicycle",
];

/// Semantic class identifier. `255` is reserved for unlabeled pixels and points.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub const VOID: ClassId = ClassId(255);
    /// Number of classes in the built-in taxonomy (ids `0..15`).
    pub const TAXONOMY_SIZE: usize = CLASS_NAMES.len();

    pub fn is_void(self) -> bool {
        self == Self::VOID
    }

    pub fn in_taxonomy(self) -> bool {
        (self.0 as usize) < Self::TAXONOMY_SIZE
    }

    /// All taxonomy classes in ascending order.
    pub fn taxonomy() -> impl Iterator<Item = ClassId> {
        (0..Self::TAXONOMY_SIZE as u8).map(ClassId)
    }

    pub fn name(self) -> Option<&'static str> {
        CLASS_NAMES.get(self.0 as usize).copied()
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("point {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("cloud has {positions} positions but {labels} labels")]
    LabelLengthMismatch { positions: usize, labels: usize },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxelSize(f64),
    #[error("cylinder radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("invalid view geometry: {0}")]
    InvalidGeometry(String),
    #[error("rotation of view {view_id} is not a proper orthonormal matrix")]
    NonOrthonormalRotation { view_id: u32 },
    #[error("translation of view {view_id} is not finite")]
    NonFiniteTranslation { view_id: u32 },
    #[error("duplicate view id {0}")]
    DuplicateViewId(u32),
    #[error("point cloud has no labels")]
    MissingLabels,
}

/// Ordered set of 3D points with optional per-point class labels.
///
/// The index of a point in `positions` is its identity everywhere else in the
/// pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3>,
    labels: Option<Vec<ClassId>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3>, labels: Option<Vec<ClassId>>) -> Result<Self, SceneError> {
        if let Some(index) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(SceneError::NonFiniteCoordinate { index });
        }
        if let Some(labels) = &labels {
            if labels.len() != positions.len() {
                return Err(SceneError::LabelLengthMismatch {
                    positions: positions.len(),
                    labels: labels.len(),
                });
            }
        }
        Ok(Self { positions, labels })
    }

    pub fn unlabeled(positions: Vec<Point3>) -> Result<Self, SceneError> {
        Self::new(positions, None)
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[ClassId], SceneError> {
        self.labels().ok_or(SceneError::MissingLabels)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// New cloud made of the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Image size and pinhole intrinsics of a view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub height: u32,
    pub width: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub z_near: f64,
}

impl ViewGeometry {
    pub fn new(height: u32, width: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, SceneError> {
        Self::with_z_near(height, width, fx, fy, cx, cy, DEFAULT_Z_NEAR)
    }

    pub fn with_z_near(
        height: u32,
        width: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        z_near: f64,
    ) -> Result<Self, SceneError> {
        let geometry = Self { height, width, fx, fy, cx, cy, z_near };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.height == 0 || self.width == 0 {
            return Err(SceneError::InvalidGeometry(format!(
                "image size {}x{} must be at least 1x1",
                self.height, self.width
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(SceneError::InvalidGeometry(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(SceneError::InvalidGeometry("principal point must be finite".into()));
        }
        if !(self.z_near > 0.0 && self.z_near.is_finite()) {
            return Err(SceneError::InvalidGeometry(format!(
                "z_near must be positive, got {}",
                self.z_near
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn contains(&self, pixel: PixelCoord) -> bool {
        pixel.row < self.height && pixel.col < self.width
    }
}

/// Integer pixel position; pixel `(r, c)` covers `[r, r+1) x [c, c+1)` in
/// continuous image coordinates.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct PixelCoord {
    pub row: u32,
    pub col: u32,
}

impl PixelCoord {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

/// A calibrated pinhole camera. The camera looks down `+z` with `x` to the
/// right and `y` down; `rotation` and `translation` map world to camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub geometry: ViewGeometry,
    pub rotation: Matrix3,
    pub translation: Point3,
    pub view_id: u32,
    pub image_name: String,
}

impl CameraView {
    pub fn new(
        geometry: ViewGeometry,
        rotation: Matrix3,
        translation: Point3,
        view_id: u32,
        image_name: impl Into<String>,
    ) -> Result<Self, SceneError> {
        geometry.validate()?;
        if !is_rotation(&rotation) {
            return Err(SceneError::NonOrthonormalRotation { view_id });
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(SceneError::NonFiniteTranslation { view_id });
        }
        Ok(Self {
            geometry,
            rotation,
            translation,
            view_id,
            image_name: image_name.into(),
        })
    }

    /// Camera at the world origin looking down world `+z`.
    pub fn identity(geometry: ViewGeometry, view_id: u32, image_name: impl Into<String>) -> Self {
        Self {
            geometry,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            view_id,
            image_name: image_name.into(),
        }
    }

    pub fn to_camera(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }
}

fn is_rotation(r: &Matrix3) -> bool {
    if !r.iter().flatten().all(|v| v.is_finite()) {
        return false;
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (dot - expected).abs() > ROTATION_TOLERANCE {
                return false;
            }
        }
    }
    (determinant(r) - 1.0).abs() <= ROTATION_TOLERANCE
}

pub fn determinant(r: &Matrix3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Fails with [`SceneError::DuplicateViewId`] on the first repeated id.
pub fn check_unique_view_ids(views: &[CameraView]) -> Result<(), SceneError> {
    let mut seen = std::collections::BTreeSet::new();
    for view in views {
        if !seen.insert(view.view_id) {
            return Err(SceneError::DuplicateViewId(view.view_id));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { pixel: PixelCoord, depth: f64 },
    NotVisible,
}

impl Projection {
    pub fn visible(self) -> Option<(PixelCoord, f64)> {
        match self {
            Projection::Visible { pixel, depth } => Some((pixel, depth)),
            Projection::NotVisible => None,
        }
    }
}

/// Continuous image coordinates `(u, v)` of a camera-frame point, or `None`
/// in front of `z_near`.
pub fn image_coords(camera_point: &Point3, geometry: &ViewGeometry) -> Option<(f64, f64)> {
    let z = camera_point[2];
    if z.is_nan() || z < geometry.z_near {
        return None;
    }
    let u = geometry.fx * camera_point[0] / z + geometry.cx;
    let v = geometry.fy * camera_point[1] / z + geometry.cy;
    Some((u, v))
}

pub fn project_point(point: &Point3, view: &CameraView) -> Projection {
    let pc = view.to_camera(point);
    let Some((u, v)) = image_coords(&pc, &view.geometry) else {
        return Projection::NotVisible;
    };
    let (u, v) = (u.floor(), v.floor());
    // the comparisons also reject NaN
    if !(u >= 0.0 && v >= 0.0 && u < view.geometry.width as f64 && v < view.geometry.height as f64) {
        return Projection::NotVisible;
    }
    Projection::Visible {
        pixel: PixelCoord::new(v as u32, u as u32),
        depth: pc[2],
    }
}

/// Integer voxel key of a point for cell size `voxel_size`.
pub fn voxel_key(p: &Point3, voxel_size: f64) -> [i64; 3] {
    [
        (p[0] / voxel_size).floor() as i64,
        (p[1] / voxel_size).floor() as i64,
        (p[2] / voxel_size).floor() as i64,
    ]
}

/// Keeps one point per occupied voxel: the member nearest to the voxel center
/// (lowest index on ties). The representative takes the majority label of the
/// voxel, lowest class id on ties. Output is in lexicographic voxel-key order.
pub fn voxel_subsample(cloud: &PointCloud, voxel_size: f64) -> Result<(PointCloud, Vec<usize>), SceneError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(SceneError::InvalidVoxelSize(voxel_size));
    }
    if cloud.is_empty() {
        return Err(SceneError::EmptyCloud);
    }
    let mut voxels: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        voxels.entry(voxel_key(p, voxel_size)).or_default().push(i);
    }

    let mut index_map = Vec::with_capacity(voxels.len());
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(voxels.len()));
    for (key, members) in &voxels {
        let center = key.map(|k| (k as f64 + 0.5) * voxel_size);
        let mut best = members[0];
        let mut best_d2 = dist2(&cloud.positions[best], &center);
        for &i in &members[1..] {
            let d2 = dist2(&cloud.positions[i], &center);
            if d2 < best_d2 {
                best = i;
                best_d2 = d2;
            }
        }
        index_map.push(best);
        if let (Some(out), Some(src)) = (labels.as_mut(), cloud.labels.as_ref()) {
            out.push(majority_label(members.iter().map(|&i| src[i])));
        }
    }
    let positions = index_map.iter().map(|&i| cloud.positions[i]).collect();
    Ok((PointCloud { positions, labels }, index_map))
}

fn majority_label(labels: impl Iterator<Item = ClassId>) -> ClassId {
    let mut counts = [0u32; 256];
    for l in labels {
        counts[l.index()] += 1;
    }
    let mut best = 0;
    for c in 1..256 {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    ClassId(best as u8)
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Points inside the vertical cylinder around `center_xy`, in original order.
pub fn cylinder_crop(
    cloud: &PointCloud,
    center_xy: [f64; 2],
    radius: f64,
) -> Result<(PointCloud, Vec<usize>), SceneError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SceneError::InvalidRadius(radius));
    }
    let r2 = radius * radius;
    let index_map: Vec<usize> = cloud
        .positions
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let dx = p[0] - center_xy[0];
            let dy = p[1] - center_xy[1];
            dx * dx + dy * dy <= r2
        })
        .map(|(i, _)| i)
        .collect();
    Ok((cloud.select(&index_map), index_map))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn test_geometry(height: u32, width: u32) -> ViewGeometry {
        ViewGeometry::new(height, width, 100.0, 100.0, 32.5, 24.5).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let view = CameraView::identity(test_geometry(48, 64), 0, "v0");
        assert_eq!(
            project_point(&[0.0, 0.0, 2.0], &view),
            Projection::Visible { pixel: PixelCoord::new(24, 32), depth: 2.0 }
        );
    }

    #[test]
    fn behind_camera_is_not_visible() {
        let view = CameraView::identity(test_geometry(48, 64), 0, "v0");
        assert_eq!(project_point(&[0.0, 0.0, -1.0], &view), Projection::NotVisible);
        assert_eq!(project_point(&[0.0, 0.0, 0.005], &view), Projection::NotVisible);
    }

    #[test]
    fn off_axis_point_uses_pinhole_formula() {
        // u = 100 * 1 / 2 + 32.5 = 82.5, v = 24.5
        let wide = CameraView::identity(test_geometry(48, 128), 0, "wide");
        assert_eq!(
            project_point(&[1.0, 0.0, 2.0], &wide),
            Projection::Visible { pixel: PixelCoord::new(24, 82), depth: 2.0 }
        );
        // column 82 is outside a 64-pixel-wide image
        let narrow = CameraView::identity(test_geometry(48, 64), 0, "narrow");
        assert_eq!(project_point(&[1.0, 0.0, 2.0], &narrow), Projection::NotVisible);
    }

    #[test]
    fn pose_is_applied_before_projection() {
        // 90 degrees about y: world +x becomes camera -z
        let rotation = [[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let view = CameraView::new(test_geometry(48, 64), rotation, [0.0, 0.0, 5.0], 3, "r").unwrap();
        // camera frame: (-(z), y, x + 5)
        assert_eq!(
            project_point(&[-3.0, 0.0, 0.0], &view),
            Projection::Visible { pixel: PixelCoord::new(24, 32), depth: 2.0 }
        );
    }

    #[test]
    fn rejects_bad_rotation_and_geometry() {
        let g = test_geometry(48, 64);
        let scaled = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(
            CameraView::new(g, scaled, [0.0; 3], 4, "x").unwrap_err(),
            SceneError::NonOrthonormalRotation { view_id: 4 }
        );
        let reflection = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraView::new(g, reflection, [0.0; 3], 4, "x").is_err());
        assert!(ViewGeometry::new(0, 10, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ViewGeometry::new(10, 10, -1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ViewGeometry::with_z_near(10, 10, 1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cloud_invariants() {
        assert_eq!(
            PointCloud::unlabeled(vec![[0.0, f64::NAN, 0.0]]).unwrap_err(),
            SceneError::NonFiniteCoordinate { index: 0 }
        );
        assert_eq!(
            PointCloud::new(vec![[0.0; 3]], Some(vec![])).unwrap_err(),
            SceneError::LabelLengthMismatch { positions: 1, labels: 0 }
        );
        let mut views = vec![CameraView::identity(test_geometry(4, 4), 1, "a")];
        views.push(CameraView::identity(test_geometry(4, 4), 1, "b"));
        assert_eq!(check_unique_view_ids(&views), Err(SceneError::DuplicateViewId(1)));
    }

    #[test]
    fn taxonomy_names() {
        assert_eq!(ClassId(0).name(), Some("road"));
        assert_eq!(ClassId(6).name(), Some("traffic light"));
        assert_eq!(ClassId(14).name(), Some("bicycle"));
        assert_eq!(ClassId(15).name(), None);
        assert!(!ClassId::VOID.in_taxonomy());
        assert_eq!(ClassId::taxonomy().count(), 15);
    }

    #[test]
    fn voxel_examples() {
        let same = PointCloud::unlabeled(vec![[0.0; 3], [0.01, 0.0, 0.0]]).unwrap();
        assert_eq!(voxel_subsample(&same, 0.05).unwrap().0.len(), 1);
        let apart = PointCloud::unlabeled(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(voxel_subsample(&apart, 0.05).unwrap().0.len(), 2);
        assert_eq!(
            voxel_subsample(&PointCloud::unlabeled(vec![]).unwrap(), 0.05).unwrap_err(),
            SceneError::EmptyCloud
        );
        assert!(voxel_subsample(&same, 0.0).is_err());
    }

    #[test]
    fn voxel_representative_and_label() {
        // voxel [0,0,0] of size 1 has center (0.5, 0.5, 0.5)
        let cloud = PointCloud::new(
            vec![[0.1, 0.1, 0.1], [0.5, 0.5, 0.4], [0.9, 0.9, 0.9], [0.5, 0.5, 0.6]],
            Some(vec![ClassId(3), ClassId(3), ClassId(7), ClassId(7)]),
        )
        .unwrap();
        let (out, map) = voxel_subsample(&cloud, 1.0).unwrap();
        // points 1 and 3 tie on distance; the lower index wins
        assert_eq!(map, vec![1]);
        // 3 and 7 tie on count; the lower class wins
        assert_eq!(out.labels().unwrap(), &[ClassId(3)]);
    }

    #[test]
    fn voxel_output_is_key_ordered() {
        let cloud = PointCloud::unlabeled(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let (_, map) = voxel_subsample(&cloud, 0.5).unwrap();
        assert_eq!(map, vec![1, 2, 0]);
    }

    #[test]
    fn voxel_count_matches_hash_grid_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let positions: Vec<Point3> = (0..10_000)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5)])
            .collect();
        let cloud = PointCloud::unlabeled(positions.clone()).unwrap();
        let (out, _) = voxel_subsample(&cloud, 0.05).unwrap();
        let oracle: HashSet<(i64, i64, i64)> = positions
            .iter()
            .map(|p| {
                (
                    (p[0] / 0.05).floor() as i64,
                    (p[1] / 0.05).floor() as i64,
                    (p[2] / 0.05).floor() as i64,
                )
            })
            .collect();
        assert_eq!(out.len(), oracle.len());
    }

    #[test]
    fn cylinder_boundary() {
        let r = 2.0;
        let cloud = PointCloud::unlabeled(vec![[r - 1e-6, 0.0, 10.0], [0.0, r + 1e-6, -3.0]]).unwrap();
        let (out, map) = cylinder_crop(&cloud, [0.0, 0.0], r).unwrap();
        assert_eq!(map, vec![0]);
        assert_eq!(out.len(), 1);
        assert!(cylinder_crop(&cloud, [0.0, 0.0], -1.0).is_err());
    }

    fn arb_cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..max)
    }

    proptest! {
        #[test]
        fn cylinder_matches_filter_oracle(pts in arb_cloud(300), cx in -2.0f64..2.0, cy in -2.0f64..2.0, r in 0.1f64..4.0) {
            let cloud = PointCloud::unlabeled(pts.clone()).unwrap();
            let (_, map) = cylinder_crop(&cloud, [cx, cy], r).unwrap();
            let mut oracle = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                if (p[0] - cx).powi(2) + (p[1] - cy).powi(2) <= r * r {
                    oracle.push(i);
                }
            }
            prop_assert_eq!(map, oracle);
        }

        #[test]
        fn cylinder_crops_are_nested(pts in arb_cloud(300), r1 in 0.1f64..3.0, dr in 0.0f64..3.0) {
            let cloud = PointCloud::unlabeled(pts).unwrap();
            let (_, small) = cylinder_crop(&cloud, [0.3, -0.2], r1).unwrap();
            let (_, large) = cylinder_crop(&cloud, [0.3, -0.2], r1 + dr).unwrap();
            let large: HashSet<usize> = large.into_iter().collect();
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }

        #[test]
        fn voxel_subsample_is_idempotent(pts in arb_cloud(400), s in 0.05f64..2.0) {
            let labels = (0..pts.len()).map(|i| ClassId((i % 4) as u8)).collect();
            let cloud = PointCloud::new(pts, Some(labels)).unwrap();
            let (once, map) = voxel_subsample(&cloud, s).unwrap();
            let keys: HashSet<[i64; 3]> = once.positions().iter().map(|p| voxel_key(p, s)).collect();
            prop_assert_eq!(keys.len(), once.len());
            let unique: HashSet<usize> = map.iter().copied().collect();
            prop_assert_eq!(unique.len(), map.len());
            prop_assert!(map.iter().all(|&i| i < cloud.len()));
            let (twice, map2) = voxel_subsample(&once, s).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(map2, (0..once.len()).collect::<Vec<_>>());
        }

        #[test]
        fn projection_is_scale_consistent(x in -3.0f64..3.0, y in -3.0f64..3.0, z in 0.5f64..20.0, lambda in 1.0f64..50.0) {
            let g = ViewGeometry::new(480, 640, 500.0, 500.0, 320.0, 240.0).unwrap();
            let (u1, v1) = image_coords(&[x, y, z], &g).unwrap();
            let (u2, v2) = image_coords(&[lambda * x, lambda * y, lambda * z], &g).unwrap();
            prop_assert!((u1 - u2).abs() <= 1e-9 * (1.0 + u1.abs()));
            prop_assert!((v1 - v2).abs() <= 1e-9 * (1.0 + v1.abs()));
        }
    }
}
