//! Deterministic synthetic scenes with exact per-point labels.
//!
//! Points are sampled uniformly on primitive surfaces. Sampling is
//! counter-based: the draws for point `i` of object `k` come from a ChaCha8
//! keystream keyed by the scene seed, on stream `k`, at a word offset fixed by
//! `i`. No generator state is shared between points or objects, so output does
//! not depend on evaluation order or thread count.
//!
//! Scene files are TOML:
//!
//! ```toml
//! seed = 7
//! extent = [60.0, 40.0, 20.0]
//! max_points = 1000000
//!
//! [[objects]]
//! class = 0
//! density = 50.0
//! shape = { kind = "plane", size = [40.0, 8.0] }
//! pose = { position = [0.0, 0.0, 0.0], rotation_deg = [0.0, 0.0, 0.0] }
//!
//! [[cameras]]
//! view_id = 0
//! image_name = "cam_0"
//! height = 240
//! width = 320
//! fx = 200.0
//! fy = 200.0
//! cx = 160.0
//! cy = 120.0
//! position = [-15.0, 0.0, 1.6]
//! look_at = [0.0, 0.0, 0.5]
//! ```
//!
//! Local shape frames: planes span local x/y at z = 0, boxes and spheres are
//! centered on the origin, cylinders run along local z from `-height/2` to
//! `height/2`. `rotation_deg` is roll, pitch, yaw about x, y, z applied in
//! that order.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{CameraView, ClassId, Matrix3, Point3, PointCloud, SceneError, ViewGeometry};

/// 32-bit keystream words reserved for each sampled point.
const WORDS_PER_POINT: u128 = 16;
const DEFAULT_MAX_POINTS: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene would have {requested} points, above the cap of {cap}")]
    PointBudgetExceeded { requested: usize, cap: usize },
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("camera {0}: look direction is parallel to its down hint")]
    DegenerateCamera(u32),
    #[error("point cloud has no labels")]
    MissingLabels,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Plane { size: [f64; 2] },
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Plane { size: [a, b] } => a * b,
            Shape::Box { size: [a, b, c] } => 2.0 * (a * b + a * c + b * c),
            Shape::Cylinder { radius, height } => TAU * radius * height + 2.0 * PI * radius * radius,
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
        }
    }

    fn dimensions(&self) -> Vec<f64> {
        match *self {
            Shape::Plane { size } => size.to_vec(),
            Shape::Box { size } => size.to_vec(),
            Shape::Cylinder { radius, height } => vec![radius, height],
            Shape::Sphere { radius } => vec![radius],
        }
    }

    /// A point on the surface in the local frame from uniform draws.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let mut u = || rng.random::<f64>();
        match *self {
            Shape::Plane { size: [sx, sy] } => [(u() - 0.5) * sx, (u() - 0.5) * sy, 0.0],
            Shape::Box { size: [sx, sy, sz] } => {
                let faces = [sx * sy, sx * sy, sx * sz, sx * sz, sy * sz, sy * sz];
                let total: f64 = faces.iter().sum();
                let mut pick = u() * total;
                let mut face = faces.len() - 1;
                for (i, a) in faces.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let (a, b) = (u() - 0.5, u() - 0.5);
                let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
                match face {
                    0 => [a * sx, b * sy, hz],
                    1 => [a * sx, b * sy, -hz],
                    2 => [a * sx, hy, b * sz],
                    3 => [a * sx, -hy, b * sz],
                    4 => [hx, a * sy, b * sz],
                    _ => [-hx, a * sy, b * sz],
                }
            }
            Shape::Cylinder { radius, height } => {
                let lateral = TAU * radius * height;
                let cap = PI * radius * radius;
                let pick = u() * (lateral + 2.0 * cap);
                if pick < lateral {
                    let theta = TAU * u();
                    let z = (u() - 0.5) * height;
                    [radius * theta.cos(), radius * theta.sin(), z]
                } else {
                    let rho = radius * u().sqrt();
                    let theta = TAU * u();
                    let z = if pick < lateral + cap { height / 2.0 } else { -height / 2.0 };
                    [rho * theta.cos(), rho * theta.sin(), z]
                }
            }
            Shape::Sphere { radius } => {
                let z = 2.0 * u() - 1.0;
                let phi = TAU * u();
                let s = (1.0 - z * z).max(0.0).sqrt();
                [radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3,
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl Pose {
    pub fn at(position: Point3) -> Self {
        Self { position, rotation_deg: [0.0; 3] }
    }

    pub fn rotation(&self) -> Matrix3 {
        let [roll, pitch, yaw] = self.rotation_deg.map(f64::to_radians);
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        // Rz(yaw) * Ry(pitch) * Rx(roll)
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: ClassId,
    /// Points per square meter of surface.
    pub density: f64,
    pub shape: Shape,
    #[serde(default)]
    pub pose: Pose,
}

impl ObjectSpec {
    pub fn point_count(&self) -> usize {
        (self.shape.area() * self.density).round() as usize
    }
}

fn default_down() -> Point3 {
    [0.0, 0.0, -1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub view_id: u32,
    pub image_name: String,
    pub height: u32,
    pub width: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub position: Point3,
    pub look_at: Point3,
    /// World direction that should appear toward the bottom of the image.
    #[serde(default = "default_down")]
    pub down: Point3,
}

impl CameraSpec {
    pub fn to_view(&self) -> Result<CameraView, SynthError> {
        let geometry = ViewGeometry::new(self.height, self.width, self.fx, self.fy, self.cx, self.cy)?;
        let forward = normalize(sub(self.look_at, self.position)).ok_or_else(|| {
            SynthError::InvalidSpec(format!("camera {} looks at its own position", self.view_id))
        })?;
        let right = normalize(cross(self.down, forward)).ok_or(SynthError::DegenerateCamera(self.view_id))?;
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = [
            -dot(right, self.position),
            -dot(down, self.position),
            -dot(forward, self.position),
        ];
        Ok(CameraView::new(geometry, rotation, translation, self.view_id, self.image_name.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Scene bounding box size in meters, centered on the origin.
    pub extent: [f64; 3],
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub cameras: Vec<CameraSpec>,
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        if !self.extent.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return invalid(format!("extent {:?} must be positive", self.extent));
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !o.class.in_taxonomy() {
                return invalid(format!("object {k}: class {} is not in the taxonomy", o.class));
            }
            if !(o.density > 0.0 && o.density.is_finite()) {
                return invalid(format!("object {k}: density must be positive"));
            }
            if !o.shape.dimensions().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return invalid(format!("object {k}: dimensions must be positive"));
            }
            let inside = (0..3).all(|i| o.pose.position[i].abs() <= self.extent[i] / 2.0);
            if !inside || !o.pose.rotation_deg.iter().all(|r| r.is_finite()) {
                return invalid(format!("object {k}: pose outside the scene extent"));
            }
        }
        let requested = self.point_count();
        if requested > self.max_points {
            return Err(SynthError::PointBudgetExceeded { requested, cap: self.max_points });
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.objects.iter().map(ObjectSpec::point_count).sum()
    }

    /// Expected share of points per class.
    pub fn class_mix(&self) -> BTreeMap<ClassId, f64> {
        let total = self.point_count().max(1) as f64;
        let mut mix = BTreeMap::new();
        for o in &self.objects {
            *mix.entry(o.class).or_insert(0.0) += o.point_count() as f64 / total;
        }
        mix
    }

    /// A street corridor with every taxonomy class and four cameras.
    pub fn urban(seed: u64) -> Self {
        let obj = |class: u8, density: f64, shape: Shape, position: Point3, yaw: f64| ObjectSpec {
            class: ClassId(class),
            density,
            shape,
            pose: Pose { position, rotation_deg: [0.0, 0.0, yaw] },
        };
        let plane = |sx: f64, sy: f64| Shape::Plane { size: [sx, sy] };
        let cuboid = |x: f64, y: f64, z: f64| Shape::Box { size: [x, y, z] };
        let objects = vec![
            obj(0, 40.0, plane(40.0, 8.0), [0.0, 0.0, 0.0], 0.0),
            obj(1, 60.0, plane(40.0, 3.0), [0.0, 5.5, 0.15], 0.0),
            obj(1, 60.0, plane(40.0, 3.0), [0.0, -5.5, 0.15], 0.0),
            obj(9, 20.0, plane(40.0, 4.0), [0.0, 9.0, 0.05], 0.0),
            obj(2, 15.0, cuboid(12.0, 6.0, 9.0), [-10.0, 14.0, 4.5], 0.0),
            obj(2, 15.0, cuboid(10.0, 6.0, 12.0), [8.0, -14.0, 6.0], 0.0),
            obj(3, 40.0, cuboid(10.0, 0.3, 1.5), [8.0, 10.5, 0.75], 0.0),
            obj(4, 60.0, cuboid(12.0, 0.1, 1.2), [-8.0, -8.0, 0.6], 0.0),
            obj(5, 300.0, Shape::Cylinder { radius: 0.08, height: 5.0 }, [-3.0, 4.5, 2.5], 0.0),
            obj(5, 300.0, Shape::Cylinder { radius: 0.08, height: 5.0 }, [6.0, -4.5, 2.5], 0.0),
            obj(6, 400.0, cuboid(0.3, 0.3, 0.9), [-3.0, 4.5, 5.45], 0.0),
            obj(7, 400.0, cuboid(0.05, 0.7, 0.7), [6.0, -4.5, 3.5], 0.0),
            obj(8, 50.0, Shape::Sphere { radius: 1.5 }, [12.0, 8.5, 2.5], 0.0),
            obj(8, 50.0, Shape::Sphere { radius: 1.2 }, [-14.0, -8.5, 2.0], 0.0),
            obj(10, 300.0, Shape::Cylinder { radius: 0.25, height: 1.75 }, [2.0, 5.0, 1.025], 0.0),
            obj(11, 80.0, cuboid(4.5, 1.8, 1.5), [-6.0, -2.0, 0.75], 0.0),
            obj(11, 80.0, cuboid(4.2, 1.8, 1.4), [9.0, 2.0, 0.7], 10.0),
            obj(12, 50.0, cuboid(8.0, 2.5, 3.2), [-14.0, 2.2, 1.6], 0.0),
            obj(13, 300.0, cuboid(2.0, 0.6, 1.1), [3.0, -3.0, 0.55], 15.0),
            obj(14, 400.0, cuboid(1.7, 0.4, 1.0), [0.0, 6.2, 0.65], 0.0),
        ];
        let cam = |view_id: u32, position: Point3, look_at: Point3| CameraSpec {
            view_id,
            image_name: format!("cam_{view_id}"),
            height: 240,
            width: 320,
            fx: 200.0,
            fy: 200.0,
            cx: 160.0,
            cy: 120.0,
            position,
            look_at,
            down: default_down(),
        };
        let cameras = vec![
            cam(0, [-18.0, 0.0, 1.8], [0.0, 0.0, 0.5]),
            cam(1, [18.0, 1.0, 1.8], [0.0, 0.0, 0.5]),
            cam(2, [0.0, -3.0, 2.0], [-6.0, 6.0, 1.0]),
            cam(3, [0.0, 3.0, 2.0], [6.0, -6.0, 1.0]),
        ];
        Self { seed, extent: [60.0, 40.0, 20.0], max_points: DEFAULT_MAX_POINTS, objects, cameras }
    }

    /// A flat 20 m x 20 m ground of roughly `total_points` points, split
    /// into a road strip (class 0) covering `road_fraction` of the area and
    /// terrain (class 9), seen from above by four 480x640 cameras that each
    /// cover the whole ground.
    pub fn coverage(total_points: usize, road_fraction: f64, seed: u64) -> Self {
        const SIDE: f64 = 20.0;
        let density = total_points as f64 / (SIDE * SIDE);
        let f = road_fraction.clamp(0.0, 1.0);
        let mut objects = Vec::new();
        if f > 0.0 {
            objects.push(ObjectSpec {
                class: ClassId(0),
                density,
                shape: Shape::Plane { size: [SIDE * f, SIDE] },
                pose: Pose::at([-SIDE / 2.0 + SIDE * f / 2.0, 0.0, 0.0]),
            });
        }
        if f < 1.0 {
            objects.push(ObjectSpec {
                class: ClassId(9),
                density,
                shape: Shape::Plane { size: [SIDE * (1.0 - f), SIDE] },
                pose: Pose::at([-SIDE / 2.0 + SIDE * f + SIDE * (1.0 - f) / 2.0, 0.0, 0.0]),
            });
        }
        let cameras = [[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0], [0.5, -1.0]]
            .iter()
            .enumerate()
            .map(|(k, [x, y])| CameraSpec {
                view_id: k as u32,
                image_name: format!("top_{k}"),
                height: 480,
                width: 640,
                fx: 400.0,
                fy: 400.0,
                cx: 320.0,
                cy: 240.0,
                position: [*x, *y, 22.0],
                look_at: [0.0, 0.0, 0.0],
                down: [0.0, -1.0, 0.0],
            })
            .collect();
        Self {
            seed,
            extent: [SIDE + 2.0, SIDE + 2.0, 50.0],
            max_points: total_points.max(1) * 2,
            objects,
            cameras,
        }
    }
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: Point3) -> Option<Point3> {
    let n = dot(v, v).sqrt();
    (n > 1e-9).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn transform(r: &Matrix3, t: &Point3, p: Point3) -> Point3 {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
    ]
}

/// Surface samples of one object: point `i` draws from the keystream of
/// stream `object_index` starting at word `i * WORDS_PER_POINT`.
pub fn sample_object(seed: u64, object_index: u64, object: &ObjectSpec) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(object_index);
    let rotation = object.pose.rotation();
    (0..object.point_count())
        .map(|i| {
            rng.set_word_pos(i as u128 * WORDS_PER_POINT);
            transform(&rotation, &object.pose.position, object.shape.sample(&mut rng))
        })
        .collect()
}

pub fn generate_scene(spec: &SceneSpec) -> Result<(PointCloud, Vec<CameraView>), SynthError> {
    spec.validate()?;
    let per_object: Vec<Vec<Point3>> = spec
        .objects
        .par_iter()
        .enumerate()
        .map(|(k, o)| sample_object(spec.seed, k as u64, o))
        .collect();
    let mut positions = Vec::with_capacity(spec.point_count());
    let mut labels = Vec::with_capacity(spec.point_count());
    for (points, object) in per_object.into_iter().zip(&spec.objects) {
        labels.extend(std::iter::repeat_n(object.class, points.len()));
        positions.extend(points);
    }
    let cloud = PointCloud::new(positions, Some(labels))?;
    let views = spec.cameras.iter().map(CameraSpec::to_view).collect::<Result<Vec<_>, _>>()?;
    crate::scene::check_unique_view_ids(&views)?;
    Ok((cloud, views))
}

/// Share of points whose label is one of `targets`; zero for an empty cloud.
pub fn class_fraction(cloud: &PointCloud, targets: &BTreeSet<ClassId>) -> Result<f64, SynthError> {
    let labels = cloud.labels().ok_or(SynthError::MissingLabels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = labels.iter().filter(|l| targets.contains(l)).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ply::write_ply;

    fn single(shape: Shape, density: f64, pose: Pose) -> SceneSpec {
        SceneSpec {
            seed: 42,
            extent: [100.0; 3],
            max_points: 1_000_000,
            objects: vec![ObjectSpec { class: ClassId(3), density, shape, pose }],
            cameras: vec![],
        }
    }

    #[test]
    fn deterministic_bytes() {
        let spec = SceneSpec::urban(5);
        let bytes = |spec: &SceneSpec| {
            let (cloud, _) = generate_scene(spec).unwrap();
            let mut out = Vec::new();
            write_ply(&cloud, &mut out).unwrap();
            out
        };
        assert_eq!(bytes(&spec), bytes(&spec));
        let other = SceneSpec { seed: 6, ..spec.clone() };
        assert_ne!(bytes(&spec), bytes(&other));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let spec = SceneSpec::urban(9);
        let (a, _) = generate_scene(&spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (b, _) = pool.install(|| generate_scene(&spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plane_count_formula() {
        let spec = single(Shape::Plane { size: [5.0, 2.0] }, 100.0, Pose::default());
        let (cloud, _) = generate_scene(&spec).unwrap();
        assert_eq!(cloud.len(), 1000);
        assert!(cloud.positions().iter().all(|p| p[2] == 0.0 && p[0].abs() <= 2.5 && p[1].abs() <= 1.0));
    }

    #[test]
    fn sphere_points_on_surface() {
        let pose = Pose { position: [1.0, -2.0, 3.0], rotation_deg: [10.0, 20.0, 30.0] };
        let spec = single(Shape::Sphere { radius: 1.5 }, 200.0, pose);
        let (cloud, _) = generate_scene(&spec).unwrap();
        assert!(cloud.len() > 5000);
        for p in cloud.positions() {
            let r = ((p[0] - 1.0).powi(2) + (p[1] + 2.0).powi(2) + (p[2] - 3.0).powi(2)).sqrt();
            assert!((r - 1.5).abs() <= 1e-9);
        }
    }

    #[test]
    fn box_and_cylinder_points_on_surface() {
        let (cloud, _) = generate_scene(&single(Shape::Box { size: [2.0, 1.0, 0.5] }, 500.0, Pose::default())).unwrap();
        for p in cloud.positions() {
            let on_face = (p[0].abs() - 1.0).abs() <= 1e-9 || (p[1].abs() - 0.5).abs() <= 1e-9 || (p[2].abs() - 0.25).abs() <= 1e-9;
            assert!(on_face && p[0].abs() <= 1.0 + 1e-9 && p[1].abs() <= 0.5 + 1e-9 && p[2].abs() <= 0.25 + 1e-9);
        }
        let (cloud, _) =
            generate_scene(&single(Shape::Cylinder { radius: 0.5, height: 2.0 }, 500.0, Pose::default())).unwrap();
        for p in cloud.positions() {
            let rho = p[0].hypot(p[1]);
            let lateral = (rho - 0.5).abs() <= 1e-9 && p[2].abs() <= 1.0;
            let cap = (p[2].abs() - 1.0).abs() <= 1e-9 && rho <= 0.5 + 1e-9;
            assert!(lateral || cap);
        }
    }

    #[test]
    fn object_samples_are_counter_based() {
        // Growing the density of one object leaves a prefix of its samples
        // unchanged and never touches other objects.
        let o = ObjectSpec { class: ClassId(1), density: 10.0, shape: Shape::Sphere { radius: 1.0 }, pose: Pose::default() };
        let dense = ObjectSpec { density: 20.0, ..o.clone() };
        let a = sample_object(3, 0, &o);
        let b = sample_object(3, 0, &dense);
        assert_eq!(a[..], b[..a.len()]);
        assert_ne!(sample_object(3, 1, &o), a);
    }

    #[test]
    fn budget_and_validation() {
        let mut spec = single(Shape::Plane { size: [10.0, 10.0] }, 100.0, Pose::default());
        spec.max_points = 500;
        assert!(matches!(
            generate_scene(&spec),
            Err(SynthError::PointBudgetExceeded { requested: 10_000, cap: 500 })
        ));
        let bad_class = SceneSpec {
            objects: vec![ObjectSpec { class: ClassId(20), ..spec.objects[0].clone() }],
            max_points: 1_000_000,
            ..spec.clone()
        };
        assert!(matches!(generate_scene(&bad_class), Err(SynthError::InvalidSpec(_))));
        let bad_density = SceneSpec {
            objects: vec![ObjectSpec { density: 0.0, ..spec.objects[0].clone() }],
            max_points: 1_000_000,
            ..spec
        };
        assert!(matches!(generate_scene(&bad_density), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn cameras_are_proper_rotations() {
        for spec in [SceneSpec::urban(1), SceneSpec::coverage(1000, 0.3, 1)] {
            for cam in &spec.cameras {
                let view = cam.to_view().unwrap();
                // the look-at target projects to the principal point
                let pc = view.to_camera(&cam.look_at);
                assert!(pc[0].abs() < 1e-9 && pc[1].abs() < 1e-9 && pc[2] > 0.0);
            }
        }
        let mut cam = SceneSpec::urban(1).cameras[0].clone();
        cam.look_at = [cam.position[0], cam.position[1], cam.position[2] - 5.0];
        assert!(matches!(cam.to_view(), Err(SynthError::DegenerateCamera(0))));
    }

    #[test]
    fn image_down_matches_hint() {
        // a camera looking along +x with world down at the bottom of the image
        let cam = CameraSpec {
            view_id: 0,
            image_name: "c".into(),
            height: 100,
            width: 100,
            fx: 50.0,
            fy: 50.0,
            cx: 50.0,
            cy: 50.0,
            position: [0.0; 3],
            look_at: [1.0, 0.0, 0.0],
            down: default_down(),
        };
        let view = cam.to_view().unwrap();
        let below = view.to_camera(&[5.0, 0.0, -1.0]);
        assert!(below[1] > 0.0);
        let left = view.to_camera(&[5.0, 1.0, 0.0]);
        assert!(left[0] < 0.0);
    }

    #[test]
    fn class_fraction_examples() {
        let all_road = PointCloud::new(vec![[0.0; 3]; 4], Some(vec![ClassId(0); 4])).unwrap();
        assert_eq!(class_fraction(&all_road, &BTreeSet::from([ClassId(0)])).unwrap(), 1.0);
        assert_eq!(class_fraction(&all_road, &BTreeSet::from([ClassId(5)])).unwrap(), 0.0);
        let (cloud, _) = generate_scene(&SceneSpec::urban(2)).unwrap();
        let targets = BTreeSet::from([ClassId(0), ClassId(11)]);
        let expected = cloud.labels().unwrap().iter().filter(|l| **l == ClassId(0) || **l == ClassId(11)).count() as f64
            / cloud.len() as f64;
        assert_eq!(class_fraction(&cloud, &targets).unwrap(), expected);
        assert!(matches!(
            class_fraction(&PointCloud::unlabeled(vec![]).unwrap(), &targets),
            Err(SynthError::MissingLabels)
        ));
    }

    #[test]
    fn urban_covers_taxonomy_and_mix_sums_to_one() {
        let spec = SceneSpec::urban(0);
        let mix = spec.class_mix();
        assert_eq!(mix.len(), 15);
        assert!((mix.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spec_round_trips_through_toml_shape() {
        let spec = SceneSpec::coverage(5000, 0.25, 3);
        let json = serde_json::to_string(&spec).unwrap();
        let back: SceneSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
