use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;

use extrude3d_core::classify::{classify_by_vote, load_external_predictions, write_predictions_file};
use extrude3d_core::extrusion::{
    extract_class_pixels, read_class_pixel_index, read_point_ids, reduce_point_subspace, write_class_pixel_index,
    write_point_ids,
};
use extrude3d_core::labels::{
    inject_label_noise, label_map_path, load_label_map, render_ground_truth_labels, write_label_map, LabelMap,
};
use extrude3d_core::mapping::{build_point_pixel_map, read_map_file, write_map_file, DEFAULT_DEPTH_EPSILON};
use extrude3d_core::metrics::bench::bench_stage;
use extrude3d_core::metrics::{accumulate_confusion, iou_per_class, EvalReport};
use extrude3d_core::scene::calib::{read_cameras, write_cameras_file};
use extrude3d_core::scene::ply::{read_ply, write_ply_file};
use extrude3d_core::scene::{cylinder_crop, voxel_subsample};
use extrude3d_core::synth::{class_fraction, generate_scene, ObjectSpec, Pose, SceneSpec, Shape};
use extrude3d_core::{CameraView, ClassId, PointCloud};

fn ground_truth(cloud: &PointCloud, views: &[CameraView]) -> BTreeMap<u32, LabelMap> {
    let map = build_point_pixel_map(cloud, views, DEFAULT_DEPTH_EPSILON).unwrap();
    views.iter().map(|v| (v.view_id, render_ground_truth_labels(cloud, v, &map).unwrap())).collect()
}

#[test]
fn chain_through_files_matches_in_memory_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (cloud, views) = generate_scene(&SceneSpec::urban(11)).unwrap();
    let (cloud, _) = voxel_subsample(&cloud, 0.05).unwrap();
    let labels = ground_truth(&cloud, &views);
    let targets = BTreeSet::from([ClassId(0), ClassId(5), ClassId(11)]);

    // in memory
    let map = build_point_pixel_map(&cloud, &views, DEFAULT_DEPTH_EPSILON).unwrap();
    let indexes = views
        .iter()
        .map(|v| (v.view_id, extract_class_pixels(&labels[&v.view_id], &targets, &v.image_name).unwrap()))
        .collect();
    let reduced = reduce_point_subspace(&map, &indexes, &targets);
    let preds = classify_by_vote(&reduced.reduced_map, &labels).unwrap();

    // through files
    write_ply_file(&cloud, d.join("cloud.ply")).unwrap();
    write_cameras_file(&views, d.join("cameras.txt")).unwrap();
    let cloud2 = read_ply(d.join("cloud.ply")).unwrap();
    let views2 = read_cameras(d.join("cameras.txt")).unwrap();
    assert_eq!(cloud2, cloud);
    assert_eq!(views2, views);
    let map2 = build_point_pixel_map(&cloud2, &views2, DEFAULT_DEPTH_EPSILON).unwrap();
    write_map_file(&map2, d.join("map.txt")).unwrap();
    let map2 = read_map_file(d.join("map.txt")).unwrap();
    assert_eq!(map2, map);

    let mut labels2 = BTreeMap::new();
    let mut indexes2 = BTreeMap::new();
    for v in &views2 {
        let path = label_map_path(d, &v.image_name);
        write_label_map(&labels[&v.view_id], &path).unwrap();
        let m = load_label_map(&path).unwrap();
        let index = extract_class_pixels(&m, &targets, &v.image_name).unwrap();
        let json = write_class_pixel_index(&index, d).unwrap();
        let g = v.geometry;
        indexes2.insert(v.view_id, read_class_pixel_index(json, Some((g.height, g.width))).unwrap());
        labels2.insert(v.view_id, m);
    }
    let reduced2 = reduce_point_subspace(&map2, &indexes2, &targets);
    assert_eq!(reduced2, reduced);

    let mut ids = Vec::new();
    write_point_ids(&reduced2.retained_point_ids, &mut ids).unwrap();
    assert_eq!(read_point_ids(BufReader::new(&ids[..])).unwrap(), reduced.retained_point_ids);

    let preds2 = classify_by_vote(&reduced2.reduced_map, &labels2).unwrap();
    write_predictions_file(&preds2, d.join("preds.txt")).unwrap();
    let preds2 = load_external_predictions(d.join("preds.txt"), cloud.len()).unwrap();
    assert_eq!(preds2.labels, preds.labels);

    let truth = cloud.labels().unwrap();
    let counts = accumulate_confusion(truth, &preds2, reduced.retained_point_ids.iter().copied()).unwrap();
    let report = EvalReport::new(&counts, None);
    for t in &targets {
        assert_eq!(report.classes[t.index()].iou, Some(1.0));
    }
    let json = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), report);
}

#[test]
fn label_noise_lowers_iou() {
    let (cloud, views) = generate_scene(&SceneSpec::urban(12)).unwrap();
    let clean = ground_truth(&cloud, &views);
    let map = build_point_pixel_map(&cloud, &views, DEFAULT_DEPTH_EPSILON).unwrap();
    let truth = cloud.labels().unwrap();
    let visible = map.point_ids();
    let miou = |rate: f64| {
        let noisy: BTreeMap<u32, LabelMap> =
            clean.iter().map(|(&v, m)| (v, inject_label_noise(m, rate, 100 + u64::from(v)).unwrap())).collect();
        let preds = classify_by_vote(&map, &noisy).unwrap();
        let counts = accumulate_confusion(truth, &preds, visible.iter().copied()).unwrap();
        iou_per_class(&counts).miou.unwrap()
    };
    let (m0, m1, m3) = (miou(0.0), miou(0.1), miou(0.3));
    assert_eq!(m0, 1.0);
    assert!(m1 < m0 && m3 < m1, "{m0} {m1} {m3}");
}

#[test]
fn cropping_and_subsampling_keep_labels_consistent() {
    let (cloud, views) = generate_scene(&SceneSpec::urban(13)).unwrap();
    let (sub, index_map) = voxel_subsample(&cloud, 0.2).unwrap();
    assert!(sub.len() < cloud.len());
    for (i, &orig) in index_map.iter().enumerate() {
        assert_eq!(sub.positions()[i], cloud.positions()[orig]);
    }
    let (crop, crop_map) = cylinder_crop(&sub, [0.0, 0.0], 10.0).unwrap();
    assert!(crop.positions().iter().all(|p| p[0].hypot(p[1]) <= 10.0 + 1e-12));
    assert_eq!(crop.len(), crop_map.len());

    // ground truth rendered on the prepared cloud gives an exact vote
    let labels = ground_truth(&crop, &views);
    let map = build_point_pixel_map(&crop, &views, DEFAULT_DEPTH_EPSILON).unwrap();
    let preds = classify_by_vote(&map, &labels).unwrap();
    let counts = accumulate_confusion(crop.labels().unwrap(), &preds, map.point_ids()).unwrap();
    assert_eq!(iou_per_class(&counts).miou, Some(1.0));
}

/// Ground split into three strips holding 10%, 40% and 50% of the area.
fn striped_ground(total_points: usize) -> SceneSpec {
    let mut spec = SceneSpec::coverage(total_points, 0.1, 5);
    let density = spec.objects[0].density;
    spec.objects = [(0u8, 2.0, -9.0), (1, 8.0, -4.0), (9, 10.0, 5.0)]
        .iter()
        .map(|&(class, width, x)| ObjectSpec {
            class: ClassId(class),
            density,
            shape: Shape::Plane { size: [width, 20.0] },
            pose: Pose::at([x, 0.0, 0.0]),
        })
        .collect();
    spec
}

#[test]
fn vote_time_grows_with_retained_entries() {
    let (cloud, views) = generate_scene(&striped_ground(40_000)).unwrap();
    let fractions = [
        (BTreeSet::from([ClassId(0)]), 0.1),
        (BTreeSet::from([ClassId(0), ClassId(1)]), 0.5),
        (BTreeSet::from([ClassId(0), ClassId(1), ClassId(9)]), 1.0),
    ];
    let labels = ground_truth(&cloud, &views);
    let map = build_point_pixel_map(&cloud, &views, DEFAULT_DEPTH_EPSILON).unwrap();
    let mut times = Vec::new();
    for (targets, f) in &fractions {
        assert!((class_fraction(&cloud, targets).unwrap() - f).abs() < 0.02);
        let indexes = views
            .iter()
            .map(|v| (v.view_id, extract_class_pixels(&labels[&v.view_id], targets, &v.image_name).unwrap()))
            .collect();
        let reduced = reduce_point_subspace(&map, &indexes, targets).reduced_map;
        let share = reduced.len() as f64 / map.len() as f64;
        assert!((share - f).abs() < 0.1 * f, "{share} vs {f}");
        let stats = bench_stage(
            || Ok::<_, extrude3d_core::classify::ClassifyError>(|| classify_by_vote(&reduced, &labels).map(drop)),
            5,
            1,
        )
        .unwrap();
        times.push(stats.run_time_ms_mean);
    }
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "{times:?}");
}

#[test]
fn ground_truth_maps_survive_pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, views) = generate_scene(&SceneSpec::urban(14)).unwrap();
    for (view_id, m) in ground_truth(&cloud, &views) {
        let path = dir.path().join(format!("{view_id}.pgm"));
        write_label_map(&m, &path).unwrap();
        assert_eq!(load_label_map(&path).unwrap(), m);
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n"));
    }
}
