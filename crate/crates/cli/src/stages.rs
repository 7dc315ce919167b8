//! Stage implementations. Every stage reads its inputs from files and writes
//! its outputs under the configured output directory, so running the stages
//! one by one produces the same artifacts as `pipeline`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use extrude3d_core::classify::{classify_by_vote, check_label_geometry, load_external_predictions, write_predictions, PredictedLabels};
use extrude3d_core::extrusion::{
    class_pixel_index_path, encode_class_pixel_index, extract_class_pixels, read_class_pixel_index, read_point_ids,
    reduce_point_subspace, write_point_ids, ClassPixelIndex,
};
use extrude3d_core::labels::{encode_label_map, inject_label_noise, label_map_path, load_label_map, render_ground_truth_labels, LabelMap};
use extrude3d_core::mapping::{build_point_pixel_map, read_map_file, write_map, PointPixelMap, DEFAULT_DEPTH_EPSILON};
use extrude3d_core::metrics::bench::{bench_stage, compare, Comparison, RunStats};
use extrude3d_core::metrics::{accumulate_confusion, EvalReport};
use extrude3d_core::scene::calib::{read_cameras, write_cameras};
use extrude3d_core::scene::ply::{read_ply, write_ply};
use extrude3d_core::scene::{cylinder_crop, voxel_subsample};
use extrude3d_core::synth::{generate_scene, SceneSpec};
use extrude3d_core::{CameraView, PointCloud};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, PipelineConfig};
use crate::error::{data, data_in, internal, Artifacts, CliError};

pub const MODEL_MEMORY_NOTE: &str =
    "model_mb is the resident memory taken by loading the stage inputs (map, label maps, indexes); no neural model is loaded";

fn load_cloud(path: &Path) -> Result<PointCloud, CliError> {
    read_ply(path).map_err(data(path))
}

fn load_cameras(path: &Path) -> Result<Vec<CameraView>, CliError> {
    read_cameras(path).map_err(data(path))
}

fn load_map(path: &Path) -> Result<PointPixelMap, CliError> {
    read_map_file(path).map_err(data(path))
}

fn encode<F>(f: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text.into_bytes()
}

/// Label maps for every view that has entries in `map`.
fn load_view_label_maps(
    labels_dir: &Path,
    views: &[CameraView],
    map: &PointPixelMap,
) -> Result<BTreeMap<u32, LabelMap>, CliError> {
    let needed: BTreeSet<u32> = map.view_ids().into_iter().collect();
    let mut maps = BTreeMap::new();
    for view in views.iter().filter(|v| needed.contains(&v.view_id)) {
        let path = label_map_path(labels_dir, &view.image_name);
        maps.insert(view.view_id, load_label_map(&path).map_err(data(&path))?);
    }
    if let Some(missing) = needed.iter().find(|v| !maps.contains_key(v)) {
        return Err(CliError::Usage(format!("map references view {missing}, which is not in the camera file")));
    }
    check_label_geometry(views, &maps).map_err(data_in("label maps"))?;
    Ok(maps)
}

/// Indexes for every camera; cameras without an index file are left out.
fn load_indexes(index_dir: &Path, views: &[CameraView]) -> Result<BTreeMap<u32, ClassPixelIndex>, CliError> {
    let mut indexes = BTreeMap::new();
    for view in views {
        let path = class_pixel_index_path(index_dir, &view.image_name);
        if path.exists() {
            let g = view.geometry;
            let index = read_class_pixel_index(&path, Some((g.height, g.width))).map_err(data(&path))?;
            indexes.insert(view.view_id, index);
        }
    }
    Ok(indexes)
}

/// Subsampling and cropping applied to the input cloud before mapping.
pub fn prepare_cloud(cfg: &PipelineConfig, cloud: PointCloud) -> Result<PointCloud, CliError> {
    let cloud = if cfg.subsample {
        voxel_subsample(&cloud, cfg.voxel_size).map_err(data_in("voxel subsampling"))?.0
    } else {
        cloud
    };
    match cfg.cylinder {
        Some(c) => Ok(cylinder_crop(&cloud, c.center, c.radius).map_err(data_in("cylinder crop"))?.0),
        None => Ok(cloud),
    }
}

pub fn map(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let cloud = prepare_cloud(cfg, load_cloud(&cfg.cloud)?)?;
    let views = load_cameras(&cfg.cameras)?;
    let map = build_point_pixel_map(&cloud, &views, cfg.depth_epsilon).map_err(data_in("mapping"))?;
    art.write(&cfg.prepared_cloud_path(), &encode(|b| write_ply(&cloud, b)))?;
    art.write(&cfg.map_path(), &encode(|b| write_map(&map, b)))?;
    println!(
        "map: {} points, {} views, {} entries, {} visible points",
        cloud.len(),
        views.len(),
        map.len(),
        map.point_ids().len()
    );
    Ok(())
}

fn label_map_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(data(dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(data(dir))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn extrude(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    cfg.require_targets()?;
    let dir = cfg.index_dir();
    art.create_dir(&dir)?;
    let files = label_map_files(&cfg.labels_dir)?;
    let mut pixels = 0usize;
    for path in &files {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let labels = load_label_map(path).map_err(data(path))?;
        let index = extract_class_pixels(&labels, &cfg.targets, &name).map_err(data(path))?;
        pixels += index.pixels_by_class().values().map(Vec::len).sum::<usize>();
        art.write(&class_pixel_index_path(&dir, &name), encode_class_pixel_index(&index).as_bytes())?;
    }
    println!("extrude: {} label maps, {} target pixels", files.len(), pixels);
    Ok(())
}

pub fn reduce(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    cfg.require_targets()?;
    let map = load_map(&cfg.map_path())?;
    let views = load_cameras(&cfg.cameras)?;
    let indexes = load_indexes(&cfg.index_dir(), &views)?;
    let result = reduce_point_subspace(&map, &indexes, &cfg.targets);
    art.write(&cfg.reduced_map_path(), &encode(|b| write_map(&result.reduced_map, b)))?;
    art.write(&cfg.retained_ids_path(), &encode(|b| write_point_ids(&result.retained_point_ids, b)))?;
    println!(
        "reduce: retained {} of {} entries, {} points",
        result.reduced_map.len(),
        map.len(),
        result.retained_point_ids.len()
    );
    Ok(())
}

fn predict(cfg: &PipelineConfig, map: &PointPixelMap) -> Result<PredictedLabels, CliError> {
    match &cfg.predictions {
        Some(path) => {
            let cloud = load_cloud(&cfg.prepared_cloud_path())?;
            let mut preds = load_external_predictions(path, cloud.len()).map_err(data(path))?;
            let classified = map.point_ids();
            preds.labels.retain(|p, _| classified.contains(p));
            Ok(preds)
        }
        None => {
            let views = load_cameras(&cfg.cameras)?;
            let label_maps = load_view_label_maps(&cfg.labels_dir, &views, map)?;
            classify_by_vote(map, &label_maps).map_err(data_in("classification"))
        }
    }
}

pub fn classify(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let map = load_map(&cfg.classified_map_path())?;
    let preds = predict(cfg, &map)?;
    art.write(&cfg.predictions_path(), &encode(|b| write_predictions(&preds, b)))?;
    println!("classify ({}): {} points labeled", cfg.mode.name(), preds.labels.len());
    Ok(())
}

pub fn eval(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let cloud = load_cloud(&cfg.prepared_cloud_path())?;
    let truth = cloud.require_labels().map_err(data(&cfg.prepared_cloud_path()))?;
    let pred_path = cfg.predictions_path();
    let preds = load_external_predictions(&pred_path, cloud.len()).map_err(data(&pred_path))?;
    let ids: BTreeSet<u32> = match &cfg.eval_ids {
        Some(path) => {
            let file = fs::File::open(path).map_err(data(path))?;
            read_point_ids(std::io::BufReader::new(file)).map_err(data(path))?
        }
        None => load_map(&cfg.map_path())?.point_ids(),
    };
    // points without a taxonomy label carry no truth and are not scored
    let scored = ids.into_iter().filter(|&p| truth.get(p as usize).is_none_or(|t| t.in_taxonomy()));
    let counts = accumulate_confusion(truth, &preds, scored).map_err(data_in("evaluation"))?;
    let report = EvalReport::new(&counts, None);
    let targets = (cfg.mode == Mode::Reduced).then_some(&cfg.targets);
    let table = report.to_table(cfg.mode.name(), targets);
    art.write(&cfg.report_json_path(), &json_bytes(&report))?;
    art.write(&cfg.report_table_path(), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub stage: String,
    pub mode: Mode,
    /// Map entries the classification stage processes.
    pub entries: usize,
    /// Distinct points in those entries.
    pub points: usize,
    pub stats: RunStats,
    pub note: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
}

/// Inputs of the timed classification stage, loaded during bench setup.
struct ClassifyInputs {
    map: PointPixelMap,
    label_maps: BTreeMap<u32, LabelMap>,
}

fn load_classify_inputs(cfg: &PipelineConfig) -> Result<ClassifyInputs, CliError> {
    let views = load_cameras(&cfg.cameras)?;
    let full = load_map(&cfg.map_path())?;
    let map = match cfg.mode {
        Mode::Full => full,
        Mode::Reduced => {
            cfg.require_targets()?;
            let indexes = load_indexes(&cfg.index_dir(), &views)?;
            reduce_point_subspace(&full, &indexes, &cfg.targets).reduced_map
        }
    };
    let label_maps = load_view_label_maps(&cfg.labels_dir, &views, &map)?;
    Ok(ClassifyInputs { map, label_maps })
}

pub fn bench(cfg: &PipelineConfig, baseline: Option<&Path>, art: &mut Artifacts) -> Result<BenchReport, CliError> {
    let baseline = baseline
        .map(|path| -> Result<BenchReport, CliError> {
            let text = fs::read_to_string(path).map_err(data(path))?;
            serde_json::from_str(&text).map_err(data(path))
        })
        .transpose()?;

    let mut shape = None;
    let stats = bench_stage(
        || -> Result<_, CliError> {
            let inputs = load_classify_inputs(cfg)?;
            shape = Some((inputs.map.len(), inputs.map.point_ids().len()));
            Ok(move || -> Result<(), CliError> {
                let preds = classify_by_vote(&inputs.map, &inputs.label_maps).map_err(data_in("classification"))?;
                std::hint::black_box(preds);
                Ok(())
            })
        },
        cfg.runs,
        cfg.warmup,
    )
    .map_err(|e| match e {
        extrude3d_core::metrics::bench::BenchError::StageFailure(inner) => match inner.downcast::<CliError>() {
            Ok(cli) => *cli,
            Err(other) => CliError::Internal { context: "bench".into(), source: other },
        },
        other => CliError::Usage(other.to_string()),
    })?;
    let (entries, points) = shape.unwrap_or_default();
    let comparison = baseline.as_ref().map(|b| compare(&b.stats, &stats));
    let report = BenchReport {
        stage: "classify".into(),
        mode: cfg.mode,
        entries,
        points,
        stats,
        note: MODEL_MEMORY_NOTE.into(),
        comparison,
    };
    art.write(&cfg.bench_path(), &json_bytes(&report))?;
    let s = &report.stats;
    println!(
        "bench classify ({}): {} entries, {:.3} ± {:.3} ms over {} runs; program {:.1} MB, model {:.1} MB, runtime {:.1} MB",
        cfg.mode.name(),
        entries,
        s.run_time_ms_mean,
        s.run_time_ms_std,
        s.runs,
        s.program_mb,
        s.model_mb,
        s.runtime_mb
    );
    if let Some(c) = &report.comparison {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.1}%"));
        println!(
            "vs baseline: speedup {:.3}x; memory reduction program {}, model {}, runtime {}",
            c.speedup,
            pct(c.program_reduction_pct),
            pct(c.model_reduction_pct),
            pct(c.runtime_reduction_pct)
        );
    }
    Ok(report)
}

/// Ground-truth label maps for every camera, optionally with label noise.
/// The cloud is used as given, without subsampling.
pub fn render_gt(cfg: &PipelineConfig, flip_rate: f64, art: &mut Artifacts) -> Result<(), CliError> {
    let cloud = load_cloud(&cfg.cloud)?;
    let views = load_cameras(&cfg.cameras)?;
    write_ground_truth(&cloud, &views, &cfg.labels_dir, cfg.depth_epsilon, flip_rate, cfg.seed, art)?;
    println!("render-gt: {} label maps", views.len());
    Ok(())
}

fn write_ground_truth(
    cloud: &PointCloud,
    views: &[CameraView],
    dir: &Path,
    depth_epsilon: f64,
    flip_rate: f64,
    seed: u64,
    art: &mut Artifacts,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(CliError::Usage(format!("flip rate must be within [0, 1], got {flip_rate}")));
    }
    let map = build_point_pixel_map(cloud, views, depth_epsilon).map_err(data_in("mapping"))?;
    art.create_dir(dir)?;
    for view in views {
        let clean = render_ground_truth_labels(cloud, view, &map).map_err(data_in("ground-truth rendering"))?;
        let labels = if flip_rate > 0.0 {
            inject_label_noise(&clean, flip_rate, seed.wrapping_add(u64::from(view.view_id)))
                .map_err(data_in("label noise"))?
        } else {
            clean
        };
        art.write(&label_map_path(dir, &view.image_name), &encode_label_map(&labels))?;
    }
    Ok(())
}

/// Options of the `synth` command.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub spec: SceneSpec,
    pub out_dir: PathBuf,
    /// Voxel size applied to the generated cloud before rendering labels.
    pub voxel_size: Option<f64>,
    pub flip_rate: f64,
}

pub fn synth(opts: &SynthOptions, art: &mut Artifacts) -> Result<(), CliError> {
    let (cloud, views) = generate_scene(&opts.spec).map_err(data_in("scene generation"))?;
    let cloud = match opts.voxel_size {
        Some(s) => voxel_subsample(&cloud, s).map_err(|e| CliError::Usage(e.to_string()))?.0,
        None => cloud,
    };
    let dir = &opts.out_dir;
    art.create_dir(dir)?;
    let spec_path = dir.join("scene.toml");
    let spec_text = toml::to_string(&opts.spec).map_err(internal(&spec_path))?;
    art.write(&spec_path, spec_text.as_bytes())?;
    art.write(&dir.join("cloud.ply"), &encode(|b| write_ply(&cloud, b)))?;
    art.write(&dir.join("cameras.txt"), &encode(|b| write_cameras(&views, b)))?;
    write_ground_truth(&cloud, &views, &dir.join("labels"), DEFAULT_DEPTH_EPSILON, opts.flip_rate, opts.spec.seed, art)?;
    println!("synth: {} points, {} cameras written to {}", cloud.len(), views.len(), dir.display());
    Ok(())
}

pub fn pipeline(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<(), CliError> {
    if cfg.mode == Mode::Reduced {
        cfg.require_targets()?;
    }
    map(cfg, art)?;
    if cfg.mode == Mode::Reduced {
        extrude(cfg, art)?;
        reduce(cfg, art)?;
    }
    classify(cfg, art)?;
    eval(cfg, art)
}
