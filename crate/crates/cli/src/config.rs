//! Pipeline configuration shared by every stage command.
//!
//! Resolution order: built-in defaults, then the `--config` TOML file, then
//! command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use extrude3d_core::mapping::DEFAULT_DEPTH_EPSILON;
use extrude3d_core::ClassId;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Classify every visible point.
    Full,
    /// Classify only points whose pixels carry a target class.
    #[default]
    Reduced,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Reduced => "reduced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input PLY cloud; labels are required for evaluation.
    pub cloud: PathBuf,
    /// Camera calibration text file.
    pub cameras: PathBuf,
    /// Directory of `<image_name>.pgm` label maps.
    pub labels_dir: PathBuf,
    /// Directory receiving every artifact.
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub targets: BTreeSet<ClassId>,
    /// Voxel subsampling before mapping; disabled with `subsample = false`.
    pub subsample: bool,
    pub voxel_size: f64,
    pub cylinder: Option<Cylinder>,
    pub depth_epsilon: f64,
    /// External predictions replacing the vote.
    pub predictions: Option<PathBuf>,
    /// Point ids to evaluate; defaults to every point visible in the full map.
    pub eval_ids: Option<PathBuf>,
    pub runs: usize,
    pub warmup: usize,
    /// Seed for label noise in `render-gt`.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cloud: PathBuf::from("scene/cloud.ply"),
            cameras: PathBuf::from("scene/cameras.txt"),
            labels_dir: PathBuf::from("scene/labels"),
            out_dir: PathBuf::from("out"),
            mode: Mode::Reduced,
            targets: BTreeSet::new(),
            subsample: true,
            voxel_size: 0.05,
            cylinder: None,
            depth_epsilon: DEFAULT_DEPTH_EPSILON,
            predictions: None,
            eval_ids: None,
            runs: 5,
            warmup: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(bad) = self.targets.iter().find(|t| !t.in_taxonomy()) {
            return Err(CliError::Usage(format!("target class {bad} is not in the taxonomy")));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(CliError::Usage(format!("voxel size must be positive, got {}", self.voxel_size)));
        }
        if self.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        if !(self.depth_epsilon >= 0.0 && self.depth_epsilon.is_finite()) {
            return Err(CliError::Usage(format!("depth epsilon must be non-negative, got {}", self.depth_epsilon)));
        }
        if let Some(c) = self.cylinder {
            if !(c.radius > 0.0 && c.radius.is_finite()) {
                return Err(CliError::Usage(format!("cylinder radius must be positive, got {}", c.radius)));
            }
        }
        Ok(())
    }

    pub fn require_targets(&self) -> Result<(), CliError> {
        if self.targets.is_empty() {
            return Err(CliError::Usage("at least one target class is required (--targets)".into()));
        }
        Ok(())
    }

    pub fn prepared_cloud_path(&self) -> PathBuf {
        self.out_dir.join("cloud.ply")
    }

    pub fn map_path(&self) -> PathBuf {
        self.out_dir.join("map.txt")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.out_dir.join("indexes")
    }

    pub fn reduced_map_path(&self) -> PathBuf {
        self.out_dir.join("reduced_map.txt")
    }

    pub fn retained_ids_path(&self) -> PathBuf {
        self.out_dir.join("retained_ids.txt")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.out_dir.join("predictions.txt")
    }

    pub fn report_json_path(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    pub fn report_table_path(&self) -> PathBuf {
        self.out_dir.join("report.txt")
    }

    pub fn bench_path(&self) -> PathBuf {
        self.out_dir.join(format!("bench_{}.json", self.mode.name()))
    }

    /// Map classified in the configured mode.
    pub fn classified_map_path(&self) -> PathBuf {
        match self.mode {
            Mode::Full => self.map_path(),
            Mode::Reduced => self.reduced_map_path(),
        }
    }
}

/// Parses `0,11,12` into class ids.
pub fn parse_targets(text: &str) -> Result<BTreeSet<ClassId>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u8>().map(ClassId).map_err(|_| format!("`{s}` is not a class id")))
        .collect()
}

/// Parses `x,y,radius`.
pub fn parse_cylinder(text: &str) -> Result<Cylinder, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<Result<_, _>>()?;
    match values.as_slice() {
        [x, y, r] => Ok(Cylinder { center: [*x, *y], radius: *r }),
        _ => Err("expected `x,y,radius`".into()),
    }
}
