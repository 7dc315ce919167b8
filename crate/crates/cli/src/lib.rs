//! Command-line driver for the reduction pipeline.
//!
//! Every stage is a subcommand reading and writing files under an output
//! directory:
//!
//! | stage      | reads                                   | writes                               |
//! |------------|-----------------------------------------|--------------------------------------|
//! | `synth`    | scene spec or preset                    | `cloud.ply`, `cameras.txt`, `labels/` |
//! | `render-gt`| cloud, cameras                          | `<labels_dir>/<image>.pgm`           |
//! | `map`      | cloud, cameras                          | `cloud.ply`, `map.txt`               |
//! | `extrude`  | label maps                              | `indexes/<image>.json`               |
//! | `reduce`   | `map.txt`, cameras, `indexes/`          | `reduced_map.txt`, `retained_ids.txt`|
//! | `classify` | map for the mode, label maps or a predictions file | `predictions.txt`         |
//! | `eval`     | `cloud.ply`, `predictions.txt`, `map.txt` | `report.json`, `report.txt`        |
//! | `bench`    | as `classify`                           | `bench_<mode>.json`                  |
//! | `pipeline` | as `map`                                | all of the above for the mode        |
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

pub mod config;
pub mod error;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use extrude3d_core::synth::SceneSpec;

use crate::config::{parse_cylinder, parse_targets, Cylinder, Mode, PipelineConfig};
use crate::error::{Artifacts, CliError, EXIT_OK, EXIT_USAGE};
use crate::stages::SynthOptions;

#[derive(Debug, Parser)]
#[command(name = "extrude3d", version, about = "Class-targeted point cloud reduction from 2D label maps")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "EXTRUDE3D_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled scene, its cameras and ground-truth label maps.
    Synth(SynthArgs),
    /// Render ground-truth label maps from a labeled cloud.
    RenderGt(RenderArgs),
    /// Subsample the cloud and build the point/pixel map.
    Map(ConfigArgs),
    /// Write per-class pixel index files for the target classes.
    Extrude(ConfigArgs),
    /// Keep map entries whose pixels carry a target class.
    Reduce(ConfigArgs),
    /// Label points by multi-view vote, or from a predictions file.
    Classify(ConfigArgs),
    /// Score predictions with per-class IoU.
    Eval(ConfigArgs),
    /// Time the classification stage and measure resident memory.
    Bench(BenchArgs),
    /// Run map, extrude, reduce, classify and eval in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// Street corridor with every class.
    Urban,
    /// Flat ground split into road and terrain.
    Coverage,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene specification (TOML); overrides --preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "urban")]
    preset: Preset,
    /// Scene seed; overrides the seed of --spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Coverage preset: approximate point count.
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Coverage preset: share of the ground labeled road.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value = "scene")]
    out_dir: PathBuf,
    /// Voxel size applied to the generated cloud.
    #[arg(long, default_value_t = 0.05)]
    voxel_size: f64,
    /// Keep every generated point.
    #[arg(long)]
    no_subsample: bool,
    /// Share of label-map pixels replaced by another class.
    #[arg(long, default_value_t = 0.0)]
    flip_rate: f64,
}

/// Settings shared by the stage commands; each overrides the config file.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long)]
    labels_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Comma-separated target class ids, e.g. `0,11`.
    #[arg(long, value_parser = parse_targets)]
    targets: Option<std::collections::BTreeSet<extrude3d_core::ClassId>>,
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Skip voxel subsampling.
    #[arg(long)]
    no_subsample: bool,
    /// Vertical crop cylinder as `x,y,radius`.
    #[arg(long, value_parser = parse_cylinder)]
    cylinder: Option<Cylinder>,
    #[arg(long)]
    depth_epsilon: Option<f64>,
    /// External `point_id class_id` predictions used instead of the vote.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Point ids to evaluate, one per line.
    #[arg(long)]
    eval_ids: Option<PathBuf>,
    /// Measured bench runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Unmeasured bench runs.
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(cloud, cameras, labels_dir, out_dir, mode, targets, voxel_size, depth_epsilon, runs, warmup, seed);
        if self.no_subsample {
            cfg.subsample = false;
        }
        if self.cylinder.is_some() {
            cfg.cylinder = self.cylinder;
        }
        if self.predictions.is_some() {
            cfg.predictions.clone_from(&self.predictions);
        }
        if self.eval_ids.is_some() {
            cfg.eval_ids.clone_from(&self.eval_ids);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Share of pixels replaced by another class.
    #[arg(long, default_value_t = 0.0)]
    flip_rate: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Earlier bench report to compare against.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the resolved configuration to this file before running.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

fn synth_options(args: &SynthArgs) -> Result<SynthOptions, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read scene spec {}: {e}", path.display())))?;
            toml::from_str::<SceneSpec>(&text)
                .map_err(|e| CliError::Usage(format!("invalid scene spec {}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Urban => SceneSpec::urban(args.seed.unwrap_or(0)),
            Preset::Coverage => {
                if !(0.0..=1.0).contains(&args.fraction) {
                    return Err(CliError::Usage(format!("fraction must be within [0, 1], got {}", args.fraction)));
                }
                SceneSpec::coverage(args.points, args.fraction, args.seed.unwrap_or(0))
            }
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let voxel_size = (!args.no_subsample).then_some(args.voxel_size);
    Ok(SynthOptions { spec, out_dir: args.out_dir.clone(), voxel_size, flip_rate: args.flip_rate })
}

fn execute(command: &Command, art: &mut Artifacts) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => stages::synth(&synth_options(args)?, art),
        Command::RenderGt(args) => stages::render_gt(&args.config.resolve()?, args.flip_rate, art),
        Command::Map(args) => stages::map(&args.resolve()?, art),
        Command::Extrude(args) => stages::extrude(&args.resolve()?, art),
        Command::Reduce(args) => stages::reduce(&args.resolve()?, art),
        Command::Classify(args) => stages::classify(&args.resolve()?, art),
        Command::Eval(args) => stages::eval(&args.resolve()?, art),
        Command::Bench(args) => stages::bench(&args.config.resolve()?, args.baseline.as_deref(), art).map(|_| ()),
        Command::Pipeline(args) => {
            let cfg = args.config.resolve()?;
            if let Some(path) = &args.dump_config {
                art.write(path, cfg.to_toml().as_bytes())?;
            }
            stages::pipeline(&cfg, art)
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Artifacts of a failed command are removed.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Internal {
            context: "starting worker threads".into(),
            source: e.into(),
        }),
        None => rayon::ThreadPoolBuilder::new().build().map_err(|e| CliError::Internal {
            context: "starting worker threads".into(),
            source: e.into(),
        }),
    };
    let result = pool.and_then(|pool| {
        let mut art = Artifacts::default();
        match pool.install(|| execute(&cli.command, &mut art)) {
            Ok(()) => Ok(()),
            Err(e) => {
                art.rollback();
                Err(e)
            }
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
