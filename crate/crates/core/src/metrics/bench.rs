//! Wall-clock and resident-memory measurement of a pipeline stage.
//!
//! Memory categories:
//! - program: process RSS before the stage is constructed,
//! - model: RSS growth while the stage loads its inputs,
//! - runtime: peak RSS growth above the loaded state during measured runs.
//!
//! RSS is read from `/proc/self/status`; on platforms without procfs all
//! memory figures are reported as zero.

use std::error::Error as StdError;
use std::fs;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLING_INTERVAL: Duration = Duration::from_millis(10);
const BYTES_PER_MB: f64 = 1024.0 * 1024.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least one measured run is required")]
    NoRuns,
    #[error("stage failed: {0}")]
    StageFailure(#[source] Box<dyn StdError + Send + Sync>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub runs: usize,
    pub run_time_ms_mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub run_time_ms_std: f64,
    pub program_mb: f64,
    pub model_mb: f64,
    pub runtime_mb: f64,
}

/// Current resident set size in bytes, if the platform exposes it.
pub fn resident_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn rss() -> u64 {
    resident_bytes().unwrap_or(0)
}

struct PeakSampler {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    handle: Option<thread::JoinHandle<()>>,
}

impl PeakSampler {
    fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(rss()));
        let handle = {
            let (stop, peak) = (Arc::clone(&stop), Arc::clone(&peak));
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    peak.fetch_max(rss(), Ordering::Relaxed);
                    thread::sleep(SAMPLING_INTERVAL);
                }
            })
        };
        Self { stop, peak, handle: Some(handle) }
    }

    fn observe(&self) {
        self.peak.fetch_max(rss(), Ordering::Relaxed);
    }

    fn finish(mut self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        self.peak.load(Ordering::Relaxed)
    }
}

impl Drop for PeakSampler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mb(bytes: u64) -> f64 {
    bytes as f64 / BYTES_PER_MB
}

/// Builds a stage with `setup` (its input loading is charged to model
/// memory), runs it `warmup` times unmeasured and then `runs` times measured.
/// Runs execute sequentially on the calling thread.
pub fn bench_stage<S, F, E>(setup: F, runs: usize, warmup: usize) -> Result<RunStats, BenchError>
where
    F: FnOnce() -> Result<S, E>,
    S: FnMut() -> Result<(), E>,
    E: Into<Box<dyn StdError + Send + Sync>>,
{
    if runs == 0 {
        return Err(BenchError::NoRuns);
    }
    let program = rss();
    let mut stage = setup().map_err(|e| BenchError::StageFailure(e.into()))?;
    let loaded = rss();

    for _ in 0..warmup {
        stage().map_err(|e| BenchError::StageFailure(e.into()))?;
    }

    let sampler = PeakSampler::start();
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let outcome = stage();
        let elapsed = start.elapsed();
        sampler.observe();
        outcome.map_err(|e| BenchError::StageFailure(e.into()))?;
        times.push(elapsed.as_secs_f64() * 1e3);
    }
    let peak = sampler.finish();

    let (mean, std) = mean_std(&times);
    Ok(RunStats {
        runs,
        run_time_ms_mean: mean,
        run_time_ms_std: std,
        program_mb: mb(program),
        model_mb: mb(loaded.saturating_sub(program)),
        runtime_mb: mb(peak.saturating_sub(loaded)),
    })
}

/// Relative comparison of a run against a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `baseline.run_time_ms_mean / current.run_time_ms_mean`
    pub speedup: f64,
    /// Percent decrease relative to the baseline; negative values are increases.
    pub program_reduction_pct: Option<f64>,
    pub model_reduction_pct: Option<f64>,
    pub runtime_reduction_pct: Option<f64>,
}

fn reduction_pct(baseline: f64, current: f64) -> Option<f64> {
    (baseline > 0.0).then(|| 100.0 * (baseline - current) / baseline)
}

pub fn compare(baseline: &RunStats, current: &RunStats) -> Comparison {
    Comparison {
        speedup: baseline.run_time_ms_mean / current.run_time_ms_mean,
        program_reduction_pct: reduction_pct(baseline.program_mb, current.program_mb),
        model_reduction_pct: reduction_pct(baseline.model_mb, current.model_mb),
        runtime_reduction_pct: reduction_pct(baseline.runtime_mb, current.runtime_mb),
    }
}
