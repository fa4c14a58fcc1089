//! Dispatch of a parsed configuration to the simulation modules, and the
//! files each mode writes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use cavicool_core::ensemble::{position_histogram, run_ensemble_with_progress, EnsembleError, SteadyState};
use cavicool_core::friction::{friction_map_with_progress, FrictionError};
use cavicool_core::output;
use cavicool_core::params::ParamsError;
use cavicool_core::scan::{
    run_scan_with_progress, saturation_mask, ScanAxis, ScanError, DEFAULT_SATURATION_LIMIT,
};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::config::{to_config_string, ConfigError, Mode, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{} already exists (pass --overwrite to replace it)", .0.display())]
    OutputExists(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl CliError {
    /// Process exit status: 2 configuration or usage, 3 file system,
    /// 4 invalid physical parameters, 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::OutputExists(_) | CliError::Io { .. } => 3,
            CliError::Invalid(_) => 4,
            CliError::Simulation(_) => 5,
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Params(_) | EnsembleError::InvalidConfig(_) => CliError::Invalid(e.to_string()),
            EnsembleError::Dynamics(ref d)
                if matches!(d, cavicool_core::dynamics::DynamicsError::Unstable { .. }) =>
            {
                CliError::Invalid(e.to_string())
            }
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Ensemble(inner) => inner.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<FrictionError> for CliError {
    fn from(e: FrictionError) -> Self {
        match e {
            FrictionError::Params(_) | FrictionError::InvalidConfig(_) => CliError::Invalid(e.to_string()),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

impl From<ParamsError> for CliError {
    fn from(e: ParamsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Where and how to write results.
#[derive(Debug, Clone)]
pub struct OutputPolicy {
    pub dir: PathBuf,
    pub overwrite: bool,
    /// Print progress to standard error.
    pub progress: bool,
}

/// Files written by `mode`, relative to the output directory.
pub fn output_files(mode: Mode, cfg: &RunConfig) -> Vec<&'static str> {
    match mode {
        Mode::Run if cfg.dump_trajectories > 0 => vec!["timeseries.csv", "trajectories.csv", "run.json"],
        Mode::Run => vec!["timeseries.csv", "run.json"],
        Mode::Scan => vec!["scan.csv", "scan.json"],
        Mode::Friction => vec!["friction.csv", "friction.json"],
        Mode::Hist => vec!["histogram.csv", "histogram.json"],
    }
}

struct Progress {
    label: &'static str,
    unit: &'static str,
    enabled: bool,
    start: Instant,
    last: Mutex<Option<Instant>>,
}

impl Progress {
    fn new(label: &'static str, unit: &'static str, enabled: bool) -> Self {
        Progress {
            label,
            unit,
            enabled,
            start: Instant::now(),
            last: Mutex::new(None),
        }
    }

    fn update(&self, done: usize, total: usize) {
        if !self.enabled {
            return;
        }
        let now = Instant::now();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let due = last.is_none_or(|t| now - t >= Duration::from_secs(1));
        if !due && done < total {
            return;
        }
        *last = Some(now);
        let elapsed = (now - self.start).as_secs_f64();
        let eta = if done > 0 {
            elapsed * (total - done) as f64 / done as f64
        } else {
            f64::NAN
        };
        eprintln!(
            "[{}] {done}/{total} {} ({:.0}%), elapsed {elapsed:.1}s, ETA {eta:.1}s",
            self.label,
            self.unit,
            100.0 * done as f64 / total.max(1) as f64
        );
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    program: &'static str,
    version: &'static str,
    mode: Mode,
    seed: u64,
    threads: usize,
    wall_time_s: f64,
    outputs: Vec<&'static str>,
    config: &'a RunConfig,
    config_file: String,
    summary: serde_json::Value,
}

#[derive(Serialize)]
struct RunSummary {
    steady: SteadyState,
    e_kin_kappa: f64,
    cooling_threshold: f64,
    cooling_time: Option<f64>,
    saturation: f64,
    final_e_kin: f64,
    n_used: usize,
    n_excluded: usize,
}

#[derive(Serialize)]
struct NodeFailure {
    index: usize,
    v1: f64,
    v2: f64,
    error: String,
}

#[derive(Serialize)]
struct ScanSummary {
    axis1: ScanAxis,
    axis2: ScanAxis,
    shape: (usize, usize),
    n_nodes: usize,
    saturation_limit: f64,
    n_saturated: usize,
    failures: Vec<NodeFailure>,
}

#[derive(Serialize)]
struct FrictionSummary {
    shape: (usize, usize),
    n_nodes: usize,
    n_nonlinear: usize,
    failures: Vec<NodeFailure>,
}

#[derive(Serialize)]
struct HistSummary {
    t_snapshot: f64,
    n_bins: usize,
    total: u64,
    n_excluded: usize,
    mean_alpha: Complex64,
    mean_alpha_re_pos: Option<Complex64>,
    mean_alpha_re_neg: Option<Complex64>,
}

fn to_value<S: Serialize>(s: &S) -> serde_json::Value {
    serde_json::to_value(s).expect("summaries contain only plain data")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        w.write_all(b"\n")
    })
}

/// Runs `mode` with `cfg` and writes its outputs. Returns the written paths.
pub fn execute(mode: Mode, cfg: &RunConfig, out: &OutputPolicy) -> Result<Vec<PathBuf>, CliError> {
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(CliError::Usage(format!(
                "configuration is for mode `{m}` but `{mode}` was requested"
            )));
        }
    }
    let mut cfg = cfg.clone();
    cfg.mode = Some(mode);
    cfg.out_dir = Some(out.dir.clone());
    cfg.overwrite = out.overwrite;

    let names = output_files(mode, &cfg);
    let paths: Vec<PathBuf> = names.iter().map(|n| out.dir.join(n)).collect();
    if !out.overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(CliError::OutputExists(p.clone()));
        }
    }
    std::fs::create_dir_all(&out.dir).map_err(|source| CliError::Io {
        path: out.dir.clone(),
        source,
    })?;

    let start = Instant::now();
    let sidecar = |summary: serde_json::Value| Sidecar {
        program: "cavicool",
        version: env!("CARGO_PKG_VERSION"),
        mode,
        seed: cfg.ensemble.seed,
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: names.clone(),
        config: &cfg,
        config_file: to_config_string(&cfg),
        summary,
    };

    match mode {
        Mode::Run => {
            let progress = Progress::new("run", "trajectories", out.progress);
            let (stats, records) = run_ensemble_with_progress(
                &cfg.system,
                &cfg.initial,
                &cfg.ensemble,
                cfg.dump_trajectories,
                &|d, t| progress.update(d, t),
            )?;
            write_file(&paths[0], |w| output::write_time_series(w, &stats))?;
            if cfg.dump_trajectories > 0 {
                write_file(&paths[1], |w| output::write_trajectories(w, &records))?;
            }
            let summary = RunSummary {
                steady: stats.steady,
                e_kin_kappa: stats.steady.e_kin.mean / cfg.system.kappa,
                cooling_threshold: stats.cooling_threshold,
                cooling_time: stats.cooling_time,
                saturation: stats.saturation,
                final_e_kin: *stats.e_kin.last().unwrap_or(&f64::NAN),
                n_used: stats.n_used,
                n_excluded: stats.n_excluded,
            };
            write_json(paths.last().unwrap(), &sidecar(to_value(&summary)))?;
        }
        Mode::Scan => {
            let grid = cfg
                .grid
                .ok_or_else(|| CliError::Usage("scan mode needs a [grid] section".into()))?;
            let progress = Progress::new("scan", "nodes", out.progress);
            let result = run_scan_with_progress(&grid, &cfg.system, &cfg.initial, &cfg.ensemble, &|d, t| {
                progress.update(d, t)
            })?;
            write_file(&paths[0], |w| output::write_scan(w, &result))?;
            let mask = saturation_mask(&result, DEFAULT_SATURATION_LIMIT);
            let summary = ScanSummary {
                axis1: grid.axis1.axis,
                axis2: grid.axis2.axis,
                shape: grid.shape(),
                n_nodes: result.rows.len(),
                saturation_limit: DEFAULT_SATURATION_LIMIT,
                n_saturated: mask.iter().filter(|&&m| m).count(),
                failures: result
                    .failures()
                    .into_iter()
                    .map(|(i, e)| NodeFailure {
                        index: i,
                        v1: result.rows[i].v1,
                        v2: result.rows[i].v2,
                        error: e.to_string(),
                    })
                    .collect(),
            };
            for f in &summary.failures {
                log::warn!("node {} ({}, {}) failed: {}", f.index, f.v1, f.v2, f.error);
            }
            write_json(&paths[1], &sidecar(to_value(&summary)))?;
        }
        Mode::Friction => {
            let grid = cfg
                .grid
                .ok_or_else(|| CliError::Usage("friction mode needs a [grid] section".into()))?;
            let (da, dc) = match (grid.axis1.axis, grid.axis2.axis) {
                (ScanAxis::DeltaA, ScanAxis::DeltaC) => (grid.axis1.values(), grid.axis2.values()),
                (ScanAxis::DeltaC, ScanAxis::DeltaA) => (grid.axis2.values(), grid.axis1.values()),
                _ => {
                    return Err(CliError::Usage(
                        "friction maps need grid axes delta_a and delta_c".into(),
                    ))
                }
            };
            let progress = Progress::new("friction", "nodes", out.progress);
            let map = friction_map_with_progress(&da, &dc, &cfg.system, &cfg.friction, &|d, t| {
                progress.update(d, t)
            })?;
            write_file(&paths[0], |w| output::write_friction_map(w, &map))?;
            let summary = FrictionSummary {
                shape: (da.len(), dc.len()),
                n_nodes: map.nodes.len(),
                n_nonlinear: map.nodes.iter().filter(|n| n.linear == Some(false)).count(),
                failures: map
                    .nodes
                    .iter()
                    .enumerate()
                    .filter_map(|(i, n)| {
                        n.error.as_ref().map(|e| NodeFailure {
                            index: i,
                            v1: n.delta_a,
                            v2: n.delta_c,
                            error: e.clone(),
                        })
                    })
                    .collect(),
            };
            write_json(&paths[1], &sidecar(to_value(&summary)))?;
        }
        Mode::Hist => {
            let t_snapshot = cfg.histogram.t_snapshot.unwrap_or(cfg.ensemble.t_final);
            if out.progress {
                eprintln!("[hist] {} trajectories to t = {t_snapshot}", cfg.ensemble.n_traj);
            }
            let h = position_histogram(
                &cfg.system,
                &cfg.initial,
                &cfg.ensemble,
                t_snapshot,
                cfg.histogram.n_bins,
            )?;
            write_file(&paths[0], |w| output::write_histogram(w, &h))?;
            let summary = HistSummary {
                t_snapshot,
                n_bins: h.counts.len(),
                total: h.total(),
                n_excluded: h.n_excluded,
                mean_alpha: h.mean_alpha,
                mean_alpha_re_pos: h.mean_alpha_re_pos,
                mean_alpha_re_neg: h.mean_alpha_re_neg,
            };
            write_json(&paths[1], &sidecar(to_value(&summary)))?;
        }
    }
    Ok(paths)
}
