//! Two-parameter grid sweeps of ensemble observables.
//!
//! Every node runs an independent ensemble whose seed is derived from the
//! global seed and the node's absolute (quantized) coordinates, so a node
//! gives the same numbers whatever grid it is part of.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleError, EnsembleStats, InitialConditions};
use crate::params::{SystemParams, TransversePump};

/// Default limit on `s·⟨|α|²⟩` for the low-saturation mask.
pub const DEFAULT_SATURATION_LIMIT: f64 = 0.1;

/// Axis values are quantized to this resolution before seeding.
const SEED_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unknown scan axis `{0}` (expected delta_a, delta_c, eta_l or eta_eff)")]
    UnknownAxis(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    DeltaA,
    DeltaC,
    EtaL,
    EtaEff,
}

impl ScanAxis {
    pub fn name(self) -> &'static str {
        match self {
            ScanAxis::DeltaA => "delta_a",
            ScanAxis::DeltaC => "delta_c",
            ScanAxis::EtaL => "eta_l",
            ScanAxis::EtaEff => "eta_eff",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ScanAxis::DeltaA => 1,
            ScanAxis::DeltaC => 2,
            ScanAxis::EtaL => 3,
            ScanAxis::EtaEff => 4,
        }
    }

    /// Sets this axis' parameter on `p`.
    pub fn apply(self, p: &mut SystemParams, value: f64) {
        match self {
            ScanAxis::DeltaA => p.delta_a = value,
            ScanAxis::DeltaC => p.delta_c = value,
            ScanAxis::EtaL => p.eta_l = value,
            ScanAxis::EtaEff => p.pump = TransversePump::EtaEff(value),
        }
    }
}

impl fmt::Display for ScanAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanAxis {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delta_a" => Ok(ScanAxis::DeltaA),
            "delta_c" => Ok(ScanAxis::DeltaC),
            "eta_l" => Ok(ScanAxis::EtaL),
            "eta_eff" => Ok(ScanAxis::EtaEff),
            other => Err(ScanError::UnknownAxis(other.to_string())),
        }
    }
}

/// Inclusive range `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: ScanAxis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn new(axis: ScanAxis, start: f64, stop: f64, step: f64) -> Self {
        AxisSpec {
            axis,
            start,
            stop,
            step,
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let name = self.axis.name();
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(ScanError::InvalidGrid(format!("{name}: range must be finite")));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ScanError::InvalidGrid(format!(
                "{name}: step {} must be > 0",
                self.step
            )));
        }
        if self.stop < self.start {
            return Err(ScanError::InvalidGrid(format!(
                "{name}: empty range {}..{}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    /// Node values, computed as `start + i·step` to avoid accumulated error.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Two axes; `axis1` is the outer (slow) index of the row-major node order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ScanError> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.axis1.axis == self.axis2.axis {
            return Err(ScanError::InvalidGrid(format!(
                "both axes are {}",
                self.axis1.axis
            )));
        }
        Ok(())
    }

    /// Node coordinates in row-major order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let v1 = self.axis1.values();
        let v2 = self.axis2.values();
        v1.iter().flat_map(|&a| v2.iter().map(move |&b| (a, b))).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.values().len(), self.axis2.values().len())
    }

    pub fn params_at(&self, base: &SystemParams, v1: f64, v2: f64) -> SystemParams {
        let mut p = *base;
        self.axis1.axis.apply(&mut p, v1);
        self.axis2.axis.apply(&mut p, v2);
        p
    }

    /// Ensemble seed of the node at `(v1, v2)`.
    pub fn node_seed(&self, global_seed: u64, v1: f64, v2: f64) -> u64 {
        let mut coords = [(self.axis1.axis, v1), (self.axis2.axis, v2)];
        coords.sort_by_key(|(axis, _)| axis.tag());
        let mut h = splitmix64(global_seed);
        for (axis, v) in coords {
            let q = (v / SEED_QUANTUM).round() as i64;
            h = splitmix64(h ^ axis.tag());
            h = splitmix64(h ^ q as u64);
        }
        h
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Observables of one grid node. Observables are `None` when the node failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub v1: f64,
    pub v2: f64,
    pub seed: u64,
    pub intensity: Option<f64>,
    pub intensity_err: Option<f64>,
    /// Steady kinetic energy in `ħω_R`.
    pub e_kin: Option<f64>,
    pub e_kin_err: Option<f64>,
    /// Steady kinetic energy in `ħκ`.
    pub e_kin_kappa: Option<f64>,
    pub bunching: Option<f64>,
    pub bunching_err: Option<f64>,
    pub cooling_time: Option<f64>,
    pub saturation: Option<f64>,
    pub n_excluded: usize,
    pub error: Option<String>,
}

impl ScanRow {
    fn from_stats(v1: f64, v2: f64, seed: u64, kappa: f64, st: &EnsembleStats) -> Self {
        ScanRow {
            v1,
            v2,
            seed,
            intensity: Some(st.steady.intensity.mean),
            intensity_err: Some(st.steady.intensity.std_err),
            e_kin: Some(st.steady.e_kin.mean),
            e_kin_err: Some(st.steady.e_kin.std_err),
            e_kin_kappa: Some(st.steady.e_kin.mean / kappa),
            bunching: Some(st.steady.bunching.mean),
            bunching_err: Some(st.steady.bunching.std_err),
            cooling_time: st.cooling_time,
            saturation: Some(st.saturation),
            n_excluded: st.n_excluded,
            error: None,
        }
    }

    fn failed(v1: f64, v2: f64, seed: u64, err: &EnsembleError) -> Self {
        let n_excluded = match err {
            EnsembleError::TooManyExclusions { excluded, .. } => *excluded,
            _ => 0,
        };
        ScanRow {
            v1,
            v2,
            seed,
            intensity: None,
            intensity_err: None,
            e_kin: None,
            e_kin_err: None,
            e_kin_kappa: None,
            bunching: None,
            bunching_err: None,
            cooling_time: None,
            saturation: None,
            n_excluded,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub grid: GridSpec,
    pub global_seed: u64,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    /// `(row index, message)` of every failed node.
    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.error.as_deref().map(|e| (i, e)))
            .collect()
    }
}

pub fn run_scan(
    grid: &GridSpec,
    base: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
) -> Result<ScanResult, ScanError> {
    run_scan_with_progress(grid, base, ic, cfg, &|_, _| {})
}

/// As [`run_scan`], calling `progress(done, total)` as nodes finish.
/// `cfg.seed` is the global seed.
pub fn run_scan_with_progress(
    grid: &GridSpec,
    base: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ScanResult, ScanError> {
    grid.validate()?;
    ic.validate()?;
    cfg.validate()?;
    let nodes = grid.nodes();
    let total = nodes.len();
    let done = AtomicUsize::new(0);
    let rows = nodes
        .par_iter()
        .map(|&(v1, v2)| {
            let p = grid.params_at(base, v1, v2);
            let seed = grid.node_seed(cfg.seed, v1, v2);
            let node_cfg = EnsembleConfig { seed, ..*cfg };
            let row = match run_ensemble(&p, ic, &node_cfg) {
                Ok(st) => ScanRow::from_stats(v1, v2, seed, p.kappa, &st),
                Err(e) => {
                    log::warn!(
                        "node {}={v1}, {}={v2} failed: {e}",
                        grid.axis1.axis,
                        grid.axis2.axis
                    );
                    ScanRow::failed(v1, v2, seed, &e)
                }
            };
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            row
        })
        .collect();
    Ok(ScanResult {
        grid: *grid,
        global_seed: cfg.seed,
        rows,
    })
}

/// Flags nodes whose `s·⟨|α|²⟩` is not below `limit`. Failed nodes are not
/// flagged.
///
/// # Panics
/// If `limit` is not positive.
pub fn saturation_mask(r: &ScanResult, limit: f64) -> Vec<bool> {
    assert!(limit > 0.0, "saturation limit must be > 0, got {limit}");
    r.rows
        .iter()
        .map(|row| row.saturation.is_some_and(|s| s >= limit))
        .collect()
}
